"""Extended DMD with an input channel: data assembly, least-squares fit, rollout."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .lifting import PER_PENDULUM, lift, output_matrix

log = logging.getLogger(__name__)

DEFAULT_RCOND = 1e-10


@dataclass
class DataMatrices:
    """Snapshot matrices; columns are samples."""

    X: np.ndarray
    X_lift: np.ndarray
    Y_lift: np.ndarray
    U: np.ndarray

    @property
    def n_samples(self) -> int:
        return self.X.shape[1]


@dataclass
class LiftedPredictor:
    """Discrete-time lifted model ``z+ = A z + B u``, ``y = C z``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    dt: float
    n_pendulums: int
    report: dict = field(default_factory=dict)

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.B = np.asarray(self.B, dtype=float).reshape(-1, 1)
        self.C = np.asarray(self.C, dtype=float)
        n = self.A.shape[0]
        if self.A.shape != (n, n) or self.B.shape != (n, 1) or self.C.shape[1] != n:
            raise ValueError(
                f"inconsistent predictor shapes A{self.A.shape} B{self.B.shape} C{self.C.shape}"
            )

    @property
    def lifted_dim(self) -> int:
        return self.A.shape[0]


def assemble(trajectories: Sequence, lift_fn: Callable = lift) -> DataMatrices:
    """Stack ``(y, u, y+)`` pairs from every trajectory without crossing run boundaries."""
    if not trajectories:
        raise ValueError("no trajectories to assemble")
    xs, xps, us = [], [], []
    for traj in trajectories:
        states = np.asarray(traj.states)
        if len(states) < 2:
            raise ValueError("each trajectory needs at least 2 states")
        xs.append(states[:-1])
        xps.append(states[1:])
        us.append(np.asarray(traj.inputs, dtype=float).reshape(-1))
    X = np.concatenate(xs).T
    Xp = np.concatenate(xps).T
    return DataMatrices(
        X=X,
        X_lift=lift_fn(X.T).T,
        Y_lift=lift_fn(Xp.T).T,
        U=np.concatenate(us)[None, :],
    )


def fit_matrices(
    X_lift: np.ndarray, Y_lift: np.ndarray, U: np.ndarray, ridge: float = 0.0, rcond: float = DEFAULT_RCOND
):
    """Solve ``min ||Y_lift - A X_lift - B U||_F`` for ``[A B]``.

    With ``ridge == 0`` this is ``Y_lift @ pinv([X_lift; U])`` using an SVD
    with relative singular-value cutoff ``rcond``; a positive ``ridge`` adds
    ``ridge * ||[A B]||_F^2`` to the objective.

    Returns
    -------
    A, B, info
        ``info`` holds the residual Frobenius norm, condition number and rank.
    """
    n = X_lift.shape[0]
    phi = np.vstack([X_lift, U])
    lhs, rhs = phi.T, Y_lift.T
    if ridge > 0:
        lhs = np.vstack([lhs, np.sqrt(ridge) * np.eye(phi.shape[0])])
        rhs = np.vstack([rhs, np.zeros((phi.shape[0], n))])
    sol, _, rank, sv = np.linalg.lstsq(lhs, rhs, rcond=rcond)
    ab = sol.T
    A, B = ab[:, :n], ab[:, n:]
    resid = float(np.linalg.norm(Y_lift - A @ X_lift - B @ U))
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf")
    return A, B, {"residual": resid, "condition": cond, "rank": int(rank), "n_samples": phi.shape[1]}


def fit(data: DataMatrices, dt: float, ridge: float = 0.0, rcond: float = DEFAULT_RCOND) -> LiftedPredictor:
    """Fit the lifted predictor; ``C`` is the structural selection matrix."""
    n_lift = data.X_lift.shape[0]
    if n_lift % PER_PENDULUM:
        raise ValueError(f"lifted dimension {n_lift} is not a multiple of {PER_PENDULUM}")
    if data.n_samples < n_lift + 1:
        warnings.warn(
            f"only {data.n_samples} samples for {n_lift + 1} regressors; fit is underdetermined",
            stacklevel=2,
        )
    A, B, info = fit_matrices(data.X_lift, data.Y_lift, data.U, ridge=ridge, rcond=rcond)
    if info["rank"] < n_lift + 1:
        log.warning("rank-deficient EDMD data (rank %d, cond %.3g)", info["rank"], info["condition"])
    n = n_lift // PER_PENDULUM
    info["ridge"] = ridge
    return LiftedPredictor(A, B, output_matrix(n), dt, n, report=info)


def rollout(A, B, z0, u_seq) -> np.ndarray:
    """Lifted states ``z_0 .. z_T`` under inputs ``u_0 .. u_{T-1}``."""
    u_seq = np.asarray(u_seq, dtype=float).reshape(-1)
    z = np.empty((len(u_seq) + 1, len(z0)))
    z[0] = z0
    b = np.asarray(B).reshape(-1)
    for k, u in enumerate(u_seq):
        z[k + 1] = A @ z[k] + b * u
    return z


def predict(pred: LiftedPredictor, y0, u_seq, lift_fn: Callable = lift) -> np.ndarray:
    """Open-loop output prediction ``yhat_0 .. yhat_T`` starting from ``z_0 = lift(y0)``."""
    z = rollout(pred.A, pred.B, lift_fn(np.asarray(y0, dtype=float)), u_seq)
    return z @ pred.C.T


def one_step_rmse(pred: LiftedPredictor, data: DataMatrices) -> tuple[float, float]:
    """RMSE of one-step output predictions on ``data`` and the RMS of the true outputs."""
    y_next = pred.C @ data.Y_lift
    y_hat = pred.C @ (pred.A @ data.X_lift + pred.B @ data.U)
    return float(np.sqrt(np.mean((y_hat - y_next) ** 2))), float(np.sqrt(np.mean(y_next**2)))
