"""Koopman MPC: dense condensation of the lifted predictor and the receding-horizon policy."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .edmd import LiftedPredictor
from .lifting import lift
from .qp import AdmmSolver, QpSolution

log = logging.getLogger(__name__)


@dataclass
class MpcWeights:
    Q: np.ndarray
    Q_N: np.ndarray
    R: float
    horizon: int = 50
    u_min: float = -0.1
    u_max: float = 0.1
    z_min: Optional[np.ndarray] = None
    z_max: Optional[np.ndarray] = None

    def __post_init__(self):
        self.Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        self.Q_N = np.atleast_2d(np.asarray(self.Q_N, dtype=float))
        for name in ("Q", "Q_N"):
            m = getattr(self, name)
            if m.shape[0] != m.shape[1] or not np.allclose(m, m.T, atol=1e-12):
                raise ValueError(f"{name} must be square and symmetric")
            if np.min(np.linalg.eigvalsh(m)) < -1e-9 * max(1.0, np.abs(m).max()):
                raise ValueError(f"{name} must be positive semidefinite")
        if self.Q.shape != self.Q_N.shape:
            raise ValueError("Q and Q_N must have the same shape")
        if not self.R > 0:
            raise ValueError("R must be > 0")
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ValueError("horizon must be a positive integer")
        self.horizon = int(self.horizon)
        if not self.u_min < self.u_max:
            raise ValueError("u_min must be < u_max")

    @property
    def has_state_bounds(self) -> bool:
        return any(
            b is not None and np.any(np.isfinite(b)) for b in (self.z_min, self.z_max)
        )


@dataclass
class DenseMpcProblem:
    """Condensed QP data over the input sequence ``U = [u_0 .. u_{Np-1}]``.

    Row block ``i`` of ``A_hat``/``B_hat`` predicts ``z_{i+1}``.
    """

    A_hat: np.ndarray
    B_hat: np.ndarray
    C_hat: np.ndarray
    Q_hat: np.ndarray
    R_hat: np.ndarray
    H: np.ndarray
    weights: MpcWeights
    n_outputs: int
    A_c: np.ndarray
    # cached products for the linear term: q = F (Phi z0 - r)
    F: np.ndarray = field(repr=False, default=None)
    Phi: np.ndarray = field(repr=False, default=None)

    @property
    def horizon(self) -> int:
        return self.weights.horizon

    def bounds(self, z0) -> tuple[np.ndarray, np.ndarray]:
        """Constraint bounds for ``A_c U`` given the current lifted state."""
        w = self.weights
        np_ = self.horizon
        lo_u = np.full(np_, w.u_min)
        hi_u = np.full(np_, w.u_max)
        if not w.has_state_bounds:
            return lo_u, hi_u
        n = self.A_hat.shape[1]
        free = self.A_hat @ np.asarray(z0, dtype=float)
        zmin = np.full(n, -np.inf) if w.z_min is None else np.broadcast_to(w.z_min, (n,))
        zmax = np.full(n, np.inf) if w.z_max is None else np.broadcast_to(w.z_max, (n,))
        lo_z = np.tile(zmin, np_) - free
        hi_z = np.tile(zmax, np_) - free
        return np.concatenate([lo_z, lo_u]), np.concatenate([hi_z, hi_u])

    def objective(self, U, z0, r_stack) -> float:
        """Dense objective ``1/2 U'HU + q'U`` (equal to half the tracking cost up to a constant)."""
        U = np.asarray(U, dtype=float)
        return float(0.5 * U @ self.H @ U + linear_term(self, z0, r_stack) @ U)


def prediction_matrices(A, B, horizon: int) -> tuple[np.ndarray, np.ndarray]:
    """``A_hat = [A; A^2; ..; A^Np]`` and block lower-triangular ``B_hat`` with blocks ``A^(i-j) B``."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    n, nu = B.shape
    powers = [np.eye(n)]
    for _ in range(horizon):
        powers.append(A @ powers[-1])
    A_hat = np.vstack(powers[1:])
    impulse = [p @ B for p in powers[:horizon]]
    B_hat = np.zeros((horizon * n, horizon * nu))
    for i in range(horizon):
        for j in range(i + 1):
            B_hat[i * n : (i + 1) * n, j * nu : (j + 1) * nu] = impulse[i - j]
    return A_hat, B_hat


def condense(pred: LiftedPredictor, w: MpcWeights) -> DenseMpcProblem:
    """Eliminate the predicted states to get a QP in the inputs alone.

    The output weight is ``Q`` on steps ``1 .. Np-1`` and ``Q_N`` on the last
    step; the error at step 0 does not depend on ``U``.
    """
    ny = pred.C.shape[0]
    if w.Q.shape != (ny, ny):
        raise ValueError(f"Q is {w.Q.shape}, predictor has {ny} outputs")
    np_ = w.horizon
    A_hat, B_hat = prediction_matrices(pred.A, pred.B, np_)
    C_hat = np.kron(np.eye(np_), pred.C)
    Q_hat = scipy.linalg.block_diag(*([w.Q] * (np_ - 1) + [w.Q_N]))
    R_hat = w.R * np.eye(np_)
    CB = C_hat @ B_hat
    F = CB.T @ Q_hat
    H = R_hat + F @ CB
    H = 0.5 * (H + H.T)
    if w.has_state_bounds:
        A_c = np.vstack([B_hat, np.eye(np_)])
    else:
        A_c = np.eye(np_)
    return DenseMpcProblem(
        A_hat=A_hat, B_hat=B_hat, C_hat=C_hat, Q_hat=Q_hat, R_hat=R_hat, H=H, weights=w,
        n_outputs=ny, A_c=A_c, F=F, Phi=C_hat @ A_hat,
    )


def linear_term(prob: DenseMpcProblem, z0, r_stack) -> np.ndarray:
    """``q = B_hat' C_hat' Q_hat (C_hat A_hat z0 - r)`` for references ``r_1 .. r_Np`` stacked.

    Expanding ``sum e_k' Q e_k`` with ``e = r - C_hat (A_hat z0 + B_hat U)``
    gives ``U'HU + 2 q'U + const``; halving matches the ``1/2 U'HU`` form.
    """
    r_stack = np.asarray(r_stack, dtype=float).reshape(-1)
    if r_stack.shape[0] != prob.n_outputs * prob.horizon:
        raise ValueError(f"reference stack has length {r_stack.shape[0]}, need {prob.n_outputs * prob.horizon}")
    return prob.F @ (prob.Phi @ np.asarray(z0, dtype=float) - r_stack)


class MpcController:
    """Receding-horizon policy ``policy(t, y, r) -> u``.

    Parameters
    ----------
    prob : DenseMpcProblem
    reference : ReferenceTrajectory, ndarray of shape (T, ny), or None
        A :class:`ReferenceTrajectory` is tiled over all pendulums and extended
        past its end by its own rule; a plain array holds its last row; ``None``
        is the zero reference.
    lift_fn : callable
        Maps a measured output to the predictor's lifted state.
    """

    def __init__(
        self,
        prob: DenseMpcProblem,
        reference=None,
        dt: Optional[float] = None,
        lift_fn: Callable = lift,
        warm_start: bool = True,
        **solver_options,
    ):
        self.prob = prob
        self.reference = reference
        self.dt = dt if dt is not None else getattr(reference, "dt", None)
        self.lift_fn = lift_fn
        self.warm_start = warm_start
        opts = {"max_iter": 4000, "tol_abs": 1e-6, "tol_rel": 1e-6}
        opts.update(solver_options)
        self.solver = AdmmSolver(prob.H, prob.A_c, **opts)
        self._prev: Optional[QpSolution] = None
        self.stats: list[dict] = []
        self.events: list[str] = []

    def reset(self):
        self._prev = None
        self.stats.clear()
        self.events.clear()

    def reference_stack(self, k: int) -> np.ndarray:
        """Stacked references ``r_{k+1} .. r_{k+Np}``."""
        np_, ny = self.prob.horizon, self.prob.n_outputs
        ref = self.reference
        if ref is None:
            return np.zeros(np_ * ny)
        if hasattr(ref, "window"):
            win = ref.window(k + 1, np_)
            return np.tile(win, (1, ny // 2)).reshape(-1)
        ref = np.asarray(ref, dtype=float)
        idx = np.minimum(np.arange(k + 1, k + 1 + np_), len(ref) - 1)
        return ref[idx].reshape(-1)

    def _step_index(self, t: float) -> int:
        if self.dt is None:
            return 0
        return int(round(t / self.dt))

    def solve_at(self, t: float, y) -> QpSolution:
        z0 = self.lift_fn(np.asarray(y, dtype=float))
        k = self._step_index(t)
        q = linear_term(self.prob, z0, self.reference_stack(k))
        lower, upper = self.prob.bounds(z0)
        warm = None
        if self.warm_start and self._prev is not None:
            xs = np.append(self._prev.x[1:], self._prev.x[-1])
            warm = (xs, None)
            if self.prob.A_c.shape[0] == self.prob.horizon:
                warm = (xs, np.append(self._prev.y[1:], self._prev.y[-1]))
        start = time.perf_counter()
        sol = self.solver.solve(q, lower, upper, warm_start=warm)
        elapsed = time.perf_counter() - start
        self.stats.append(
            {"t": t, "iterations": sol.iterations, "primal_residual": sol.primal_residual,
             "dual_residual": sol.dual_residual, "wall_time": elapsed, "status": sol.status}
        )
        if sol.status != "solved":
            msg = f"QP {sol.status} at t={t:.3f} after {sol.iterations} iterations; applying best iterate"
            log.warning(msg)
            self.events.append(msg)
        self._prev = sol
        return sol

    def __call__(self, t, y, ref=None) -> float:
        y = np.asarray(y, dtype=float)
        if y.ndim != 1:
            raise ValueError("MPC policy handles one chain at a time")
        sol = self.solve_at(t, y)
        w = self.prob.weights
        return float(np.clip(sol.x[0], w.u_min, w.u_max))


def mpc_policy(prob: DenseMpcProblem, reference=None, **kwargs) -> MpcController:
    return MpcController(prob, reference, **kwargs)
