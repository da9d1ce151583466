"""Fixed-step RK4 simulation of the chain under zero-order-hold control."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

from .model import ChainParams, CouplingStructure, check_state, vector_field

log = logging.getLogger(__name__)

BLOWUP_LIMIT = 1e6

# policy(t, x, ref) -> torque; x may be a batch (M, 2N), then torque is (M,)
Policy = Callable[[float, np.ndarray, Optional[np.ndarray]], Any]


class IntegrationError(FloatingPointError):
    """Raised when the vector field returns non-finite values."""


@dataclass(frozen=True)
class SimConfig:
    control_dt: float = 0.005
    substeps_per_control: int = 10
    duration: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if not self.control_dt > 0:
            raise ValueError("control_dt must be > 0")
        if int(self.substeps_per_control) != self.substeps_per_control or self.substeps_per_control < 1:
            raise ValueError("substeps_per_control must be a positive integer")
        if self.duration < self.control_dt:
            raise ValueError("duration must be at least one control period")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.control_dt))


@dataclass
class Trajectory:
    """States sampled at control-period boundaries and the inputs held between them.

    ``states`` has shape ``(T + 1, 2N)``, ``inputs`` shape ``(T,)`` and
    ``references`` (if present) shape ``(T + 1, 2)``.
    """

    dt: float
    states: np.ndarray
    inputs: np.ndarray
    references: Optional[np.ndarray] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        self.inputs = np.asarray(self.inputs, dtype=float).reshape(-1)
        if self.states.ndim != 2 or len(self.states) != len(self.inputs) + 1:
            raise ValueError(
                f"need len(states) == len(inputs) + 1, got {self.states.shape} and {self.inputs.shape}"
            )
        if self.references is not None:
            self.references = np.asarray(self.references, dtype=float)
            if self.references.shape != (len(self.states), 2):
                raise ValueError(f"references must have shape ({len(self.states)}, 2)")

    @property
    def n_pendulums(self) -> int:
        return self.states.shape[1] // 2

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(len(self.states))

    @property
    def angles(self) -> np.ndarray:
        return self.states[:, 0::2]

    @property
    def rates(self) -> np.ndarray:
        return self.states[:, 1::2]


def rk4_step(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray, h: float) -> np.ndarray:
    """One classical Runge-Kutta step of size ``h`` for ``xdot = f(x)``."""
    k1 = f(x)
    if not np.all(np.isfinite(k1)):
        raise IntegrationError(f"non-finite derivative at state {x!r}")
    k2 = f(x + 0.5 * h * k1)
    k3 = f(x + 0.5 * h * k2)
    k4 = f(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_held(x, u, params: ChainParams, coupling: CouplingStructure, dt: float, substeps: int):
    """Advance the chain by one control period with the torque ``u`` held constant."""
    h = dt / substeps

    def f(z):
        return vector_field(z, u, params, coupling)

    for _ in range(substeps):
        x = rk4_step(f, x, h)
    return x


def simulate(
    x0,
    policy: Policy,
    cfg: SimConfig,
    params: ChainParams,
    coupling: CouplingStructure,
    reference=None,
    metadata: Optional[dict] = None,
):
    """Closed-loop simulation with the policy queried once per control period.

    Parameters
    ----------
    x0 : array_like, shape (2N,) or (M, 2N)
        Initial state.  A 2-D array simulates ``M`` independent chains in one
        vectorised pass and returns a list of trajectories.
    policy : callable
        ``policy(t, x, r) -> u``.  For batched runs it receives the full
        ``(M, 2N)`` block and must return ``M`` torques.
    reference : array_like, shape (>= T + 1, 2), optional
        Reference samples, passed to the policy and recorded.

    Returns
    -------
    Trajectory or list of Trajectory
        A run that blows up (``max |x| > 1e6``) or whose policy raises is
        truncated and carries ``metadata["error"]``.
    """
    x0 = check_state(x0, coupling.n)
    batched = x0.ndim == 2
    xs = np.atleast_2d(x0).copy()
    m = xs.shape[0]
    steps = cfg.n_steps
    ref = None
    if reference is not None:
        ref = np.asarray(reference, dtype=float)
        if len(ref) < steps + 1:
            raise ValueError(f"reference has {len(ref)} samples, need {steps + 1}")
    states = np.empty((steps + 1, m, xs.shape[1]))
    inputs = np.empty((steps, m))
    states[0] = xs
    alive = np.ones(m, dtype=bool)
    end = np.full(m, steps)
    errors: list[Optional[str]] = [None] * m

    def stop(rows, k, message):
        for j in np.flatnonzero(rows):
            errors[j] = message
            end[j] = k
        alive[rows] = False

    for k in range(steps):
        if not alive.any():
            break
        t = k * cfg.control_dt
        r = None if ref is None else ref[k]
        try:
            u = np.asarray(policy(t, xs if batched else xs[0], r), dtype=float)
        except Exception as exc:  # policy failure truncates the run
            log.warning("policy failed at t=%.4f: %s", t, exc)
            stop(alive.copy(), k, f"policy failure at step {k}: {exc}")
            break
        u = np.broadcast_to(u, (m,)).copy()
        bad_u = alive & ~np.isfinite(u)
        if bad_u.any():
            stop(bad_u, k, f"non-finite torque at step {k}")
        u[~alive] = 0.0
        nxt = integrate_held(xs, u, params, coupling, cfg.control_dt, cfg.substeps_per_control)
        blown = alive & ~(np.max(np.abs(nxt), axis=1) <= BLOWUP_LIMIT)
        if blown.any():
            log.warning("state blow-up at t=%.4f in %d run(s)", t, int(blown.sum()))
            stop(blown, k, f"state blow-up at step {k}")
        xs = np.where(alive[:, None], nxt, xs)
        states[k + 1] = xs
        inputs[k] = u

    meta_base = {"seed": cfg.seed, "params": params.as_dict()}
    if metadata:
        meta_base.update(metadata)
    out = []
    for j in range(m):
        e = int(end[j])
        meta = dict(meta_base)
        if errors[j] is not None:
            meta["error"] = errors[j]
        refs = None if ref is None else ref[: e + 1, :2]
        out.append(Trajectory(cfg.control_dt, states[: e + 1, j], inputs[:e, j], refs, meta))
    return out if batched else out[0]
