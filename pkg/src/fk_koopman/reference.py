"""Virtual-leader reference trajectories for the synchronization tasks."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .integrator import rk4_step
from .model import ChainParams, drift

ReferenceKind = Literal["stable_eq", "unstable_eq", "periodic"]

# integration substeps per reference sample for the periodic leader
LEADER_SUBSTEPS = 10


@dataclass
class ReferenceTrajectory:
    """Samples ``[phi*, dphi*]`` of a single uncoupled leader pendulum at spacing ``dt``."""

    dt: float
    samples: np.ndarray
    kind: ReferenceKind
    params: ChainParams | None = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float).reshape(-1, 2)

    def __len__(self) -> int:
        return len(self.samples)

    def window(self, start: int, length: int) -> np.ndarray:
        """``length`` samples from index ``start``, extended past the end if needed.

        Equilibrium references hold their last sample; a periodic leader is
        integrated further with the undamped drift.
        """
        stop = start + length
        if stop > len(self.samples):
            self.extend(stop - len(self.samples))
        return self.samples[start:stop]

    def extend(self, count: int) -> None:
        if count <= 0:
            return
        if self.kind == "periodic":
            if self.params is None:
                raise ValueError("periodic reference needs params to extend")
            more = _integrate_leader(self.samples[-1], count, self.dt, self.params)
            self.samples = np.vstack([self.samples, more[1:]])
        else:
            self.samples = np.vstack([self.samples, np.repeat(self.samples[-1:], count, axis=0)])

    def stacked(self, n: int) -> np.ndarray:
        """Samples repeated for every pendulum, shape ``(T, 2n)``."""
        return np.tile(self.samples, (1, n))


def constant_reference(kind: ReferenceKind, n_samples: int, dt: float) -> ReferenceTrajectory:
    if kind == "stable_eq":
        sample = [0.0, 0.0]
    elif kind == "unstable_eq":
        sample = [np.pi, 0.0]
    else:
        raise ValueError(f"no constant reference of kind {kind!r}")
    return ReferenceTrajectory(dt, np.tile(sample, (n_samples, 1)), kind)


def _integrate_leader(x0, n_steps: int, dt: float, params: ChainParams) -> np.ndarray:
    h = dt / LEADER_SUBSTEPS
    out = np.empty((n_steps + 1, 2))
    x = np.asarray(x0, dtype=float).copy()
    out[0] = x

    def f(z):
        return drift(z, params, pivot_damping=0.0)

    for k in range(n_steps):
        for _ in range(LEADER_SUBSTEPS):
            x = rk4_step(f, x, h)
        out[k + 1] = x
    return out


def periodic_reference(x0, duration: float, dt: float, params: ChainParams) -> ReferenceTrajectory:
    """Undamped single-pendulum orbit from ``x0`` sampled every ``dt`` for ``duration`` seconds."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    if duration < dt:
        raise ValueError("duration must be at least dt")
    n_steps = int(round(duration / dt))
    return ReferenceTrajectory(dt, _integrate_leader(x0, n_steps, dt, params), "periodic", params)


def separatrix_energy(params: ChainParams) -> float:
    """Energy of the upright rest state; leaders above it revolve."""
    return params.mgl
