"""Per-pendulum trigonometric observables and the structural output matrix."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PER_PENDULUM = 6
BLOCK_LABELS = ("phi", "dphi", "sin_phi", "cos_phi", "dphi_sin_phi", "dphi_cos_phi")


@dataclass(frozen=True)
class ObservableDictionary:
    n_pendulums: int
    per_pendulum_count: int = PER_PENDULUM

    @property
    def total_dim(self) -> int:
        return self.per_pendulum_count * self.n_pendulums

    @property
    def descriptor(self) -> list[str]:
        return [f"{label}_{i + 1}" for i in range(self.n_pendulums) for label in BLOCK_LABELS]


def lift(y) -> np.ndarray:
    """Map stacked outputs ``(..., 2N)`` to observables ``(..., 6N)``.

    Each pendulum contributes ``[phi, dphi, sin phi, cos phi, dphi sin phi, dphi cos phi]``.
    """
    y = np.asarray(y, dtype=float)
    phi = y[..., 0::2]
    dphi = y[..., 1::2]
    s = np.sin(phi)
    c = np.cos(phi)
    z = np.stack([phi, dphi, s, c, dphi * s, dphi * c], axis=-1)
    return z.reshape(*y.shape[:-1], PER_PENDULUM * phi.shape[-1])


def output_matrix(n: int) -> np.ndarray:
    """Selection matrix ``C`` with ``C @ lift(y) == y``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    c = np.zeros((2 * n, PER_PENDULUM * n))
    for i in range(n):
        c[2 * i, PER_PENDULUM * i] = 1.0
        c[2 * i + 1, PER_PENDULUM * i + 1] = 1.0
    return c
