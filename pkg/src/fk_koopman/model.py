"""Frenkel-Kontorova pendulum chain: parameters, coupling, dynamics and energies.

The chain state is stored interleaved, ``x = [phi_1, dphi_1, ..., phi_N, dphi_N]``.
Every function here accepts a single state of shape ``(2N,)`` or a batch of
shape ``(M, 2N)``; batching is what makes identification-data generation
affordable.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Literal

import numpy as np

EquilibriumKind = Literal["stable", "unstable"]


@dataclass(frozen=True)
class ChainParams:
    """Physical constants of the pendulum chain (SI units).

    ``spring_k`` is a torsional stiffness in N*m/rad.
    """

    inertia: float = 3.82e-4
    mass: float = 0.017
    rod_length: float = 0.15
    gravity: float = 9.81
    spring_k: float = 0.065
    spring_damping: float = 1.70e-3
    pivot_damping: float = 3.75e-4

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not np.isfinite(value) or value <= 0:
                raise ValueError(f"ChainParams.{f.name} must be finite and > 0, got {value!r}")

    @property
    def mgl(self) -> float:
        return self.mass * self.gravity * self.rod_length

    @property
    def gravity_coeff(self) -> float:
        """``m g l / I``, the squared small-angle natural frequency."""
        return self.mgl / self.inertia

    def as_dict(self) -> dict[str, float]:
        return {f.name: float(getattr(self, f.name)) for f in fields(self)}


@dataclass(frozen=True)
class CouplingStructure:
    """Path-graph coupling of an N-pendulum chain actuated at pendulum 1."""

    laplacian: np.ndarray
    selector: np.ndarray
    input_channel: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0]))
    coupling_gains: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0]))

    @property
    def n(self) -> int:
        return self.laplacian.shape[0]

    @property
    def actuation_diag(self) -> np.ndarray:
        return np.diag(self.selector)

    @property
    def coupling_matrix(self) -> np.ndarray:
        """``L kron (G K)``: stacked coupling torques are ``coupling_matrix @ x``."""
        gk = np.outer(self.input_channel, self.coupling_gains)
        return np.kron(self.laplacian, gk)

    @property
    def input_vector(self) -> np.ndarray:
        """``d kron G``."""
        return np.kron(self.selector, self.input_channel)


def build_coupling(n: int, params: ChainParams | None = None) -> CouplingStructure:
    """Build the Laplacian, actuation selector and coupling gains for ``n`` pendulums."""
    if int(n) != n or n < 2:
        raise ValueError(f"a chain needs at least 2 pendulums, got n={n!r}")
    n = int(n)
    params = params or ChainParams()
    lap = 2.0 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)
    lap[0, 0] = lap[-1, -1] = 1.0
    d = np.zeros(n)
    d[0] = 1.0
    return CouplingStructure(
        laplacian=lap,
        selector=d,
        input_channel=np.array([0.0, 1.0]),
        coupling_gains=np.array([params.spring_k, params.spring_damping]),
    )


def check_state(x, n: int | None = None) -> np.ndarray:
    """Validate a chain state (or batch of states) and return it as a float array."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] % 2:
        raise ValueError(f"state length must be even, got shape {x.shape}")
    if n is not None and x.shape[-1] != 2 * n:
        raise ValueError(f"expected state of length {2 * n}, got {x.shape[-1]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("state contains non-finite entries")
    return x


def drift(xi, params: ChainParams, pivot_damping: float | None = None) -> np.ndarray:
    """Uncoupled single-pendulum dynamics ``f(x_i)``.

    ``pivot_damping`` overrides ``params.pivot_damping``; the virtual leader
    uses ``0.0``.
    """
    xi = np.asarray(xi, dtype=float)
    gamma = params.pivot_damping if pivot_damping is None else pivot_damping
    out = np.empty_like(xi)
    out[..., 0] = xi[..., 1]
    out[..., 1] = -params.gravity_coeff * np.sin(xi[..., 0]) - gamma / params.inertia * xi[..., 1]
    return out


def stacked_drift(x, params: ChainParams) -> np.ndarray:
    """``F(x)``: the drift applied to every pendulum of a stacked state."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    out[..., 0::2] = x[..., 1::2]
    out[..., 1::2] = (
        -params.gravity_coeff * np.sin(x[..., 0::2])
        - params.pivot_damping / params.inertia * x[..., 1::2]
    )
    return out


def vector_field(x, u, params: ChainParams, coupling: CouplingStructure) -> np.ndarray:
    """Chain dynamics in Kronecker form.

    ``xdot = F(x) - (1/I) (L kron G K) x + (1/I) (d kron G) u``

    Parameters
    ----------
    x : array_like, shape (2N,) or (M, 2N)
    u : float or array_like, shape (M,)
        Torque on pendulum 1 (N*m).
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 2 * coupling.n:
        raise ValueError(f"state length {x.shape[-1]} does not match N={coupling.n}")
    u = np.asarray(u, dtype=float)
    if u.shape not in ((), x.shape[:-1]):
        raise ValueError(f"input shape {u.shape} incompatible with state batch {x.shape[:-1]}")
    # accumulate torques (N*m) and divide by the inertia once
    torque = x @ (-coupling.coupling_matrix.T)
    torque[..., 1::2] -= params.mgl * np.sin(x[..., 0::2]) + params.pivot_damping * x[..., 1::2]
    torque[..., 1] += u
    out = torque / params.inertia
    out[..., 0::2] = x[..., 1::2]
    return out


def equilibrium(kind: EquilibriumKind, n: int) -> np.ndarray:
    """All-down (``stable``) or all-up (``unstable``) equilibrium of an n-chain."""
    if int(n) != n or n < 2:
        raise ValueError(f"a chain needs at least 2 pendulums, got n={n!r}")
    x = np.zeros(2 * int(n))
    if kind == "unstable":
        x[0::2] = np.pi
    elif kind != "stable":
        raise ValueError(f"unknown equilibrium kind {kind!r}")
    return x


def total_energy(x, params: ChainParams, coupling: CouplingStructure | None = None) -> np.ndarray:
    """Kinetic + gravitational + spring energy, zero at the hanging rest state.

    ``coupling`` is accepted for interface symmetry; the spring term only needs
    the chain ordering and ``params.spring_k``.
    """
    x = np.asarray(x, dtype=float)
    phi, dphi = x[..., 0::2], x[..., 1::2]
    kinetic = 0.5 * params.inertia * np.sum(dphi**2, axis=-1)
    gravity = params.mgl * np.sum(1.0 - np.cos(phi), axis=-1)
    spring = 0.5 * params.spring_k * np.sum(np.diff(phi, axis=-1) ** 2, axis=-1)
    return kinetic + gravity + spring


def relative_dissipation(x, params: ChainParams) -> np.ndarray:
    """Power dissipated in the spring dampers, ``b/2 * sum (dphi_{i+1} - dphi_i)^2``."""
    x = np.asarray(x, dtype=float)
    return 0.5 * params.spring_damping * np.sum(np.diff(x[..., 1::2], axis=-1) ** 2, axis=-1)


def single_pendulum_energy(xi, params: ChainParams) -> np.ndarray:
    """``I dphi^2 / 2 - m g l cos(phi)``; conserved by the undamped drift."""
    xi = np.asarray(xi, dtype=float)
    return 0.5 * params.inertia * xi[..., 1] ** 2 - params.mgl * np.cos(xi[..., 0])
