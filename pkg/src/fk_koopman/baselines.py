"""Identification-data controllers: noisy LQR about an equilibrium and a noisy P-controller.

Neither controller needs an accurate model of the chain; they only keep the
closed loop near the region the lifted predictor has to describe.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .model import ChainParams, CouplingStructure, EquilibriumKind, equilibrium

DEFAULT_U_MAX = 0.1


class CareError(np.linalg.LinAlgError):
    """The Riccati equation has no stabilizing solution for the given data."""


@dataclass(frozen=True)
class LinearizedChain:
    A_tilde: np.ndarray
    B_tilde: np.ndarray
    about: EquilibriumKind


def linearize(params: ChainParams, coupling: CouplingStructure, about: EquilibriumKind = "stable") -> LinearizedChain:
    """Jacobian of the chain dynamics at the hanging or upright equilibrium.

    ``cos(0) = 1`` and ``cos(pi) = -1`` flip the sign of the gravity term.
    """
    sign = {"stable": -1.0, "unstable": 1.0}[about]
    n = coupling.n
    block = np.array([[0.0, 1.0], [sign * params.gravity_coeff, -params.pivot_damping / params.inertia]])
    a = np.kron(np.eye(n), block) - coupling.coupling_matrix / params.inertia
    b = coupling.input_vector.reshape(-1, 1) / params.inertia
    return LinearizedChain(a, b, about)


def _check_stabilizable(A, B, tol=1e-9):
    n = A.shape[0]
    for lam in np.linalg.eigvals(A):
        if lam.real >= -tol:
            m = np.hstack([A - lam * np.eye(n), B.astype(complex)])
            if np.linalg.matrix_rank(m, tol=1e-10 * max(1.0, np.linalg.norm(m))) < n:
                raise CareError(f"(A, B) is not stabilizable: uncontrollable mode {lam:.6g}")


def care_residual(A, B, Q, R, S) -> np.ndarray:
    return A.T @ S + S @ A - S @ B @ np.linalg.solve(R, B.T @ S) + Q


def solve_care(A, B, Q, R, newton_steps: int = 2) -> np.ndarray:
    """Stabilizing solution of ``A'S + SA - S B R^-1 B' S + Q = 0``.

    The stable invariant subspace of the Hamiltonian matrix is found with an
    ordered real Schur form, then refined by Kleinman-Newton iterations.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    n = A.shape[0]
    if np.any(np.linalg.eigvalsh(0.5 * (R + R.T)) <= 0):
        raise CareError("R must be positive definite")
    _check_stabilizable(A, B)

    g = B @ np.linalg.solve(R, B.T)
    ham = np.block([[A, -g], [-Q, -A.T]])
    t, z, sdim = scipy.linalg.schur(ham, output="real", sort="lhp")
    if sdim != n:
        raise CareError(f"Hamiltonian has {2 * n - 2 * sdim} eigenvalues on the imaginary axis")
    z11, z21 = z[:n, :n], z[n:, :n]
    if np.linalg.cond(z11) > 1e12:
        raise CareError("stable invariant subspace is not a graph; no stabilizing solution")
    s = np.linalg.solve(z11.T, z21.T).T
    s = 0.5 * (s + s.T)

    for _ in range(newton_steps):
        k = np.linalg.solve(R, B.T @ s)
        acl = A - B @ k
        if np.max(np.linalg.eigvals(acl).real) >= 0:
            break
        s_new = scipy.linalg.solve_continuous_lyapunov(acl.T, -(Q + k.T @ R @ k))
        s_new = 0.5 * (s_new + s_new.T)
        if np.linalg.norm(care_residual(A, B, Q, R, s_new)) > np.linalg.norm(care_residual(A, B, Q, R, s)):
            break
        s = s_new
    return s


def lqr_gain(A, B, Q, R) -> np.ndarray:
    S = solve_care(A, B, Q, R)
    R = np.atleast_2d(np.asarray(R, dtype=float))
    B = np.asarray(B, dtype=float).reshape(np.shape(A)[0], -1)
    return np.linalg.solve(R, B.T @ S)


def _generators(seed) -> list[np.random.Generator]:
    if isinstance(seed, (Sequence, np.ndarray)):
        return [np.random.default_rng(int(s)) for s in seed]
    return [np.random.default_rng(seed)]


class _NoisyPolicy:
    """Shared noise/saturation plumbing.

    ``seed`` may be a sequence, one per batch row, so that a row's noise stream
    does not depend on which batch it is simulated in.
    """

    def __init__(self, sigma: float, seed, u_max: float):
        self.sigma = float(sigma)
        self.u_max = float(u_max)
        self._rngs = _generators(seed)
        self.noise_history: list[np.ndarray] = []

    def _noise(self, batch_shape) -> np.ndarray:
        m = int(np.prod(batch_shape)) if batch_shape else 1
        if len(self._rngs) == 1:
            v = self._rngs[0].normal(0.0, 1.0, size=m)
        elif len(self._rngs) == m:
            v = np.array([r.normal(0.0, 1.0) for r in self._rngs])
        else:
            raise ValueError(f"policy has {len(self._rngs)} noise streams for a batch of {m}")
        v = self.sigma * v.reshape(batch_shape)
        self.noise_history.append(v)
        return v

    def _saturate(self, u):
        return np.clip(u, -self.u_max, self.u_max)


class LqrPolicy(_NoisyPolicy):
    """``u = sat(-K (x - x_eq) + v)`` with ``v ~ N(0, sigma^2)`` drawn once per call."""

    def __init__(self, gain, x_eq, sigma: float = 0.0, seed=0, u_max: float = DEFAULT_U_MAX):
        super().__init__(sigma, seed, u_max)
        self.gain = np.asarray(gain, dtype=float).reshape(-1)
        self.x_eq = np.asarray(x_eq, dtype=float)

    def __call__(self, t, x, ref=None):
        x = np.asarray(x, dtype=float)
        u = -(x - self.x_eq) @ self.gain
        return self._saturate(u + self._noise(x.shape[:-1]))


def lqr_identification_policy(
    lin: LinearizedChain, Q, R, sigma: float, seed=0, u_max: float = DEFAULT_U_MAX
) -> LqrPolicy:
    gain = lqr_gain(lin.A_tilde, lin.B_tilde, Q, R)
    x_eq = equilibrium(lin.about, lin.A_tilde.shape[0] // 2)
    return LqrPolicy(gain, x_eq, sigma=sigma, seed=seed, u_max=u_max)


class ProportionalPolicy(_NoisyPolicy):
    """``u = sat(k_p (phi_ref - phi_1) + v)``; the reference holds its last sample when exhausted."""

    def __init__(self, k_p: float, reference, sigma: float = 0.0, seed=0, u_max: float = DEFAULT_U_MAX):
        super().__init__(sigma, seed, u_max)
        if not np.isfinite(k_p):
            raise ValueError("k_p must be finite")
        self.k_p = float(k_p)
        self.reference = reference

    def __call__(self, t, x, ref=None):
        x = np.asarray(x, dtype=float)
        samples = self.reference.samples
        k = min(int(round(t / self.reference.dt)), len(samples) - 1)
        u = self.k_p * (samples[k, 0] - x[..., 0])
        return self._saturate(u + self._noise(x.shape[:-1]))


def proportional_identification_policy(
    k_p: float, reference, sigma: float, seed=0, u_max: float = DEFAULT_U_MAX
) -> ProportionalPolicy:
    return ProportionalPolicy(k_p, reference, sigma=sigma, seed=seed, u_max=u_max)
