"""ADMM (operator splitting) solver for ``min 1/2 x'Hx + q'x  s.t.  l <= A x <= u``.

The iteration follows the OSQP family: a cached factorization of
``H + sigma I + A' diag(rho) A``, over-relaxation, projection onto the box and
an optional polishing step that re-solves the KKT system on the guessed active
set.  Only ``q`` and the bounds may change between solves of one
:class:`AdmmSolver`, which is exactly the receding-horizon use case.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np
import scipy.linalg

log = logging.getLogger(__name__)

Status = Literal["solved", "max_iter", "infeasible"]

RHO_EQ_SCALE = 1e3
RHO_MIN = 1e-6
RHO_MAX = 1e6


@dataclass
class BoxQp:
    H: np.ndarray
    q: np.ndarray
    A_c: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        n = self.H.shape[0]
        self.q = np.asarray(self.q, dtype=float).reshape(n)
        self.A_c = np.asarray(self.A_c, dtype=float).reshape(-1, n)
        m = self.A_c.shape[0]
        self.lower = np.asarray(self.lower, dtype=float).reshape(m)
        self.upper = np.asarray(self.upper, dtype=float).reshape(m)
        if self.H.shape != (n, n) or np.max(np.abs(self.H - self.H.T), initial=0.0) > 1e-12 * max(
            1.0, np.max(np.abs(self.H), initial=0.0)
        ):
            raise ValueError("H must be square and symmetric")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.H @ x + self.q @ x)


@dataclass
class QpSolution:
    x: np.ndarray
    y: np.ndarray
    status: Status
    iterations: int
    primal_residual: float
    dual_residual: float
    objective: float
    polished: bool = False
    rho: float = 0.0
    metadata: dict = field(default_factory=dict)


def kkt_residuals(p: BoxQp, x, y) -> dict[str, float]:
    """Stationarity, primal infeasibility and complementarity of a primal-dual pair.

    ``y > 0`` marks the upper bound active, ``y < 0`` the lower one.
    """
    ax = p.A_c @ x
    stat = p.H @ x + p.q + p.A_c.T @ y
    viol = np.maximum(ax - p.upper, 0.0) + np.maximum(p.lower - ax, 0.0)
    yp, ym = np.maximum(y, 0.0), np.maximum(-y, 0.0)
    gap_u = np.where(np.isfinite(p.upper), p.upper - ax, 0.0)
    gap_l = np.where(np.isfinite(p.lower), ax - p.lower, 0.0)
    comp = np.concatenate([yp * np.abs(gap_u), ym * np.abs(gap_l), yp * ~np.isfinite(p.upper), ym * ~np.isfinite(p.lower)])
    return {
        "stationarity": float(np.max(np.abs(stat), initial=0.0)),
        "primal": float(np.max(viol, initial=0.0)),
        "complementarity": float(np.max(comp, initial=0.0)),
    }


class AdmmSolver:
    """Reusable solver for a fixed ``(H, A_c)`` pair.

    Parameters
    ----------
    rho : float
        Initial penalty.  Rescaled (with a new cached factorization) when the
        ratio of normalised primal to dual residual leaves ``[0.1, 10]``.
    alpha : float
        Over-relaxation parameter.
    regularization : float
        Added to the diagonal of ``H`` in the factorization only, so a
        semidefinite ``H`` can still be factored.
    """

    def __init__(
        self,
        H,
        A_c,
        rho: float = 0.1,
        sigma: float = 1e-6,
        alpha: float = 1.6,
        regularization: float = 1e-9,
        tol_abs: float = 1e-6,
        tol_rel: float = 1e-6,
        max_iter: int = 4000,
        adaptive_rho: bool = True,
        adapt_interval: int = 25,
        polish: bool = True,
        polish_interval: int = 10,
        check_interval: int = 5,
        infeasibility_tol: float = 1e-5,
    ):
        self.H = np.atleast_2d(np.asarray(H, dtype=float))
        self.A_c = np.asarray(A_c, dtype=float).reshape(-1, self.H.shape[0])
        self.rho0 = rho
        self.sigma = sigma
        self.alpha = alpha
        self.regularization = regularization
        self.tol_abs = tol_abs
        self.tol_rel = tol_rel
        self.max_iter = max_iter
        self.adaptive_rho = adaptive_rho
        self.adapt_interval = adapt_interval
        self.polish = polish
        self.polish_interval = polish_interval
        self.check_interval = check_interval
        self._identity = self.A_c.shape == self.H.shape and np.array_equal(self.A_c, np.eye(self.H.shape[0]))
        self.infeasibility_tol = infeasibility_tol
        self._factors: dict = {}
        self.rho = rho
        self.factorizations = 0

    @property
    def n(self) -> int:
        return self.H.shape[0]

    @property
    def m(self) -> int:
        return self.A_c.shape[0]

    def _rho_vector(self, rho, lower, upper):
        eq = np.abs(upper - lower) < 1e-12
        free = ~np.isfinite(lower) & ~np.isfinite(upper)
        r = np.full(self.m, rho)
        r[eq] = RHO_EQ_SCALE * rho
        r[free] = RHO_MIN
        return r

    def _factor(self, rho_vec):
        """Inverse of the ADMM system matrix, via Cholesky, cached per penalty vector."""
        key = rho_vec.tobytes()
        kinv = self._factors.get(key)
        if kinv is None:
            kmat = self.H + (self.sigma + self.regularization) * np.eye(self.n) + self.A_c.T @ (rho_vec[:, None] * self.A_c)
            fac = scipy.linalg.cho_factor(kmat)
            kinv = scipy.linalg.cho_solve(fac, np.eye(self.n))
            self._factors[key] = kinv
            self.factorizations += 1
        return kinv

    def solve(self, q, lower, upper, warm_start: Optional[tuple] = None) -> QpSolution:
        """Solve for the given linear term and bounds.

        ``warm_start`` is ``(x, y)`` (``y`` may be ``None``), typically the
        previous solution shifted by one step.
        """
        H, A = self.H, self.A_c
        ident = self._identity
        q = np.asarray(q, dtype=float).reshape(self.n)
        lower = np.asarray(lower, dtype=float).reshape(self.m)
        upper = np.asarray(upper, dtype=float).reshape(self.m)
        if np.any(lower > upper):
            raise ValueError("lower bound exceeds upper bound")
        rho = self.rho
        rho_vec = self._rho_vector(rho, lower, upper)
        kinv = self._factor(rho_vec)
        prox = self.sigma + self.regularization
        alpha = self.alpha
        q_norm = np.max(np.abs(q), initial=0.0)

        if warm_start is not None:
            x = np.asarray(warm_start[0], dtype=float).reshape(self.n).copy()
            y = np.zeros(self.m) if warm_start[1] is None else np.asarray(warm_start[1], dtype=float).reshape(self.m).copy()
        else:
            x = np.zeros(self.n)
            y = np.zeros(self.m)
        z = np.clip(x if ident else A @ x, lower, upper)

        status: Status = "max_iter"
        early_polish = False
        r_prim = r_dual = np.inf
        it = 0
        for it in range(1, self.max_iter + 1):
            w = rho_vec * z - y
            x_tilde = kinv @ (prox * x - q + (w if ident else A.T @ w))
            z_tilde = x_tilde if ident else A @ x_tilde
            x = alpha * x_tilde + (1.0 - alpha) * x
            z_relax = alpha * z_tilde + (1.0 - alpha) * z
            z_new = np.clip(z_relax + y / rho_vec, lower, upper)
            dy = rho_vec * (z_relax - z_new)
            y = y + dy
            z = z_new
            if it != 1 and it % self.check_interval:
                continue

            ax = x if ident else A @ x
            hx = H @ x
            aty = y if ident else A.T @ y
            r_prim = float(np.max(np.abs(ax - z), initial=0.0))
            r_dual = float(np.max(np.abs(hx + q + aty), initial=0.0))
            eps_p = self.tol_abs + self.tol_rel * max(np.max(np.abs(ax), initial=0.0), np.max(np.abs(z), initial=0.0))
            eps_d = self.tol_abs + self.tol_rel * max(
                np.max(np.abs(hx), initial=0.0), np.max(np.abs(aty), initial=0.0), q_norm
            )
            if r_prim <= eps_p and r_dual <= eps_d:
                status = "solved"
                break
            if self.polish and self.polish_interval and it % self.polish_interval == 0:
                polished = self._polish_candidate(q, lower, upper, z, y, eps_p, eps_d)
                if polished is not None:
                    x, y, r_prim, r_dual = polished
                    status = "solved"
                    early_polish = True
                    break
            if self._primal_infeasible(dy, lower, upper):
                status = "infeasible"
                break
            if self.adaptive_rho and it % self.adapt_interval == 0:
                ratio = np.sqrt((r_prim / eps_p) / max(r_dual / eps_d, 1e-300))
                if ratio > 10 or ratio < 0.1:
                    rho = float(np.clip(rho * ratio, RHO_MIN, RHO_MAX))
                    rho_vec = self._rho_vector(rho, lower, upper)
                    kinv = self._factor(rho_vec)

        self.rho = rho
        sol = QpSolution(
            x=x, y=y, status=status, iterations=it, primal_residual=r_prim, dual_residual=r_dual,
            objective=float(0.5 * x @ H @ x + q @ x), rho=rho,
            polished=early_polish, metadata={"regularization": self.regularization},
        )
        if status != "infeasible" and self.polish and not early_polish:
            tol = max(self.tol_abs, 1e-9)
            cand = self._polish_candidate(q, lower, upper, z, y, max(r_prim, tol), max(r_dual, tol))
            if cand is not None:
                sol.x, sol.y, sol.primal_residual, sol.dual_residual = cand
                sol.objective = float(0.5 * sol.x @ H @ sol.x + q @ sol.x)
                sol.polished = True
                sol.status = "solved"
        if status == "max_iter":
            log.warning("ADMM hit max_iter=%d (primal %.2e, dual %.2e)", self.max_iter, sol.primal_residual, sol.dual_residual)
        return sol

    def _primal_infeasible(self, dy, lower, upper) -> bool:
        norm = np.max(np.abs(dy), initial=0.0)
        if norm < 1e-12:
            return False
        eps = self.infeasibility_tol * norm
        if np.max(np.abs(self.A_c.T @ dy), initial=0.0) > eps:
            return False
        pos, neg = np.maximum(dy, 0.0), np.minimum(dy, 0.0)
        if np.any((pos > eps) & ~np.isfinite(upper)) or np.any((neg < -eps) & ~np.isfinite(lower)):
            return False
        u_fin = np.where(np.isfinite(upper), upper, 0.0)
        l_fin = np.where(np.isfinite(lower), lower, 0.0)
        return bool(u_fin @ pos + l_fin @ neg < -eps)

    def _polish_candidate(self, q, lower, upper, z, y, prim_tol, dual_tol):
        """Solve the KKT system on the active set guessed from ``(z, y)``.

        Returns ``(x, y, r_prim, r_dual)`` when the result is feasible, has
        multipliers of the right sign and residuals within the given
        tolerances; otherwise ``None``.
        """
        H, A = self.H, self.A_c
        eq = np.abs(upper - lower) < 1e-12
        up = ~eq & (upper - z < y)
        low = (eq | (z - lower < -y)) & ~up
        act = np.flatnonzero(low | up)
        target = np.where(up, upper, lower)[act]
        na = len(act)
        kkt = np.zeros((self.n + na, self.n + na))
        kkt[: self.n, : self.n] = H
        kkt[: self.n, self.n :] = A[act].T
        kkt[self.n :, : self.n] = A[act]
        rhs = np.concatenate([-q, target])
        try:
            w = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            w = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
        if not np.all(np.isfinite(w)):
            return None
        x_p = w[: self.n]
        y_p = np.zeros(self.m)
        y_p[act] = w[self.n :]
        # lower-active multipliers must be <= 0, upper-active >= 0
        if np.any(y_p[low & ~eq] > dual_tol) or np.any(y_p[up] < -dual_tol):
            return None
        ax = A @ x_p
        r_prim = float(np.max(np.maximum(ax - upper, 0.0) + np.maximum(lower - ax, 0.0), initial=0.0))
        r_dual = float(np.max(np.abs(H @ x_p + q + A.T @ y_p), initial=0.0))
        if r_prim > prim_tol or r_dual > dual_tol:
            return None
        return x_p, y_p, r_prim, r_dual


def solve(
    p: BoxQp,
    tol_abs: float = 1e-6,
    tol_rel: float = 1e-6,
    max_iter: int = 4000,
    warm_start: Optional[tuple] = None,
    **kwargs,
) -> QpSolution:
    """One-shot solve of a :class:`BoxQp`."""
    solver = AdmmSolver(p.H, p.A_c, tol_abs=tol_abs, tol_rel=tol_rel, max_iter=max_iter, **kwargs)
    return solver.solve(p.q, p.lower, p.upper, warm_start=warm_start)
