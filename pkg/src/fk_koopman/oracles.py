"""Independent reference implementations used to cross-check the production code.

These are deliberately naive (explicit loops, brute-force enumeration) and
only suitable for small problems.
"""

from __future__ import annotations

import itertools

import numpy as np

from .model import ChainParams


def component_vector_field(x, u: float, params: ChainParams) -> np.ndarray:
    """Per-pendulum equations of motion written out neighbour by neighbour."""
    x = np.asarray(x, dtype=float)
    n = x.size // 2
    phi, rate = x[0::2], x[1::2]
    out = np.empty_like(x)
    for i in range(n):
        torque = -params.mgl * np.sin(phi[i]) - params.pivot_damping * rate[i]
        for j in (i - 1, i + 1):
            if 0 <= j < n:
                torque += params.spring_k * (phi[j] - phi[i]) + params.spring_damping * (rate[j] - rate[i])
        if i == 0:
            torque += u
        out[2 * i] = rate[i]
        out[2 * i + 1] = torque / params.inertia
    return out


def enumerate_qp(P, q, A, lower, upper, tol: float = 1e-9):
    """Exact minimiser of ``1/2 x'Px + q'x`` s.t. ``lower <= A x <= upper`` (``P`` positive definite).

    Rows with ``lower == upper`` are always active; every pattern of
    {inactive, at lower, at upper} over the remaining finite rows is tried.
    The equality-constrained KKT system of each pattern is solved and the
    best point with primal feasibility and correctly signed multipliers is
    returned as ``(x, objective)``; ``(None, inf)`` if none qualifies.
    """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    q = np.asarray(q, dtype=float).reshape(-1)
    n = q.size
    A = np.asarray(A, dtype=float).reshape(-1, n)
    m = A.shape[0]
    lower = np.broadcast_to(np.asarray(lower, dtype=float), (m,))
    upper = np.broadcast_to(np.asarray(upper, dtype=float), (m,))
    eq = [i for i in range(m) if lower[i] == upper[i]]
    free_rows = [i for i in range(m) if i not in eq and (np.isfinite(lower[i]) or np.isfinite(upper[i]))]
    scale = max(1.0, np.abs(q).max(initial=0.0))
    best_x, best_f = None, np.inf
    for pattern in itertools.product((0, -1, 1), repeat=len(free_rows)):
        active, rhs_b, side = list(eq), [lower[i] for i in eq], [0] * len(eq)
        skip = False
        for i, s in zip(free_rows, pattern):
            if s == 0:
                continue
            b = lower[i] if s < 0 else upper[i]
            if not np.isfinite(b):
                skip = True
                break
            active.append(i)
            rhs_b.append(b)
            side.append(s)
        if skip or len(active) > n:
            continue
        Aa = A[active]
        k = len(active)
        kkt = np.block([[P, Aa.T], [Aa, np.zeros((k, k))]])
        rhs = np.concatenate([-q, rhs_b])
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            continue
        x, y = sol[:n], sol[n:]
        ax = A @ x
        if np.any(ax < lower - tol * (1 + np.abs(lower))) or np.any(ax > upper + tol * (1 + np.abs(upper))):
            continue
        # Px + q + A'y = 0: y >= 0 at an upper bound, y <= 0 at a lower bound
        if any(sd * yi < -tol * scale for sd, yi in zip(side, y) if sd != 0):
            continue
        f = 0.5 * x @ P @ x + q @ x
        if f < best_f:
            best_x, best_f = x, f
    return best_x, best_f


def sparse_mpc_oracle(A, B, C, Q, Q_N, R, horizon, z0, r_stack, u_min, u_max):
    """Solve the MPC problem over stacked ``[z_1..z_Np, u_0..u_{Np-1}]`` with the
    dynamics kept as equality constraints, by enumeration. Returns the input sequence."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    C = np.asarray(C, dtype=float)
    nz, nu = B.shape
    Np = horizon
    nvar = Np * nz + Np * nu
    P = np.zeros((nvar, nvar))
    qv = np.zeros(nvar)
    r = np.asarray(r_stack, dtype=float).reshape(Np, -1)
    for k in range(Np):
        W = Q_N if k == Np - 1 else Q
        s = slice(k * nz, (k + 1) * nz)
        P[s, s] = C.T @ W @ C
        qv[s] = -C.T @ W @ r[k]
    off = Np * nz
    P[off:, off:] = np.kron(np.eye(Np), np.atleast_2d(R))
    # dynamics rows z_{k+1} - A z_k - B u_k = 0 (first row: = A z0), then input bounds
    E = np.zeros((Np * nz, nvar))
    e = np.zeros(Np * nz)
    for k in range(Np):
        rows = slice(k * nz, (k + 1) * nz)
        E[rows, rows] = np.eye(nz)
        E[rows, off + k * nu : off + (k + 1) * nu] = -B
        if k == 0:
            e[rows] = A @ np.asarray(z0, dtype=float)
        else:
            E[rows, (k - 1) * nz : k * nz] = -A
    rows = np.vstack([E, np.eye(nvar)[off:]])
    lo = np.concatenate([e, np.full(Np * nu, u_min)])
    hi = np.concatenate([e, np.full(Np * nu, u_max)])
    x, _ = enumerate_qp(P, qv, rows, lo, hi)
    if x is None:
        raise ValueError("sparse MPC problem infeasible")
    return x[off:]


def riccati_first_gain(A, B, C, Q, Q_N, R, horizon: int) -> np.ndarray:
    """Gain ``K_0`` of the finite-horizon LQ problem solved by backward Riccati recursion,
    so that ``u_0 = -K_0 z_0`` (zero reference, no constraints)."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    C = np.asarray(C, dtype=float)
    R = np.atleast_2d(R)
    S = C.T @ Q_N @ C
    for _ in range(horizon - 1):
        K = np.linalg.solve(R + B.T @ S @ B, B.T @ S @ A)
        S = C.T @ Q @ C + A.T @ S @ (A - B @ K)
        S = 0.5 * (S + S.T)
    return np.linalg.solve(R + B.T @ S @ B, B.T @ S @ A)
