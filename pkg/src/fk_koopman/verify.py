"""Fast invariant and oracle checks, run by ``fk-koopman verify``."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from .baselines import care_residual, linearize, solve_care
from .edmd import LiftedPredictor, fit_matrices, rollout
from .integrator import SimConfig, rk4_step, simulate
from .kmpc import MpcController, MpcWeights, condense, linear_term
from .model import ChainParams, build_coupling, drift, single_pendulum_energy, total_energy, vector_field
from .oracles import component_vector_field, enumerate_qp, riccati_first_gain, sparse_mpc_oracle
from .qp import AdmmSolver, BoxQp, kkt_residuals
from .reference import periodic_reference


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


def random_chain_states(rng, count: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """States over the physical operating range: angles in [-pi, pi], rates in +-20 rad/s."""
    x = np.empty((count, 2 * n))
    x[:, 0::2] = rng.uniform(-np.pi, np.pi, (count, n))
    x[:, 1::2] = rng.uniform(-20.0, 20.0, (count, n))
    return x, rng.uniform(-0.1, 0.1, count)


def model_fidelity(rng, count=200, sizes=(2, 3, 5, 10)) -> float:
    p = ChainParams()
    worst = 0.0
    for n in sizes:
        c = build_coupling(n, p)
        x, u = random_chain_states(rng, count, n)
        ref = np.array([component_vector_field(xi, ui, p) for xi, ui in zip(x, u)])
        worst = max(worst, float(np.max(np.abs(vector_field(x, u, p, c) - ref))))
    return worst


def energy_increase(rng, n_ics=2, duration=5.0) -> float:
    """Largest per-step energy increase of unforced runs (should be <= 0 up to round-off)."""
    p = ChainParams()
    c = build_coupling(5, p)
    x0 = np.zeros((n_ics, 10))
    x0[:, 0::2] = rng.uniform(-1.0, 1.0, (n_ics, 5))
    x0[:, 1::2] = rng.uniform(-2.0, 2.0, (n_ics, 5))
    trajs = simulate(x0, lambda t, x, r: np.zeros(x.shape[0]), SimConfig(duration=duration), p, c)
    return max(float(np.max(np.diff(total_energy(tr.states, p)))) for tr in trajs)


def richardson_ratio(h: float = 0.01, horizon: float = 1.0) -> float:
    """Ratio of successive RK4 step-halving differences on a damped single-pendulum swing."""
    p = ChainParams()

    def endpoint(step):
        x = np.array([1.0, 0.0])
        for _ in range(int(round(horizon / step))):
            x = rk4_step(lambda z: drift(z, p), x, step)
        return x

    a, b, c = endpoint(h), endpoint(h / 2), endpoint(h / 4)
    return float(np.linalg.norm(a - b) / np.linalg.norm(b - c))


def edmd_recovery(rng, n=6, samples=400) -> float:
    A0 = rng.normal(size=(n, n))
    A0 *= 0.9 / max(abs(np.linalg.eigvals(A0)))
    B0 = rng.normal(size=(n, 1))
    u = rng.normal(size=samples)
    z = rollout(A0, B0, rng.normal(size=n), u)
    A, B, _ = fit_matrices(z[:-1].T, z[1:].T, u[None, :])
    return float(np.linalg.norm(np.hstack([A, B]) - np.hstack([A0, B0])))


def care_check() -> tuple[float, float]:
    """Relative residual on the linearized chain and distance to the scipy solution."""
    p = ChainParams()
    lin = linearize(p, build_coupling(5, p), "unstable")
    Q = np.kron(np.eye(5), np.diag([1000.0, 0.01]))
    R = np.array([[0.1]])
    S = solve_care(lin.A_tilde, lin.B_tilde, Q, R)
    rel = np.linalg.norm(care_residual(lin.A_tilde, lin.B_tilde, Q, R, S)) / np.linalg.norm(Q)
    S_ref = scipy.linalg.solve_continuous_are(lin.A_tilde, lin.B_tilde, Q, R)
    return float(rel), float(np.linalg.norm(S - S_ref) / np.linalg.norm(S_ref))


def random_box_qp(rng, max_n=8) -> BoxQp:
    n = int(rng.integers(1, max_n + 1))
    M = rng.normal(size=(n, n))
    H = M @ M.T + 0.1 * np.eye(n)
    return BoxQp(H, 3.0 * rng.normal(size=n), np.eye(n), -rng.uniform(0.1, 1.0, n), rng.uniform(0.1, 1.0, n))


def qp_agreement(rng, count=50) -> tuple[float, float]:
    worst_obj = worst_kkt = 0.0
    for _ in range(count):
        p = random_box_qp(rng)
        sol = AdmmSolver(p.H, p.A_c).solve(p.q, p.lower, p.upper)
        _, f = enumerate_qp(p.H, p.q, p.A_c, p.lower, p.upper)
        worst_obj = max(worst_obj, abs(sol.objective - f))
        worst_kkt = max(worst_kkt, max(kkt_residuals(p, sol.x, sol.y).values()))
    return worst_obj, worst_kkt


def random_mpc_instance(rng, max_n=2, max_horizon=5):
    """Small lifted predictor (6 observables per pendulum) with random weights."""
    n = int(rng.integers(1, max_n + 1))
    nz, ny = 6 * n, 2 * n
    A = rng.normal(size=(nz, nz))
    A *= rng.uniform(0.5, 1.1) / max(abs(np.linalg.eigvals(A)))
    B = rng.normal(size=(nz, 1))
    C = np.zeros((ny, nz))
    for i in range(n):
        C[2 * i, 6 * i] = C[2 * i + 1, 6 * i + 1] = 1.0
    Q = np.diag(rng.uniform(0.1, 10.0, ny))
    w = MpcWeights(Q, Q * rng.uniform(1.0, 3.0), float(rng.uniform(0.01, 1.0)), int(rng.integers(1, max_horizon + 1)))
    pred = LiftedPredictor(A, B, C, 0.005, n)
    z0 = 2.0 * rng.normal(size=nz)
    r = rng.normal(size=ny * w.horizon)
    return pred, w, z0, r


def dense_sparse_gap(rng, count=20) -> float:
    worst = 0.0
    for _ in range(count):
        pred, w, z0, r = random_mpc_instance(rng)
        prob = condense(pred, w)
        sol = AdmmSolver(prob.H, prob.A_c, tol_abs=1e-10, tol_rel=1e-10).solve(linear_term(prob, z0, r), *prob.bounds(z0))
        u_sparse = sparse_mpc_oracle(pred.A, pred.B, pred.C, w.Q, w.Q_N, w.R, w.horizon, z0, r, w.u_min, w.u_max)
        worst = max(worst, abs(sol.x[0] - u_sparse[0]))
    return worst


def lq_gap(rng, steps=50) -> float:
    """Closed loop of an exact linear plant: MPC input vs the Riccati feedback at every step."""
    p = ChainParams()
    c = build_coupling(2, p)
    lin = linearize(p, c, "stable")
    dt = 0.005
    M = scipy.linalg.expm(np.block([[lin.A_tilde, lin.B_tilde], [np.zeros((1, 5))]]) * dt)
    A, B = M[:4, :4], M[:4, 4:]
    Q = np.diag([10.0, 0.01, 80.0, 0.01])
    w = MpcWeights(Q, Q, 0.1, 20, -1e6, 1e6)
    prob = condense(LiftedPredictor(A, B, np.eye(4), dt, 2), w)
    ctl = MpcController(prob, None, dt=dt, lift_fn=lambda y: y, tol_abs=1e-10, tol_rel=1e-10)
    K = riccati_first_gain(A, B, np.eye(4), Q, Q, 0.1, 20)
    x = rng.uniform(-0.05, 0.05, 4)
    worst = 0.0
    for k in range(steps):
        u = ctl(k * dt, x)
        worst = max(worst, abs(u + float(K[0] @ x)))
        x = A @ x + B[:, 0] * u
    return worst


def leader_energy_drift(duration=10.0) -> float:
    p = ChainParams()
    ref = periodic_reference((0.0, 17.0), duration, 0.005, p)
    e = single_pendulum_energy(ref.samples, p)
    return float(np.max(np.abs(e - e[0])) / abs(e[0]))


def _run(name: str, fn: Callable[[], tuple[bool, str]]) -> CheckResult:
    start = time.perf_counter()
    try:
        ok, detail = fn()
    except Exception as exc:
        ok, detail = False, f"raised {type(exc).__name__}: {exc}"
    return CheckResult(name, bool(ok), detail, time.perf_counter() - start)


def run_suite(seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)

    def fidelity():
        d = model_fidelity(rng)
        return d < 1e-12, f"max |matrix - component| = {d:.3g}"

    def passivity():
        d = energy_increase(rng)
        return d <= 1e-8, f"max energy increase per step = {d:.3g} J"

    def order():
        r = richardson_ratio()
        return 12.0 <= r <= 20.0, f"Richardson ratio = {r:.3f}"

    def recovery():
        d = edmd_recovery(rng)
        return d < 1e-8, f"||[A B] - [A0 B0]||_F = {d:.3g}"

    def care():
        rel, gap = care_check()
        return rel < 1e-8 and gap < 1e-6, f"relative residual {rel:.3g}, distance to reference solver {gap:.3g}"

    def qp():
        obj, kkt = qp_agreement(rng)
        return obj < 1e-5 and kkt < 1e-6, f"objective gap {obj:.3g}, KKT residual {kkt:.3g}"

    def sparse():
        d = dense_sparse_gap(rng)
        return d < 1e-6, f"max first-input gap {d:.3g}"

    def lq():
        d = lq_gap(rng)
        return d < 1e-6, f"max |u_mpc - u_lq| = {d:.3g}"

    def leader():
        d = leader_energy_drift()
        return d < 1e-6, f"relative energy drift over 10 s = {d:.3g}"

    checks = [
        ("model matrix form matches component form", fidelity),
        ("unforced chain is passive", passivity),
        ("integrator is fourth order", order),
        ("EDMD recovers a lifted-linear plant", recovery),
        ("Riccati solver", care),
        ("QP solver matches enumeration", qp),
        ("dense MPC matches sparse formulation", sparse),
        ("MPC equals finite-horizon LQ without active bounds", lq),
        ("virtual leader conserves energy", leader),
    ]
    return [_run(name, fn) for name, fn in checks]
