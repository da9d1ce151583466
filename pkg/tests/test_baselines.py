import numpy as np
import pytest
import scipy.linalg

from fk_koopman.baselines import (
    CareError,
    LqrPolicy,
    ProportionalPolicy,
    care_residual,
    linearize,
    lqr_gain,
    lqr_identification_policy,
    solve_care,
)
from fk_koopman.integrator import SimConfig, simulate
from fk_koopman.model import build_coupling, equilibrium, vector_field
from fk_koopman.reference import constant_reference

EQ29_Q = np.kron(np.eye(5), np.diag([1000.0, 0.01]))
EQ29_R = np.array([[0.1]])


def test_linearization_two_pendulums(params):
    lin = linearize(params, build_coupling(2, params), "stable")
    assert lin.A_tilde[1, 0] == pytest.approx(-params.mgl / params.inertia - params.spring_k / params.inertia)
    np.testing.assert_allclose(lin.B_tilde[:, 0], [0, 1 / params.inertia, 0, 0])


@pytest.mark.parametrize("about", ["stable", "unstable"])
def test_linearization_matches_finite_differences(params, chain5, about):
    lin = linearize(params, chain5, about)
    x0 = equilibrium(about, 5)
    h = 1e-6
    jac = np.column_stack(
        [(vector_field(x0 + h * e, 0.0, params, chain5) - vector_field(x0 - h * e, 0.0, params, chain5)) / (2 * h)
         for e in np.eye(10)]
    )
    assert np.max(np.abs(jac - lin.A_tilde)) < 1e-6


def test_scalar_care_cases():
    assert solve_care([[0.0]], [[1.0]], [[1.0]], [[1.0]])[0, 0] == pytest.approx(1.0, abs=1e-10)
    assert solve_care([[1.0]], [[1.0]], [[1.0]], [[1.0]])[0, 0] == pytest.approx(1 + np.sqrt(2), abs=1e-10)


@pytest.mark.parametrize("about", ["stable", "unstable"])
def test_care_on_chain_matches_reference_solver(params, chain5, about):
    lin = linearize(params, chain5, about)
    S = solve_care(lin.A_tilde, lin.B_tilde, EQ29_Q, EQ29_R)
    ref = scipy.linalg.solve_continuous_are(lin.A_tilde, lin.B_tilde, EQ29_Q, EQ29_R)
    assert np.linalg.norm(care_residual(lin.A_tilde, lin.B_tilde, EQ29_Q, EQ29_R, S)) / np.linalg.norm(EQ29_Q) < 1e-8
    assert np.linalg.norm(S - ref) / np.linalg.norm(ref) < 1e-8
    K = lqr_gain(lin.A_tilde, lin.B_tilde, EQ29_Q, EQ29_R)
    assert np.max(np.linalg.eigvals(lin.A_tilde - lin.B_tilde @ K).real) < 0


def test_care_random_systems(rng):
    for _ in range(20):
        n = int(rng.integers(2, 7))
        A = rng.normal(size=(n, n))
        B = rng.normal(size=(n, 2))
        M = rng.normal(size=(n, n))
        Q = M @ M.T + 0.1 * np.eye(n)
        R = np.diag(rng.uniform(0.5, 2.0, 2))
        S = solve_care(A, B, Q, R)
        assert np.linalg.norm(care_residual(A, B, Q, R, S)) / np.linalg.norm(Q) < 1e-8
        np.testing.assert_allclose(S, S.T, atol=1e-10)


def test_care_rejects_unstabilizable():
    A = np.diag([1.0, -1.0])
    B = np.array([[0.0], [1.0]])
    with pytest.raises(CareError):
        solve_care(A, B, np.eye(2), [[1.0]])


def test_care_rejects_indefinite_r():
    with pytest.raises(CareError):
        solve_care([[1.0]], [[1.0]], [[1.0]], [[-1.0]])


def test_lqr_policy_zero_at_equilibrium(params, chain5):
    lin = linearize(params, chain5, "unstable")
    pol = lqr_identification_policy(lin, EQ29_Q, EQ29_R, sigma=0.0, seed=0)
    assert pol(0.0, equilibrium("unstable", 5)) == 0.0


def test_lqr_noise_statistics():
    sigma = np.sqrt(0.1)
    pol = LqrPolicy(np.zeros(2), np.zeros(2), sigma=sigma, seed=3, u_max=np.inf)
    for _ in range(10_000):
        pol(0.0, np.zeros(2))
    v = np.ravel(pol.noise_history)
    assert abs(v.var() / sigma**2 - 1) < 0.05


def test_lqr_policy_saturates():
    pol = LqrPolicy(np.array([10.0, 0.0]), np.zeros(2), sigma=0.0)
    assert pol(0.0, np.array([1.0, 0.0])) == -0.1


def test_per_row_noise_streams_independent_of_batch():
    a = LqrPolicy(np.zeros(2), np.zeros(2), sigma=1.0, seed=[11, 22, 33], u_max=np.inf)
    b = LqrPolicy(np.zeros(2), np.zeros(2), sigma=1.0, seed=[22], u_max=np.inf)
    for _ in range(5):
        ua = a(0.0, np.zeros((3, 2)))
        ub = b(0.0, np.zeros((1, 2)))
        assert ua[1] == ub[0]
    with pytest.raises(ValueError):
        a(0.0, np.zeros((2, 2)))


def test_lqr_closed_loop_converges(params, chain5, rng):
    lin = linearize(params, chain5, "stable")
    pol = lqr_identification_policy(lin, EQ29_Q, EQ29_R, sigma=0.0)
    x0 = np.zeros(10)
    x0[0::2] = rng.uniform(-0.1, 0.1, 5)
    # the continuous-time gain needs fast sampling; at 5 ms hold it is unstable
    tr = simulate(x0, pol, SimConfig(control_dt=0.001, substeps_per_control=5, duration=10.0), params, chain5)
    assert np.max(np.abs(tr.states[-1])) < 1e-6


def test_proportional_policy(params):
    ref = constant_reference("stable_eq", 10, 0.005)
    pol = ProportionalPolicy(0.2, ref, sigma=0.0, u_max=np.inf)
    assert pol(0.0, np.zeros(4)) == 0.0
    assert pol(0.0, np.array([-1.0, 0, 0, 0])) == pytest.approx(0.2)
    assert ProportionalPolicy(0.2, ref, sigma=0.0)(0.0, np.array([-1.0, 0, 0, 0])) == pytest.approx(0.1)
    # past the end of the reference the last sample is held
    assert pol(1.0, np.zeros(4)) == 0.0
    with pytest.raises(ValueError):
        ProportionalPolicy(np.inf, ref)


def test_proportional_noise_variance():
    ref = constant_reference("stable_eq", 2, 0.005)
    pol = ProportionalPolicy(0.2, ref, sigma=0.1, seed=5, u_max=np.inf)
    for _ in range(10_000):
        pol(0.0, np.zeros(2))
    v = np.ravel(pol.noise_history)
    assert abs(v.var() / 0.01 - 1) < 0.05
