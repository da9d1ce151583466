import numpy as np
import pytest

from fk_koopman.edmd import DataMatrices, LiftedPredictor, assemble, fit, fit_matrices, one_step_rmse, predict, rollout
from fk_koopman.integrator import Trajectory
from fk_koopman.lifting import lift, output_matrix


def _traj(states, inputs=None):
    states = np.asarray(states, dtype=float)
    if inputs is None:
        inputs = np.zeros(len(states) - 1)
    return Trajectory(0.005, states, inputs)


def test_assemble_counts_pairs():
    data = assemble([_traj(np.zeros((3, 2)))])
    assert data.n_samples == 2
    assert data.X_lift.shape == (6, 2) and data.U.shape == (1, 2)


def test_assemble_counts_many_runs():
    runs = [_traj(np.zeros((1000, 2))) for _ in range(200)]
    assert assemble(runs).n_samples == 200 * 999


def test_assemble_does_not_cross_runs():
    a = _traj(np.column_stack([np.arange(4.0), np.zeros(4)]), np.array([1.0, 2.0, 3.0]))
    b = _traj(np.column_stack([100 + np.arange(3.0), np.zeros(3)]), np.array([4.0, 5.0]))
    data = assemble([a, b])
    # every pair advances the angle by exactly one
    np.testing.assert_array_equal(data.Y_lift[0] - data.X_lift[0], 1.0)
    np.testing.assert_array_equal(data.U[0], [1, 2, 3, 4, 5])


def test_assemble_rejects_empty_and_short():
    with pytest.raises(ValueError):
        assemble([])
    with pytest.raises(ValueError):
        assemble([_traj(np.zeros((1, 2)), np.zeros(0))])


def test_exact_recovery_of_linear_plant(rng):
    n = 12
    A0 = rng.normal(size=(n, n))
    A0 *= 0.95 / max(abs(np.linalg.eigvals(A0)))
    B0 = rng.normal(size=(n, 1))
    u = rng.normal(size=500)
    z = rollout(A0, B0, rng.normal(size=n), u)
    A, B, info = fit_matrices(z[:-1].T, z[1:].T, u[None, :])
    assert np.linalg.norm(np.hstack([A, B]) - np.hstack([A0, B0])) < 1e-8
    assert info["rank"] == n + 1


def test_identity_dynamics_without_input(rng):
    X = rng.normal(size=(6, 50))
    A, B, info = fit_matrices(X, X, np.zeros((1, 50)))
    np.testing.assert_allclose(A @ X, X, atol=1e-10)
    assert info["residual"] < 1e-10
    # minimum-norm solution puts nothing on the unexcited input
    np.testing.assert_allclose(B, 0.0, atol=1e-12)


def test_ridge_shrinks_solution(rng):
    X = rng.normal(size=(6, 40))
    Y = rng.normal(size=(6, 40))
    U = rng.normal(size=(1, 40))
    A0, B0, _ = fit_matrices(X, Y, U)
    A1, B1, _ = fit_matrices(X, Y, U, ridge=10.0)
    assert np.linalg.norm(np.hstack([A1, B1])) < np.linalg.norm(np.hstack([A0, B0]))


def test_fit_warns_when_underdetermined(rng):
    X = rng.normal(size=(6, 4))
    data = DataMatrices(X=X[:2], X_lift=X, Y_lift=X, U=np.zeros((1, 4)))
    with pytest.warns(UserWarning):
        fit(data, 0.005)


def test_fit_rejects_bad_dictionary_size(rng):
    X = rng.normal(size=(5, 40))
    with pytest.raises(ValueError):
        fit(DataMatrices(X=X, X_lift=X, Y_lift=X, U=np.zeros((1, 40))), 0.005)


def test_predict_without_inputs_returns_initial_output(rng):
    pred = LiftedPredictor(rng.normal(size=(12, 12)), rng.normal(size=12), output_matrix(2), 0.005, 2)
    y0 = rng.normal(size=4)
    out = predict(pred, y0, [])
    assert out.shape == (1, 4)
    np.testing.assert_array_equal(out[0], y0)


def test_fitted_surrogate_reproduces_its_rollout(rng):
    # a lifted-linear surrogate: data come from the predictor itself
    A0 = rng.normal(size=(12, 12))
    A0 *= 0.9 / max(abs(np.linalg.eigvals(A0)))
    B0 = rng.normal(size=(12, 1))
    trajs_z, us = [], []
    for _ in range(5):
        u = rng.normal(size=60)
        trajs_z.append(rollout(A0, B0, rng.normal(size=12), u))
        us.append(u)
    X = np.hstack([z[:-1].T for z in trajs_z])
    Y = np.hstack([z[1:].T for z in trajs_z])
    U = np.concatenate(us)[None, :]
    pred = fit(DataMatrices(X=X[:4], X_lift=X, Y_lift=Y, U=U), 0.005)
    z0 = rng.normal(size=12)
    u = rng.normal(size=30)
    np.testing.assert_allclose(rollout(pred.A, pred.B, z0, u), rollout(A0, B0, z0, u), atol=1e-8)


def test_predictor_shape_validation():
    with pytest.raises(ValueError):
        LiftedPredictor(np.eye(6), np.ones(5), output_matrix(1), 0.005, 1)


def test_one_step_rmse_zero_on_exact_model(rng):
    A0 = 0.5 * np.eye(6)
    B0 = np.ones((6, 1))
    X = rng.normal(size=(6, 30))
    U = rng.normal(size=(1, 30))
    data = DataMatrices(X=X[:2], X_lift=X, Y_lift=A0 @ X + B0 @ U, U=U)
    rmse, rms = one_step_rmse(LiftedPredictor(A0, B0, output_matrix(1), 0.005, 1), data)
    assert rmse < 1e-14 and rms > 0
