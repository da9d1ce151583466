import numpy as np
import pytest

from fk_koopman.model import single_pendulum_energy
from fk_koopman.reference import ReferenceTrajectory, constant_reference, periodic_reference, separatrix_energy


def test_constant_references():
    s = constant_reference("stable_eq", 10, 0.005)
    np.testing.assert_array_equal(s.samples, 0.0)
    u = constant_reference("unstable_eq", 10, 0.005)
    np.testing.assert_array_equal(u.samples, np.tile([np.pi, 0.0], (10, 1)))
    with pytest.raises(ValueError):
        constant_reference("periodic", 10, 0.005)


def test_leader_revolves(params):
    ref = periodic_reference((0.0, 17.0), 10.0, 0.005, params)
    assert np.all(np.diff(ref.samples[:, 0]) > 0)
    assert ref.samples[:, 1].min() > 0
    assert ref.samples[:, 1].max() <= 17.0 + 1e-9
    # initial energy exceeds the upright rest energy
    assert single_pendulum_energy(np.array([0.0, 17.0]), params) > separatrix_energy(params)


def test_leader_at_rest(params):
    ref = periodic_reference((0.0, 0.0), 1.0, 0.005, params)
    np.testing.assert_array_equal(ref.samples, 0.0)


def test_leader_conserves_energy(params):
    ref = periodic_reference((0.0, 17.0), 10.0, 0.005, params)
    e = single_pendulum_energy(ref.samples, params)
    assert np.max(np.abs(e - e[0])) / abs(e[0]) < 1e-6


def test_periodic_reference_validation(params):
    with pytest.raises(ValueError):
        periodic_reference((0.0, 17.0), 1.0, 0.0, params)
    with pytest.raises(ValueError):
        periodic_reference((0.0, 17.0), 0.001, 0.005, params)


def test_window_extends_equilibrium_by_holding():
    ref = constant_reference("unstable_eq", 5, 0.005)
    win = ref.window(3, 10)
    assert win.shape == (10, 2)
    np.testing.assert_array_equal(win, np.tile([np.pi, 0.0], (10, 1)))


def test_window_extends_periodic_by_integration(params):
    short = periodic_reference((0.0, 17.0), 1.0, 0.005, params)
    long = periodic_reference((0.0, 17.0), 2.0, 0.005, params)
    win = short.window(150, 100)
    np.testing.assert_allclose(win, long.samples[150:250], rtol=0, atol=1e-9)


def test_stacked(params):
    ref = ReferenceTrajectory(0.005, np.array([[1.0, 2.0], [3.0, 4.0]]), "periodic", params)
    np.testing.assert_array_equal(ref.stacked(3), [[1, 2, 1, 2, 1, 2], [3, 4, 3, 4, 3, 4]])
