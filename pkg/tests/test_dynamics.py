import numpy as np
import pytest

from balsa.dynamics import (
    ControlBox,
    bicycle_to_canonical,
    canonical_to_bicycle,
    canonical_to_vehicle,
    control_gain,
    control_gain_inv,
    plant_gain,
    rotation,
    step_sde,
    true_disturbance,
)
from balsa.errors import SingularGain
from oracles import bicycle_rate, fd_jacobian


def test_gain_examples():
    z = np.array([0.0, 0.0, 2.0, 0.0])  # heading 0, speed 2
    np.testing.assert_allclose(control_gain(z), [[0.0, 1.0], [4.0, 0.0]])
    z = np.array([0.0, 0.0, 0.0, 1.0])  # heading pi/2, speed 1
    np.testing.assert_allclose(control_gain(z), [[-1.0, 0.0], [0.0, 1.0]], atol=1e-15)


def test_gain_determinant_and_inverse():
    rng = np.random.default_rng(0)
    for _ in range(200):
        v, th = rng.uniform(0.2, 5.0), rng.uniform(-np.pi, np.pi)
        z = np.array([0.0, 0.0, v * np.cos(th), v * np.sin(th)])
        g = control_gain(z)
        assert np.linalg.det(g) == pytest.approx(-v * v, rel=1e-12)
        np.testing.assert_allclose(control_gain_inv(z) @ g, np.eye(2), atol=1e-12)


def test_gain_singular_below_threshold():
    z = np.array([0.0, 0.0, 0.05, 0.0])
    with pytest.raises(SingularGain):
        control_gain(z)
    # the clamped inverse stays finite
    assert np.all(np.isfinite(control_gain_inv(z, clamp=True)))


def test_gain_matches_bicycle_model():
    """``g(z) u`` is the time derivative of the canonical velocity under the bicycle model."""
    rng = np.random.default_rng(1)
    for _ in range(100):
        pose = np.array([rng.normal(), rng.normal(), rng.uniform(-np.pi, np.pi), rng.uniform(0.3, 4.0)])
        u = rng.normal(size=2)
        z = bicycle_to_canonical(pose)
        J = fd_jacobian(bicycle_to_canonical, pose)
        zdot = J @ bicycle_rate(pose, u)
        np.testing.assert_allclose(zdot[:2], z[2:], atol=1e-8)
        np.testing.assert_allclose(zdot[2:], plant_gain(z) @ u, atol=1e-7)


def test_bicycle_round_trip():
    pose = np.array([1.0, -2.0, 0.7, 1.5])
    np.testing.assert_allclose(canonical_to_bicycle(bicycle_to_canonical(pose)), pose)


def test_disturbance_rotation_equivariance():
    rng = np.random.default_rng(2)
    for _ in range(50):
        z = np.concatenate([rng.normal(size=2), rng.normal(size=2)])
        phi = rng.uniform(-np.pi, np.pi)
        R = rotation(phi)
        zr = np.concatenate([z[:2], R @ z[2:]])
        np.testing.assert_allclose(true_disturbance(zr), R @ true_disturbance(z), atol=1e-12)


def test_disturbance_example():
    # heading 0, speed 1: body frame [-tanh(1), -1.1]
    np.testing.assert_allclose(true_disturbance(np.array([0, 0, 1.0, 0])), [-np.tanh(1.0), -1.1])


def test_pre_control_inverts_gain():
    z = np.array([0.0, 0.0, 1.0, 1.0])
    mu = np.array([0.3, -0.2])
    cmd = canonical_to_vehicle(mu, z)
    np.testing.assert_allclose(plant_gain(z) @ cmd.u, mu, atol=1e-12)
    assert not cmd.clamped
    cmd = canonical_to_vehicle(np.array([100.0, 0.0]), z, box=ControlBox())
    assert cmd.clamped and ControlBox().contains(cmd.u, 1e-12)


def test_step_sde_noise_moments():
    """Monte Carlo mean and covariance of the velocity increment."""
    rng = np.random.default_rng(3)
    z = np.array([0.0, 0.0, 1.0, 0.0])
    dt, s = 0.02, 0.3
    sigma = np.array([[s, 0.0], [0.1, s]])
    n = 20000
    incr = np.array([step_sde(z, np.zeros(2), dt, sigma, rng, disturbance=None)[2:] - z[2:] for _ in range(n)])
    np.testing.assert_allclose(incr.mean(axis=0), 0.0, atol=4 * s * np.sqrt(dt / n))
    np.testing.assert_allclose(np.cov(incr.T), sigma @ sigma.T * dt, rtol=0.05, atol=1e-6)


def test_step_sde_noiseless_is_deterministic_and_exact_for_constant_velocity():
    z = np.array([0.0, 0.0, 1.0, 2.0])
    z1 = step_sde(z, np.zeros(2), 0.1, disturbance=None)
    np.testing.assert_allclose(z1, [0.1, 0.2, 1.0, 2.0])
    np.testing.assert_array_equal(step_sde(z, [0.1, 0.2], 0.1, 0.0), step_sde(z, [0.1, 0.2], 0.1, None))


def test_step_sde_converges_with_dt():
    """Euler error on a straight-line acceleration run shrinks linearly with dt."""
    z0 = np.array([0.0, 0.0, 1.0, 0.0])
    u = np.array([0.0, 1.0])  # pure acceleration along heading
    errs = []
    for dt in (0.1, 0.05, 0.025):
        z = z0.copy()
        for _ in range(int(round(1.0 / dt))):
            z = step_sde(z, u, dt, disturbance=None)
        errs.append(abs(z[0] - 1.5))  # x(1) = 1 + 1/2
    assert errs[1] / errs[0] == pytest.approx(0.5, abs=0.05)
    assert errs[2] / errs[1] == pytest.approx(0.5, abs=0.05)


def test_step_sde_rejects_bad_dt():
    with pytest.raises(ValueError):
        step_sde(np.zeros(4), np.zeros(2), 0.0)
