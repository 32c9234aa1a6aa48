import numpy as np
import pytest

from balsa.cbf import (
    BarrierSpec,
    Obstacle,
    barrier_derivatives,
    barrier_level,
    barrier_value,
    cbf_row,
    h_obstacle,
    hdot_obstacle,
    min_obstacle_h,
    obstacle_rows,
)
from balsa.errors import DegenerateCenter, OutsideSafeSet
from oracles import fd_gradient, fd_jacobian


def safe_states(rng, n):
    """Random (state, spec) pairs with level ``s`` in [0.2, 5]."""
    out = []
    while len(out) < n:
        kind = rng.choice(3)
        if kind == 0:
            spec = BarrierSpec.for_obstacle(rng.normal(size=2), rng.uniform(0.2, 1.5),
                                            gamma_p=rng.uniform(0.5, 5), gamma=rng.uniform(0.5, 10))
        elif kind == 1:
            spec = BarrierSpec.v_max(rng.uniform(1.0, 4.0), gamma=rng.uniform(0.5, 10))
        else:
            spec = BarrierSpec.v_min(rng.uniform(0.1, 0.5), gamma=rng.uniform(0.5, 10))
        z = np.concatenate([rng.uniform(-4, 4, 2), rng.uniform(-3, 3, 2)])
        s = barrier_level(z, spec)
        if 0.2 <= s <= 5.0:
            out.append((z, spec))
    return out


def rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12)


def test_obstacle_examples():
    obs = Obstacle((0.0, 0.0), 1.0)
    z = np.array([3.0, 0.0, -1.0, 0.0])
    assert h_obstacle(z, obs) == 2.0
    assert hdot_obstacle(z, obs) == -1.0
    spec = BarrierSpec.for_obstacle((0, 0), 1.0, gamma_p=2.0)
    assert barrier_level(z, spec) == pytest.approx(3.0)
    assert barrier_value(z, spec) == pytest.approx(1 / 3)


def test_velocity_examples():
    z = np.array([0.0, 0.0, 3.0, 4.0])
    assert barrier_value(z, BarrierSpec.v_max(6.0)) == pytest.approx(1.0)
    assert barrier_value(z, BarrierSpec.v_min(4.0)) == pytest.approx(1.0)


def test_outside_and_degenerate():
    spec = BarrierSpec.for_obstacle((0, 0), 1.0)
    with pytest.raises(OutsideSafeSet):
        barrier_value(np.array([0.5, 0.0, 0.0, 0.0]), spec)
    with pytest.raises(DegenerateCenter):
        barrier_derivatives(np.zeros(4), spec)
    with pytest.raises(OutsideSafeSet):
        barrier_value(np.array([0, 0, 5.0, 0]), BarrierSpec.v_max(2.0))


def test_spec_validation():
    with pytest.raises(ValueError):
        BarrierSpec("wall")
    with pytest.raises(ValueError):
        Obstacle((0, 0), 0.0)


def test_derivatives_match_finite_differences():
    rng = np.random.default_rng(0)
    worst_g = worst_h = 0.0
    for z, spec in safe_states(rng, 1000):
        _, dB, d2B, _ = barrier_derivatives(z, spec)
        g_fd = fd_gradient(lambda x: barrier_value(x, spec), z, h=1e-6)
        H_fd = fd_jacobian(lambda x: barrier_derivatives(x, spec)[1], z, h=1e-6)
        worst_g = max(worst_g, rel(dB, g_fd))
        worst_h = max(worst_h, rel(d2B, H_fd))
    assert worst_g < 1e-5
    assert worst_h < 1e-4


def test_row_is_ito_generator_plus_class_k():
    """``phi0 + phi1 mu`` is ``LB - gamma/s`` for velocity drift ``mu_d + mu``."""
    rng = np.random.default_rng(1)
    for z, spec in safe_states(rng, 100):
        mu_d, mu = rng.normal(size=2), rng.normal(size=2)
        S = np.diag(rng.uniform(0, 0.5, 2))
        _, dB, d2B, s = barrier_derivatives(z, spec)
        f = np.concatenate([z[2:], mu_d + mu])
        LB = dB @ f + 0.5 * np.trace(S @ S.T @ d2B[2:, 2:])
        phi0, phi1 = cbf_row(z, spec, mu_d, S)
        assert phi0 + phi1 @ mu == pytest.approx(LB - spec.gamma / s, rel=1e-10, abs=1e-10)


def test_trace_removal_identity():
    z = np.array([2.0, 1.0, -0.5, 0.3])
    spec = BarrierSpec.for_obstacle((0, 0), 0.5, gamma_p=2.0)
    S = np.array([[0.4, 0.0], [0.1, 0.2]])
    a, _ = cbf_row(z, spec, np.zeros(2), S, trace=True)
    b, _ = cbf_row(z, spec, np.zeros(2), S, trace=False)
    d2B = barrier_derivatives(z, spec)[2]
    assert a - b == pytest.approx(0.5 * np.trace(S @ S.T @ d2B[2:, 2:]), rel=1e-12)


def test_vectorized_rows_match_scalar():
    rng = np.random.default_rng(2)
    centers = rng.uniform(-8, 8, (40, 2))
    radii = rng.uniform(0.1, 0.5, 40)
    z = np.array([0.0, 0.0, 1.0, 0.5])
    mu_d = np.array([0.2, -0.1])
    S = np.diag([0.3, 0.2])
    rows = obstacle_rows(z, centers, radii, mu_d, S, gamma_p=3.0, gamma=5.0, cull_radius=6.0)
    assert 0 < rows.index.size < 40
    assert np.all(rows.h <= 6.0)
    for k, i in enumerate(rows.index):
        spec = BarrierSpec.for_obstacle(centers[i], radii[i], gamma_p=3.0, gamma=5.0)
        phi0, phi1 = cbf_row(z, spec, mu_d, S)
        assert rows.phi0[k] == pytest.approx(phi0, rel=1e-12)
        np.testing.assert_allclose(rows.phi1[k], phi1, rtol=1e-12)


def test_vectorized_rows_raise_outside():
    with pytest.raises(OutsideSafeSet):
        obstacle_rows(np.array([0.1, 0.0, 0, 0]), [[0.0, 0.0]], [0.5], np.zeros(2), np.eye(2))


def test_min_obstacle_h():
    assert min_obstacle_h(np.zeros(4), np.zeros((0, 2)), np.zeros(0)) == np.inf
    assert min_obstacle_h(np.zeros(4), [[3.0, 4.0], [0.0, 2.0]], np.array([1.0, 1.0])) == 1.0
