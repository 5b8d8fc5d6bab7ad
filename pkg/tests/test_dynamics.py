import numpy as np
import pytest

from safeplan.dynamics import (ControlBounds, EgoState, ObstacleMotionModel, ego_derivative, ego_jacobians,
                               predict_anchor, propagate, rk4_step)


def test_ego_derivative_examples():
    assert np.allclose(ego_derivative([0, 0, 0, 0, 5], [0, 0], 0.0), [5, 0, 0, 0, 0])
    assert ego_derivative([0, 0, 0.1, 0, 5], [0, 0], 0.0)[1] == pytest.approx(0.5)
    assert ego_derivative([0, 0, 0, 0.2, 5], [0, 0], 0.2)[2] == pytest.approx(0.0)
    # exactly affine in u
    x = np.array([1.0, 0.3, -0.2, 0.05, 7.0])
    diff = ego_derivative(x, [0.4, -1.0], 0.01) - ego_derivative(x, [0.1, 0.5], 0.01)
    assert np.allclose(diff, [0, 0, 0, 0.3, -1.5])


def test_ego_jacobians_match_finite_differences():
    rng = np.random.default_rng(0)
    for _ in range(20):
        x = rng.normal(size=5)
        u = rng.normal(size=2)
        kr, dkr = 0.03, 0.002
        A, B = ego_jacobians(x, u, kr, dkr)

        def f(xx, uu):
            # kappa_r follows s to first order
            return ego_derivative(xx, uu, kr + dkr * (xx[0] - x[0]))

        h = 1e-6
        Afd = np.column_stack([(f(x + h * e, u) - f(x - h * e, u)) / (2 * h) for e in np.eye(5)])
        Bfd = np.column_stack([(f(x, u + h * e) - f(x, u - h * e)) / (2 * h) for e in np.eye(2)])
        assert np.allclose(A, Afd, atol=1e-8) and np.allclose(B, Bfd, atol=1e-8)


def test_rk4_linear_models_exact():
    m = ObstacleMotionModel("cv", 4.0, 0.0)
    poses, _ = propagate(m, (0.0, 0.0, 0.0), 4.0, 0.14, 1)
    assert poses[1, 0] == pytest.approx(0.56, abs=1e-14)
    anchor = predict_anchor(m, (10.0, 0.0, 0.0), 0.14, 25)
    assert anchor[-1, 0] == pytest.approx(24.0, abs=1e-12)
    x = np.array([3.0, 1.0, 0.0, 0.0, 0.0])
    assert np.array_equal(rk4_step(x, lambda xx: ego_derivative(xx, [0, 0], 0.0), 0.1), x)


def test_cca_zero_curvature_closed_form():
    m = ObstacleMotionModel("cca", 2.0, 0.0, 0.0, 1.0)
    dt, n = 0.1, 30
    poses, speeds = propagate(m, (5.0, 0.0, 0.0), 2.0, dt, n)
    t = dt * np.arange(n + 1)
    assert np.allclose(poses[:, 0], 5.0 + 2 * t + 0.5 * t**2, atol=1e-9)
    assert np.allclose(speeds, 2 + t, atol=1e-12)


def test_cca_speed_floor():
    m = ObstacleMotionModel("cca", 1.0, 0.0, 0.0, -2.0)
    poses, speeds = propagate(m, (0.0, 0.0, 0.0), 1.0, 0.1, 20)
    assert speeds.min() >= 0.0 and speeds[-1] == 0.0
    assert np.all(np.diff(poses[:, 0]) >= -1e-15)


def _cca_end(dt, T=3.5):
    m = ObstacleMotionModel("cca", 5.0, 0.3, 0.05, 1.0)
    poses, _ = propagate(m, (0.0, 0.0, 0.3), 5.0, dt, int(round(T / dt)))
    return poses[-1]


def test_cca_matches_fine_step_reference():
    ref = _cca_end(1e-4)
    m = ObstacleMotionModel("cca", 5.0, 0.3, 0.05, 1.0)
    anchor = predict_anchor(m, (0.0, 0.0, 0.3), 0.14, 25)
    assert np.hypot(*(anchor[-1, :2] - ref[:2])) < 1e-3


def test_rk4_order_four_on_cca():
    ref = _cca_end(1e-4)
    e1 = np.hypot(*(_cca_end(0.35)[:2] - ref[:2]))
    e2 = np.hypot(*(_cca_end(0.175)[:2] - ref[:2]))
    assert 16 * 0.9 <= e1 / e2 <= 16 * 1.1


def test_ego_rk4_self_convergence():
    u = np.array([0.05, 0.5])

    def run(dt):
        x = np.array([0.0, 0.0, 0.0, 0.0, 5.0])
        for _ in range(int(round(1.0 / dt))):
            x = rk4_step(x, lambda xx: ego_derivative(xx, u, 0.02), dt)
        return x

    assert np.abs(run(1e-3) - run(1e-4)).max() < 1e-6


def test_types_and_validation():
    s = EgoState(1, 2, 0.1, 0.0, 5)
    assert np.array_equal(EgoState.from_array(s.as_array()).as_array(), s.as_array())
    b = ControlBounds()
    assert np.array_equal(b.clamp([1.0, -9.0]), [0.3, -4.0])
    with pytest.raises(ValueError):
        ControlBounds(u1_min=1.0, u1_max=0.0)
    with pytest.raises(ValueError):
        ObstacleMotionModel("cv", 1.0, 0.0, curvature=0.1)
    with pytest.raises(ValueError):
        ObstacleMotionModel("cv", -1.0)
    with pytest.raises(ValueError):
        rk4_step(np.zeros(2), lambda x: x, 0.0)
