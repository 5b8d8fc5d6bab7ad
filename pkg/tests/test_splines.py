import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from safeplan.errors import DegenerateInput, DomainError, NoProjection
from safeplan.splines import (BoundarySpline1D, FrenetPose, fit_path, frenet_to_cartesian,
                              local_projection, project_points, project_to_frenet, wrap_angle)


def circle_points(r, n=60, arc=2 * np.pi * 0.75):
    th = np.linspace(0, arc, n)
    return np.column_stack([r * np.sin(th), r * (1 - np.cos(th))])


def test_straight_path():
    pts = np.column_stack([np.arange(11.0), np.zeros(11)])
    p = fit_path(pts)
    assert p.length == pytest.approx(10.0, abs=1e-12)
    s = np.linspace(0, 10, 101)
    assert np.abs(p.curvature(s)).max() < 1e-12
    assert np.allclose(p.position(p.knots), pts, atol=1e-9)


@pytest.mark.parametrize("r", [5.0, 10.0])
def test_circle_curvature(r):
    p = fit_path(circle_points(r))
    s = np.linspace(0.1 * p.length, 0.9 * p.length, 200)
    assert np.allclose(p.curvature(s), 1.0 / r, rtol=0.02)
    mirrored = fit_path(circle_points(r) * [1, -1])
    assert np.allclose(mirrored.curvature(s), -1.0 / r, rtol=0.02)


def test_arclength_and_natural_ends():
    p = fit_path(circle_points(10.0, n=25))
    s = np.linspace(0, p.length, 2001)
    speed = np.hypot(*p.derivative(s).T)
    assert np.abs(speed - 1).max() < 0.01
    scale = np.abs(p._spline.coeffs).max()
    assert np.abs(p.derivative(np.array([0.0, p.length]), 2)).max() < 1e-9 * scale
    # numeric arclength between knots matches the parameter difference
    k = p.knots
    for a, b in zip(k[:-1], k[1:]):
        t = np.linspace(a, b, 401)
        seg = np.hypot(*np.diff(p.position(t), axis=0).T).sum()
        assert seg == pytest.approx(b - a, rel=0.01)


def test_fit_path_rejects_duplicates():
    with pytest.raises(DegenerateInput):
        fit_path([[0, 0], [1, 0], [1, 0], [2, 0]])
    with pytest.raises(DegenerateInput):
        fit_path([[0, 0], [1, 0]])


def test_projection_simple_cases():
    p = fit_path(np.column_stack([np.arange(11.0), np.zeros(11)]))
    pose = project_to_frenet(p, np.array([3.0, 0.0]))
    assert pose.s == pytest.approx(3.0, abs=1e-6) and pose.d == pytest.approx(0.0, abs=1e-6)
    pose = project_to_frenet(p, np.array([4.0, 2.0]), heading=0.3)
    assert (pose.s, pose.d, pose.heading_diff) == pytest.approx((4.0, 2.0, 0.3), abs=1e-9)
    xy, h = frenet_to_cartesian(p, FrenetPose(2.0, -1.0))
    assert np.allclose(xy, [2.0, -1.0]) and h == pytest.approx(0.0)
    with pytest.raises(NoProjection):
        project_to_frenet(p, np.array([5.0, 80.0]))
    with pytest.raises(DomainError):
        frenet_to_cartesian(p, FrenetPose(12.0, 0.0))


def test_projection_matches_dense_argmin():
    rng = np.random.default_rng(11)
    p = fit_path(circle_points(20.0, n=40, arc=np.pi))
    dense_s = np.linspace(0, p.length, 1_000_001)
    dense = p.position(dense_s)
    spacing = dense_s[1]
    for _ in range(100):
        s0 = rng.uniform(2, p.length - 2)
        q = p.position(s0) + rng.uniform(-4, 4) * p.normal(s0)
        s, _ = project_points(p, q)
        i = np.argmin(np.sum((dense - q) ** 2, axis=1))
        assert abs(s[0] - dense_s[i]) < 1e-4 + spacing


@settings(max_examples=80, deadline=None)
@given(st.floats(0.5, 50.0), st.floats(-4.0, 4.0), st.floats(-1.0, 1.0))
def test_frame_round_trip(s, d, chi):
    p = fit_path(circle_points(20.0, n=40, arc=np.pi))
    s = min(s, p.length - 0.5)
    xy, heading = frenet_to_cartesian(p, FrenetPose(s, d, chi))
    back = project_to_frenet(p, xy, heading)
    assert abs(back.s - s) < 1e-6 and abs(back.d - d) < 1e-6
    assert abs(wrap_angle(back.heading_diff - chi)) < 1e-9


def test_local_projection_parallel_offset_and_round_trip():
    left = BoundarySpline1D.constant(3.0, 100.0)
    pts = np.array([[10.0, 1.0], [20.0, -2.0], [55.0, 3.0]])
    out = local_projection(None, left, pts)
    assert np.allclose(out, np.column_stack([pts[:, 0], pts[:, 1] - 3.0]), atol=1e-12)
    assert np.allclose(local_projection(left, None, out), pts, atol=1e-12)
    assert abs(local_projection(None, left, [[30.0, 3.0]])[0, 1]) < 1e-6

    s = np.linspace(0, 100, 41)
    gentle = BoundarySpline1D.fit(s, 2.0 + 0.5 * np.sin(s / 15.0))
    rng = np.random.default_rng(2)
    q = np.column_stack([rng.uniform(10, 90, 200), rng.uniform(-3, 4, 200)])
    there = local_projection(None, gentle, q)
    back = local_projection(gentle, None, there)
    assert np.abs(back - q).max() < 0.01


class _Opaque:
    # hides the flat shortcut so the general Newton path runs
    def __init__(self, spline):
        self.derivatives = spline.derivatives


def test_flat_boundary_shortcut_matches_newton():
    flat = BoundarySpline1D.constant(-1.7, 100.0)
    assert flat.level == -1.7 and BoundarySpline1D.fit([0, 50, 100], [0, 1, 0]).level is None
    q = np.random.default_rng(5).uniform([0, -4], [100, 4], (300, 2))
    for a, b in ((None, flat), (flat, None)):
        fast = local_projection(a, b, q)
        slow = local_projection(a and _Opaque(a), b and _Opaque(b), q)
        assert np.array_equal(fast, slow)


def test_wrap_angle_range():
    a = wrap_angle(np.array([np.pi, -np.pi, 3 * np.pi, 0.1]))
    assert np.allclose(a, [np.pi, np.pi, np.pi, 0.1])
