"""Natural cubic splines for the reference path and lateral boundaries.

The reference path is a 2D natural cubic spline reparameterized by
arclength; lane boundaries and speed limits are 1D splines of lateral
deviation (or speed) over that arclength.  Lateral offsets are positive to
the left of the direction of travel.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import solve_banded

from .errors import DegenerateInput, DomainError, NoProjection

CAPTURE_RADIUS = 50.0
SEED_SPACING = 0.5
MAX_SEEDS = 16
NEWTON_ITERATIONS = 20
NEWTON_TOL = 1e-10
LOCAL_WINDOW = 5.0


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    w = np.where(w == -np.pi, np.pi, w)
    return float(w) if np.ndim(w) == 0 else w


def _natural_second_derivatives(x, y):
    n = len(x)
    h = np.diff(x)
    m = np.zeros_like(y)
    if n < 3:
        return m
    slopes = np.diff(y, axis=0) / h.reshape(-1, *([1] * (y.ndim - 1)))
    rhs = 6.0 * (slopes[1:] - slopes[:-1])
    ab = np.zeros((3, n - 2))
    ab[0, 1:] = h[1:-1]
    ab[1, :] = 2.0 * (h[:-1] + h[1:])
    ab[2, :-1] = h[1:-1]
    m[1:-1] = solve_banded((1, 1), ab, rhs)
    return m


class CubicSpline1D:
    """Piecewise cubic ``y(t) = a + b dt + c dt^2 + d dt^3`` on sorted knots.

    ``y`` may carry trailing dimensions (a 2D curve is a spline with values
    of shape ``(2,)``).  Outside the knot range the spline continues along
    its end tangent.
    """

    def __init__(self, knots, coeffs):
        self.knots = np.asarray(knots, dtype=float)
        self.coeffs = np.asarray(coeffs, dtype=float)

    @classmethod
    def natural(cls, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if len(x) < 2 or len(x) != len(y):
            raise DegenerateInput("need at least two knots with matching values")
        h = np.diff(x)
        if np.any(h <= 0):
            raise DegenerateInput("knots must be strictly increasing")
        m = _natural_second_derivatives(x, y)
        hs = h.reshape(-1, *([1] * (y.ndim - 1)))
        a = y[:-1]
        b = (y[1:] - y[:-1]) / hs - hs * (2.0 * m[:-1] + m[1:]) / 6.0
        c = m[:-1] / 2.0
        d = (m[1:] - m[:-1]) / (6.0 * hs)
        return cls(x, np.stack([a, b, c, d], axis=1))

    @property
    def domain(self):
        return float(self.knots[0]), float(self.knots[-1])

    def in_domain(self, t, tol: float = 1e-9):
        lo, hi = self.domain
        t = np.asarray(t)
        return (t >= lo - tol) & (t <= hi + tol)

    def _end_slopes(self):
        c0 = self.coeffs[0]
        cn = self.coeffs[-1]
        h = self.knots[-1] - self.knots[-2]
        end_val = cn[0] + cn[1] * h + cn[2] * h**2 + cn[3] * h**3
        end_slope = cn[1] + 2 * cn[2] * h + 3 * cn[3] * h**2
        return c0[0], c0[1], end_val, end_slope

    def derivatives(self, t):
        """Value, first and second derivative at ``t`` (1D array) in one pass."""
        tt = np.asarray(t, dtype=float)
        k = self.knots
        idx = np.minimum(np.maximum(np.searchsorted(k, tt, side="right") - 1, 0), len(k) - 2)
        lo, hi = tt < k[0], tt > k[-1]
        outside = lo.any() or hi.any()
        if outside:
            ends = np.where(lo, k[0], np.where(hi, k[-1], tt))
            dt = ends - k[idx]
        else:
            dt = tt - k[idx]
        c = self.coeffs[idx]
        extra = (slice(None),) + (None,) * (self.coeffs.ndim - 2)
        dt_ = dt[extra]
        c0, c1, c2, c3 = c[:, 0], c[:, 1], c[:, 2], c[:, 3]
        val = c0 + dt_ * (c1 + dt_ * (c2 + dt_ * c3))
        d1 = c1 + dt_ * (2 * c2 + 3 * dt_ * c3)
        d2 = 2 * c2 + 6 * dt_ * c3
        if outside:
            out = (lo | hi)
            val = val + ((tt - ends)[extra]) * d1
            d2 = np.where(out[extra], 0.0, d2)
        return val, d1, d2

    def __call__(self, t, nu: int = 0):
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        tt = np.atleast_1d(t)
        k = self.knots
        idx = np.minimum(np.maximum(np.searchsorted(k, tt, side="right") - 1, 0), len(k) - 2)
        dt = tt - k[idx]
        c = self.coeffs[idx]
        extra = (slice(None),) + (None,) * (self.coeffs.ndim - 2)
        dt_ = dt[extra]
        if nu == 0:
            out = c[:, 0] + dt_ * (c[:, 1] + dt_ * (c[:, 2] + dt_ * c[:, 3]))
        elif nu == 1:
            out = c[:, 1] + dt_ * (2 * c[:, 2] + 3 * dt_ * c[:, 3])
        elif nu == 2:
            out = 2 * c[:, 2] + 6 * dt_ * c[:, 3]
        elif nu == 3:
            out = 6 * c[:, 3] + 0 * dt_
        else:
            raise ValueError("nu must be 0..3")
        below = tt < k[0]
        above = tt > k[-1]
        if np.any(below) or np.any(above):
            v0, s0, v1, s1 = self._end_slopes()
            if nu == 0:
                out[below] = v0 + (tt[below] - k[0])[extra] * s0
                out[above] = v1 + (tt[above] - k[-1])[extra] * s1
            elif nu == 1:
                out[below] = s0
                out[above] = s1
            else:
                out[below] = 0.0
                out[above] = 0.0
        return out[0] if scalar else out


class BoundarySpline1D(CubicSpline1D):
    """Lateral deviation (or speed) as a natural cubic spline over arclength."""

    @classmethod
    def fit(cls, s, values):
        s = np.asarray(s, dtype=float)
        v = np.asarray(values, dtype=float)
        order = np.argsort(s, kind="stable")
        s, v = s[order], v[order]
        keep = np.concatenate([[True], np.diff(s) > 1e-9])
        s, v = s[keep], v[keep]
        if len(s) < 2:
            raise DegenerateInput("boundary needs at least two distinct knots")
        spl = cls.natural(s, v)
        return cls(spl.knots, spl.coeffs)

    @classmethod
    def constant(cls, value, length):
        return cls.fit([0.0, float(length)], [value, value])

    @cached_property
    def level(self):
        """The value of a flat spline, ``None`` if it varies."""
        c = self.coeffs
        if c.ndim == 2 and not c[:, 1:].any() and np.all(c[:, 0] == c[0, 0]):
            return float(c[0, 0])
        return None


@dataclass(frozen=True)
class FrenetPose:
    s: float
    d: float
    heading_diff: float = 0.0
    extrapolated: bool = False


def _simpson_lengths(spline, knots, sub: int = 8):
    """Arclength of each knot interval by composite Simpson's rule."""
    a, b = knots[:-1], knots[1:]
    t = a[:, None] + (b - a)[:, None] * np.linspace(0.0, 1.0, 2 * sub + 1)[None, :]
    d = spline(t.ravel(), 1).reshape(t.shape + (2,))
    speed = np.hypot(d[..., 0], d[..., 1])
    w = np.ones(2 * sub + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return (b - a) / (6.0 * sub) * (speed @ w)


class PathSpline2D:
    """Arclength-parameterized natural cubic reference curve ``[0, L] -> R^2``."""

    def __init__(self, points, spline: CubicSpline1D):
        self.points = np.asarray(points, dtype=float)
        self._spline = spline
        self.length = float(spline.knots[-1])
        n = max(2, int(math.ceil(self.length / SEED_SPACING)) + 1)
        self._seed_s = np.linspace(0.0, self.length, n)
        self._seed_xy = self._spline(self._seed_s)

    @property
    def knots(self):
        return self._spline.knots

    @property
    def domain(self):
        return 0.0, self.length

    def position(self, s):
        return self._spline(s)

    def derivative(self, s, nu: int = 1):
        return self._spline(s, nu)

    def tangent_angle(self, s):
        d = self._spline(s, 1)
        return np.arctan2(d[..., 1], d[..., 0])

    def normal(self, s):
        d = self._spline(s, 1)
        n = np.stack([-d[..., 1], d[..., 0]], axis=-1)
        return n / np.linalg.norm(n, axis=-1, keepdims=True)

    def curvature(self, s):
        """Signed curvature ``x'y'' - x''y'`` (positive turning left)."""
        d1 = self._spline(s, 1)
        d2 = self._spline(s, 2)
        return d1[..., 0] * d2[..., 1] - d2[..., 0] * d1[..., 1]

    def curvature_derivative(self, s):
        d1 = self._spline(s, 1)
        d3 = self._spline(s, 3)
        return d1[..., 0] * d3[..., 1] - d3[..., 0] * d1[..., 1]

    def in_domain(self, s, tol: float = 1e-9):
        s = np.asarray(s)
        return (s >= -tol) & (s <= self.length + tol)


def fit_path(points) -> PathSpline2D:
    """Natural cubic spline through ``points``, reparameterized by arclength.

    The first fit uses chord lengths as parameter; knots are then moved to
    the cumulative Simpson arclength of that fit and the spline is refit.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < 3:
        raise DegenerateInput("a path needs at least 3 points")
    chords = np.hypot(*np.diff(pts, axis=0).T)
    if np.any(chords < 1e-9):
        raise DegenerateInput("duplicate consecutive path points")
    u = np.concatenate([[0.0], np.cumsum(chords)])
    first = CubicSpline1D.natural(u, pts)
    s = np.concatenate([[0.0], np.cumsum(_simpson_lengths(first, u))])
    return PathSpline2D(pts, CubicSpline1D.natural(s, pts))


def _project(path: PathSpline2D, pts: np.ndarray, capture_radius: float, extrapolate: bool):
    q = len(pts)
    seed_s = path._seed_s
    diff_x = pts[:, 0:1] - path._seed_xy[None, :, 0]
    diff_y = pts[:, 1:2] - path._seed_xy[None, :, 1]
    dist2 = diff_x * diff_x + diff_y * diff_y
    inf_col = np.full((q, 1), np.inf)
    padded = np.concatenate([inf_col, dist2, inf_col], axis=1)
    local = (dist2 <= padded[:, :-2]) & (dist2 <= padded[:, 2:])
    counts = local.sum(axis=1)
    if counts.max() <= MAX_SEEDS:
        qi, si = np.nonzero(local)
        s = seed_s[si]
    else:
        cand = np.where(local, dist2, np.inf)
        seed_idx = np.argpartition(cand, MAX_SEEDS - 1, axis=1)[:, :MAX_SEEDS]
        valid = np.isfinite(np.take_along_axis(cand, seed_idx, axis=1))
        qi, si = np.nonzero(valid)
        s = seed_s[seed_idx[qi, si]]
    p = pts[qi]
    lo, hi = (-np.inf, np.inf) if extrapolate else (0.0, path.length)
    spl = path._spline
    for _ in range(NEWTON_ITERATIONS):
        pos, d1, d2 = spl.derivatives(s)
        r = pos - p
        g = r[:, 0] * d1[:, 0] + r[:, 1] * d1[:, 1]
        gp = d1[:, 0] * d1[:, 0] + d1[:, 1] * d1[:, 1] + r[:, 0] * d2[:, 0] + r[:, 1] * d2[:, 1]
        gp = np.where(gp > 1e-9, gp, 1.0)
        step = np.minimum(np.maximum(g / gp, -2.0), 2.0)
        s_new = np.minimum(np.maximum(s - step, lo), hi)
        delta = np.abs(s_new - s).max()
        s = s_new
        if delta < NEWTON_TOL:
            break
    pos, d1, _ = spl.derivatives(s)
    r = pos - p
    g = r[:, 0] * d1[:, 0] + r[:, 1] * d1[:, 1]
    dist = r[:, 0] * r[:, 0] + r[:, 1] * r[:, 1]
    at_end = (s <= lo + 1e-12) | (s >= hi - 1e-12)
    ok = (np.abs(g) <= 1e-6 * (1.0 + np.sqrt(dist))) | at_end
    dist = np.where(ok, dist, np.inf)

    if len(qi) == q:
        best_s, best_d2 = s, dist
        tan, foot = d1, pos
    else:
        best_s = np.full(q, np.nan)
        best_d2 = np.full(q, np.inf)
        order = np.lexsort((dist, qi))
        qi_sorted = qi[order]
        first = np.concatenate([[True], qi_sorted[1:] != qi_sorted[:-1]])
        sel = order[first]
        best_s[qi[sel]] = s[sel]
        best_d2[qi[sel]] = dist[sel]
        tan = d1[sel][np.argsort(qi[sel])]
        foot = pos[sel][np.argsort(qi[sel])]
    if not np.all(np.isfinite(best_d2)):
        raise NoProjection("Newton projection failed for all seeds")
    if best_d2.max() > capture_radius**2:
        raise NoProjection(f"point farther than capture radius {capture_radius} m")
    rel = pts - foot
    d = (tan[:, 0] * rel[:, 1] - tan[:, 1] * rel[:, 0]) / np.hypot(tan[:, 0], tan[:, 1])
    return best_s, d


def project_points(path: PathSpline2D, points, capture_radius: float = CAPTURE_RADIUS,
                   extrapolate: bool = False):
    """Vectorized Cartesian -> Frenet projection; returns ``(s, d)`` arrays."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        return np.zeros(0), np.zeros(0)
    return _project(path, pts, capture_radius, extrapolate)


def project_to_frenet(path: PathSpline2D, p, heading: float = 0.0,
                      capture_radius: float = CAPTURE_RADIUS, extrapolate: bool = False) -> FrenetPose:
    s, d = project_points(path, p, capture_radius, extrapolate)
    s, d = float(s[0]), float(d[0])
    chi = wrap_angle(heading - float(path.tangent_angle(s)))
    return FrenetPose(s, d, chi, extrapolated=not bool(path.in_domain(s)))


def frenet_to_cartesian(path: PathSpline2D, pose: FrenetPose, allow_extrapolation: bool = False):
    if not allow_extrapolation and not path.in_domain(pose.s):
        raise DomainError(f"s={pose.s} outside [0, {path.length}]")
    p = path.position(pose.s) + pose.d * path.normal(pose.s)
    heading = wrap_angle(float(path.tangent_angle(pose.s)) + pose.heading_diff)
    return p, heading


def frenet_to_cartesian_many(path: PathSpline2D, s, d):
    s = np.asarray(s, dtype=float)
    return path.position(s) + np.asarray(d, dtype=float)[..., None] * path.normal(s)


def _curve_eval(curve, s, nu):
    if curve is None:
        return np.zeros_like(s)
    return curve(s, nu)


def local_projection(from_curve, to_curve, points_sd, window: float = LOCAL_WINDOW) -> np.ndarray:
    """Re-express ``(s, d)`` points measured from ``from_curve`` as offsets
    from ``to_curve``.

    Both curves are lateral-deviation functions over the reference arclength;
    ``None`` stands for the reference line itself.  A point is first placed in
    the reference ``(s, d)`` plane along the normal of ``from_curve``, then
    dropped onto the nearest foot of ``to_curve`` searched within ``window``
    metres of its arclength.
    """
    pts = np.asarray(points_sd, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        return np.zeros((0, 2))
    s0, d0 = pts[:, 0], pts[:, 1]
    if from_curve is None:
        S, D = s0, d0
    elif getattr(from_curve, "level", None) is not None:
        S, D = s0, from_curve.level + d0
    else:
        f, fp, _ = from_curve.derivatives(s0)
        nrm = np.sqrt(1.0 + fp * fp)
        S = s0 - d0 * fp / nrm
        D = f + d0 / nrm
    if to_curve is None:
        return np.column_stack([S, D])
    if getattr(to_curve, "level", None) is not None:
        # flat curve: the foot is straight across
        return np.column_stack([S, D - to_curve.level])

    t = S.copy()
    for _ in range(NEWTON_ITERATIONS):
        g, g1, g2 = to_curve.derivatives(t)
        h = (t - S) + (g - D) * g1
        hp = 1.0 + g1 * g1 + (g - D) * g2
        hp = np.where(hp > 1e-6, hp, 1.0 + g1 * g1)
        step = np.minimum(np.maximum(h / hp, -0.25 * window), 0.25 * window)
        t_new = np.minimum(np.maximum(t - step, S - window), S + window)
        delta = np.abs(t_new - t).max()
        t = t_new
        if delta < NEWTON_TOL:
            break
    if np.any(np.abs(t - S) >= window - 1e-9):
        raise DomainError("local projection left its search window")
    g, g1, _ = to_curve.derivatives(t)
    dn = ((D - g) - (S - t) * g1) / np.sqrt(1.0 + g1 * g1)
    return np.column_stack([t, dn])
