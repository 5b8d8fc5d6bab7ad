"""Planar geometry kernel: hulls, boundary refinement and clipping.

Point sets are plain ``(n, 2)`` float arrays.  The two columns are read as
``(x, y)`` in the Cartesian frame and as ``(s, d)`` in a Frenet frame; none
of the routines here care which.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInput

DEGENERATE_SIDE = 0.1


def as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        return np.zeros((0, 2))
    pts = pts.reshape(-1, 2)
    if not np.isfinite(pts).all():
        raise DegenerateInput("point coordinates must be finite")
    return pts


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def polygon_area(points) -> float:
    """Signed shoelace area (positive for counter-clockwise order)."""
    p = as_points(points)
    if len(p) < 3:
        return 0.0
    x, y = p[:, 0], p[:, 1]
    xn = np.concatenate([x[1:], x[:1]])
    yn = np.concatenate([y[1:], y[:1]])
    return 0.5 * float(x @ yn - xn @ y)


@dataclass(frozen=True, eq=False)
class ConvexPolygon:
    """Strictly convex polygon with counter-clockwise vertices."""

    vertices: np.ndarray

    def __post_init__(self):
        v = as_points(self.vertices)
        if len(v) < 3:
            raise DegenerateInput("a convex polygon needs at least 3 vertices")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    def __len__(self):
        return len(self.vertices)

    @property
    def area(self) -> float:
        return polygon_area(self.vertices)

    @property
    def centroid(self) -> np.ndarray:
        return polygon_centroid(self.vertices)

    def contains(self, p, tol: float = 1e-12) -> bool:
        v = self.vertices
        w = np.roll(v, -1, axis=0)
        c = (w[:, 0] - v[:, 0]) * (p[1] - v[:, 1]) - (w[:, 1] - v[:, 1]) * (p[0] - v[:, 0])
        return bool(np.all(c >= -tol))


def polygon_centroid(points) -> np.ndarray:
    p = as_points(points)
    a = polygon_area(p)
    if abs(a) < 1e-14:
        return p.mean(axis=0)
    x, y = p[:, 0], p[:, 1]
    xn = np.concatenate([x[1:], x[:1]])
    yn = np.concatenate([y[1:], y[:1]])
    c = x * yn - xn * y
    return np.array([np.sum((x + xn) * c), np.sum((y + yn) * c)]) / (6.0 * a)


def inflate_degenerate(points, side: float = DEGENERATE_SIDE) -> np.ndarray:
    """Replace each point by the corners of a small axis-aligned square."""
    pts = as_points(points)
    h = 0.5 * side
    offsets = np.array([[-h, -h], [h, -h], [h, h], [-h, h]])
    return (pts[:, None, :] + offsets[None, :, :]).reshape(-1, 2)


def convex_hull(points) -> ConvexPolygon:
    return _graham(np.unique(as_points(points), axis=0))


def _graham(pts) -> ConvexPolygon:
    """Graham's scan.

    The anchor is the lowest point (ties: leftmost).  Remaining points are
    sorted by polar angle around it, ties by distance, and points that are
    collinear with a hull edge are dropped so the result is strictly convex.
    """
    if len(pts) < 3:
        raise DegenerateInput(f"need at least 3 distinct points, got {len(pts)}")
    scale = float(np.ptp(pts, axis=0).max())
    eps = 1e-12 * max(scale, 1e-300) ** 2

    anchor_idx = np.lexsort((pts[:, 0], pts[:, 1]))[0]
    anchor = pts[anchor_idx]
    rest = np.delete(pts, anchor_idx, axis=0)
    rel = rest - anchor
    ang = np.arctan2(rel[:, 1], rel[:, 0])
    dist = np.hypot(rel[:, 0], rel[:, 1])
    order = np.lexsort((dist, ang))
    rest, dist = rest[order], dist[order]

    # keep only the farthest point on each ray from the anchor
    ax, ay = float(anchor[0]), float(anchor[1])
    kept = []
    for p, dd in zip(rest.tolist(), dist.tolist()):
        if kept:
            q = kept[-1][0]
            cr = (q[0] - ax) * (p[1] - ay) - (q[1] - ay) * (p[0] - ax)
            dot = (q[0] - ax) * (p[0] - ax) + (q[1] - ay) * (p[1] - ay)
            if abs(cr) <= eps and dot > 0:
                if dd > kept[-1][1]:
                    kept[-1] = (p, dd)
                continue
        kept.append((p, dd))

    stack = [[ax, ay]]
    for p, _ in kept:
        while len(stack) >= 2 and _cross(stack[-2], stack[-1], p) <= eps:
            stack.pop()
        stack.append(p)
    if len(stack) < 3:
        raise DegenerateInput("all points are collinear")
    return ConvexPolygon(np.array(stack))


def hull_or_inflate(points) -> ConvexPolygon:
    """Convex hull that tolerates 1-2 point (or collinear) footprints."""
    pts = np.unique(as_points(points), axis=0)
    if len(pts) == 0:
        raise DegenerateInput("empty footprint")
    try:
        return _graham(pts)
    except DegenerateInput:
        return convex_hull(inflate_degenerate(pts))


def refine_polygon(poly: ConvexPolygon, max_spacing: float) -> np.ndarray:
    """Subdivide every edge so consecutive boundary points are at most
    ``max_spacing`` apart.  Original vertices are kept, in order."""
    if not max_spacing > 0:
        raise ValueError("max_spacing must be positive")
    v = poly.vertices
    w = np.concatenate([v[1:], v[:1]])
    lengths = np.hypot(w[:, 0] - v[:, 0], w[:, 1] - v[:, 1])
    counts = np.maximum(1, np.ceil(lengths / max_spacing - 1e-12).astype(int))
    edge = np.repeat(np.arange(len(v)), counts)
    start = np.concatenate([[0], np.cumsum(counts)[:-1]])
    t = (np.arange(len(edge)) - start[edge]) / counts[edge]
    return v[edge] + t[:, None] * (w[edge] - v[edge])


def _vertical_slice(poly: np.ndarray, s: float):
    """Range of d covered by a convex polygon at abscissa s, or None."""
    a = poly
    b = np.roll(poly, -1, axis=0)
    lo_s = np.minimum(a[:, 0], b[:, 0])
    hi_s = np.maximum(a[:, 0], b[:, 0])
    hit = (lo_s <= s) & (s <= hi_s)
    if not np.any(hit):
        return None
    a, b = a[hit], b[hit]
    ds = b[:, 0] - a[:, 0]
    flat = np.abs(ds) < 1e-15
    t = np.where(flat, 0.0, (s - a[:, 0]) / np.where(flat, 1.0, ds))
    d = a[:, 1] + t * (b[:, 1] - a[:, 1])
    d = np.concatenate([d, a[flat, 1], b[flat, 1]])
    return float(d.min()), float(d.max())


def clip_below_curve(poly_sd, boundary, keep: str = "above") -> np.ndarray:
    """Clip a polygon at a curve given as a polyline ``(s, d_bound)``.

    ``keep="above"`` retains the part with ``d >= boundary(s)`` (in-lane side
    of a right boundary), ``keep="below"`` the mirror.  The boundary is
    extended with constant values outside its sampled range.  Returns an
    empty ``(0, 2)`` array when nothing remains.
    """
    poly = as_points(poly_sd)
    bnd = as_points(boundary)
    bnd = bnd[np.argsort(bnd[:, 0], kind="stable")]
    sign = 1.0 if keep == "above" else -1.0
    if keep not in ("above", "below"):
        raise ValueError("keep must be 'above' or 'below'")
    if len(poly) == 0:
        return np.zeros((0, 2))

    def bval(s):
        return np.interp(s, bnd[:, 0], bnd[:, 1])

    # split polygon edges at the boundary breakpoints so the keep predicate
    # is linear along every piece
    loop = []
    n = len(poly)
    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        loop.append(p)
        lo, hi = sorted((p[0], q[0]))
        inner = bnd[(bnd[:, 0] > lo) & (bnd[:, 0] < hi), 0]
        if len(inner):
            t = (inner - p[0]) / (q[0] - p[0])
            for ti in np.sort(t):
                loop.append(p + ti * (q - p))
    loop = np.array(loop)
    f = sign * (loop[:, 1] - bval(loop[:, 0]))
    inside = f >= 0.0
    if not np.any(inside):
        return np.zeros((0, 2))
    if np.all(inside):
        return poly.copy()

    start = int(np.argmax(inside))
    loop = np.roll(loop, -start, axis=0)
    f = np.roll(f, -start)
    m = len(loop)
    out = []
    exit_s = None
    for i in range(m):
        cur, nxt = loop[i], loop[(i + 1) % m]
        fc, fn = f[i], f[(i + 1) % m]
        if fc >= 0:
            out.append(cur)
            if fn < 0:
                if fc > 0:
                    x = cur + fc / (fc - fn) * (nxt - cur)
                    x = np.array([x[0], bval(x[0])])
                    out.append(x)
                exit_s = out[-1][0]
        elif fn >= 0:
            if fn > 0:
                x = cur + fc / (fc - fn) * (nxt - cur)
                x = np.array([x[0], bval(x[0])])
            else:
                x = nxt
            lo, hi = sorted((exit_s, x[0]))
            sel = bnd[(bnd[:, 0] > lo) & (bnd[:, 0] < hi)]
            if exit_s > x[0]:
                sel = sel[::-1]
            for bp in sel:
                rng = _vertical_slice(poly, bp[0])
                if rng is not None and rng[0] - 1e-12 <= bp[1] <= rng[1] + 1e-12:
                    out.append(bp.copy())
            if fn > 0:
                out.append(x)
    return np.array(out)


def clip_halfplane_batch(polys: np.ndarray, level: float = 0.0, keep_above: bool = True) -> list:
    """One Sutherland-Hodgman pass of every polygon in a ``(K, n, 2)`` stack
    against the line ``d = level``.  Returns a list of K vertex arrays."""
    polys = np.asarray(polys, dtype=float)
    f = polys[..., 1] - level
    if not keep_above:
        f = -f
    inside = f >= 0.0
    nxt = np.concatenate([polys[:, 1:], polys[:, :1]], axis=1)
    f_next = np.concatenate([f[:, 1:], f[:, :1]], axis=1)
    crossing = ((f > 0.0) & (f_next < 0.0)) | ((f < 0.0) & (f_next > 0.0))
    denom = np.where(crossing, f - f_next, 1.0)
    t = np.where(crossing, f / denom, 0.0)
    xs = polys + t[..., None] * (nxt - polys)
    xs[..., 1] = np.where(crossing, level, xs[..., 1])
    cand = np.stack([polys, xs], axis=2).reshape(len(polys), -1, 2)
    mask = np.stack([inside, crossing], axis=2).reshape(len(polys), -1)
    counts = mask.sum(axis=1)
    flat = cand[mask]
    return np.split(flat, np.cumsum(counts)[:-1])


def convex_polygons_intersect(a, b, tol: float = 0.0) -> bool:
    """Separating-axis test for two convex polygons (any orientation).
    Touching polygons (overlap depth <= tol) do not intersect."""
    a, b = as_points(a), as_points(b)
    if len(a) == 0 or len(b) == 0:
        return False
    for poly in (a, b):
        edges = np.roll(poly, -1, axis=0) - poly
        normals = np.column_stack([-edges[:, 1], edges[:, 0]])
        norms = np.hypot(normals[:, 0], normals[:, 1])
        normals = normals[norms > 0] / norms[norms > 0, None]
        pa = a @ normals.T
        pb = b @ normals.T
        overlap = np.minimum(pa.max(0), pb.max(0)) - np.maximum(pa.min(0), pb.min(0))
        if np.any(overlap <= tol):
            return False
    return True
