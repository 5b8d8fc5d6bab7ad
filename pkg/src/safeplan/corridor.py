"""Time-indexed driving corridor.

Obstacle protrusions are turned into augmented lane boundaries per horizon
step, blended with the base boundaries by a homotopy parameter, and checked
for blockades.  A blockade yields an anticipatory stop point and a speed
limit that ramps down to it.

Augmented boundaries are stored as ``base(s) +/- bump(s, k)`` where the bump
is a non-negative profile sampled on a uniform grid and interpolated with
PCHIP.  PCHIP never overshoots its samples, so the bump stays non-negative
(the corridor only ever shrinks) and no obstacle means the base spline
exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from .dynamics import ControlBounds
from .projection import LEFT, RIGHT
from .splines import BoundarySpline1D

GRID_SPACING = 0.05
BLOCKADE_SCAN = 0.05
OMEGA_MIN = 0.05
HOMOTOPY_STEPS = 20


@dataclass(frozen=True)
class EgoGeometry:
    w: float = 1.8
    l_f: float = 3.6
    l_b: float = 1.0

    def __post_init__(self):
        if not (self.w > 0 and self.l_f > 0 and self.l_b > 0):
            raise ValueError("ego dimensions must be positive")


@dataclass(frozen=True)
class Blockade:
    s_h: float
    k_h: int
    s_stop: float
    s_decl: float
    v0: float
    active: bool


def homotopy_schedule(z: int = HOMOTOPY_STEPS) -> np.ndarray:
    """Linear schedule from 0 to 1 with ``z`` points; ``z = 1`` is just ``[1]``."""
    if z < 1:
        raise ValueError("need at least one homotopy step")
    if z == 1:
        return np.array([1.0])
    return np.linspace(0.0, 1.0, z)


# ---------------------------------------------------------------- contours

def complementary_contour(poly: np.ndarray, eta: int) -> np.ndarray:
    """In-lane face of a protrusion polygon, sorted by s.

    The vertex loop is split at its min-s and max-s vertices; the chain with
    the larger mean d faces the lane for a right-aligned obstacle, the other
    one for a left-aligned obstacle.
    """
    p = np.asarray(poly, dtype=float)
    if len(p) == 0:
        return p.reshape(0, 2)
    if len(p) < 3:
        return p[np.argsort(p[:, 0], kind="stable")]
    s, d = p[:, 0].tolist(), p[:, 1].tolist()
    i0, i1 = s.index(min(s)), s.index(max(s))
    n = len(p)
    j = (i1 - i0) % n
    a = [(i0 + t) % n for t in range(j + 1)]
    b = [(i0 + t) % n for t in range(n, j - 1, -1)]
    mean_a, mean_b = sum(d[i] for i in a) / len(a), sum(d[i] for i in b) / len(b)
    upper, lower = (a, b) if mean_a >= mean_b else (b, a)
    chain = p[upper if eta == RIGHT else lower]
    # the chain is s-monotone for convex input; sort anyway for safety
    return chain[np.argsort(chain[:, 0], kind="stable")]


def merge_contours(contours: list, eta: int, gap: float) -> list:
    """Merge same-side contours whose s-extents (already inflated by
    ``pad_lo``/``pad_hi``) overlap or are closer than ``gap``.

    ``contours`` is a list of ``(chain, s_lo, s_hi)``; merged groups are
    replaced by the in-lane chain of the convex hull of their union, so the
    boundary does not dip between them.
    """
    if len(contours) < 2:
        return [c[0] for c in contours]
    order = sorted(range(len(contours)), key=lambda i: contours[i][1])
    groups, cur, cur_hi = [], [order[0]], contours[order[0]][2]
    for i in order[1:]:
        if contours[i][1] - cur_hi < gap:
            cur.append(i)
            cur_hi = max(cur_hi, contours[i][2])
        else:
            groups.append(cur)
            cur, cur_hi = [i], contours[i][2]
    groups.append(cur)
    out = []
    for g in groups:
        if len(g) == 1:
            out.append(contours[g[0]][0])
            continue
        pts = np.vstack([contours[i][0] for i in g])
        out.append(hull_chain(pts, upper=(eta == RIGHT)))
    return out


def hull_chain(points: np.ndarray, upper: bool = True) -> np.ndarray:
    """Upper (or lower) convex hull chain of a point set, sorted by s.

    Monotone-chain construction; collinear points are dropped.
    """
    pts = np.asarray(points, dtype=float)
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    sgn = 1.0 if upper else -1.0
    chain = []
    for s, d in pts[order].tolist():
        while len(chain) >= 2:
            (s0, d0), (s1, d1) = chain[-2], chain[-1]
            # pop while the middle point is not strictly outside
            if sgn * ((s1 - s0) * (d - d0) - (d1 - d0) * (s - s0)) >= 0:
                chain.pop()
            else:
                break
        if chain and chain[-1][0] == s:
            # same abscissa: keep the extreme one
            if sgn * (d - chain[-1][1]) > 0:
                chain[-1] = [s, d]
            continue
        chain.append([s, d])
    return np.array(chain)


def _window_extreme(cs: np.ndarray, cd: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Max of piecewise-linear chains over windows ``[a, b]``, batched.

    ``cs``/``cd`` are ``(U, P)`` chains padded by repeating their last
    vertex, ``a``/``b`` are ``(U, W)``.  Windows that miss a chain's s-extent
    give -inf.
    """
    n_u, n_p = cs.shape
    aa = np.maximum(a, cs[:, :1])
    bb = np.minimum(b, cs[:, -1:])
    # all rows on one sorted axis, so one searchsorted serves every chain
    shift = np.arange(n_u)[:, None] * (float(np.ptp(cs, axis=1).max()) + 1.0) - cs[:, :1]
    keys, vals = (cs + shift).ravel(), cd.ravel()
    first = (np.arange(n_u) * n_p)[:, None]

    def at(x):
        j = np.clip(np.searchsorted(keys, x + shift, side="right") - 1, first, first + n_p - 2)
        x0, x1, y0, y1 = cs.ravel()[j], cs.ravel()[j + 1], vals[j], vals[j + 1]
        span = x1 - x0
        t = np.clip((x - x0) / np.where(span > 0, span, 1.0), 0.0, 1.0)
        return np.where(span > 0, y0 + t * (y1 - y0), np.maximum(y0, y1))

    # vertices inside each window: range max from a sparse table
    lo = np.clip(np.searchsorted(keys, aa + shift, side="left"), first, first + n_p - 1)
    hi = np.clip(np.searchsorted(keys, bb + shift, side="right"), first, first + n_p)
    table = [vals]
    while 2 ** len(table) <= n_p:
        prev, step = table[-1], 2 ** (len(table) - 1)
        table.append(np.maximum(prev, np.concatenate([prev[step:], np.full(step, -np.inf)])))
    table = np.array(table)
    n = np.maximum(hi - lo, 1)
    lev = np.floor(np.log2(n)).astype(int)
    vmax = np.maximum(table[lev, lo], table[lev, np.maximum(hi - 2 ** lev, lo)])
    vmax = np.where(hi > lo, vmax, -np.inf)
    out = np.maximum(np.maximum(at(aa), at(bb)), vmax)
    return np.where(aa <= bb, out, -np.inf)


# ---------------------------------------------------------------- corridor

@dataclass
class Corridor:
    """Immutable-after-build corridor over ``k = 0..N``.

    ``right``/``left`` are the base boundaries, ``bump_right``/``bump_left``
    the ``(N+1, G)`` augmentation samples on ``grid``.
    """

    length: float
    right: BoundarySpline1D
    left: BoundarySpline1D
    grid: np.ndarray
    bump_right: np.ndarray
    bump_left: np.ndarray
    v_road: float
    controls: ControlBounds = field(default_factory=ControlBounds)
    omega_min: float = OMEGA_MIN
    s_start: float = 0.0
    path: object = None
    blockade: Blockade | None = None

    def __post_init__(self):
        self._pchip, self._cols = fit_bumps(self.grid, self.bump_right, self.bump_left)
        for a in (self.grid, self.bump_right, self.bump_left):
            a.setflags(write=False)
        if self.blockade is None:
            self.blockade = _find_blockade(self)

    @property
    def steps(self):
        return self.bump_right.shape[0] - 1

    def _bumps(self, s, k):
        """Right and left bump values and slopes at ``s`` (1D) and step ``k``."""
        pc = self._pchip
        if pc is None:
            z = np.zeros_like(s)
            return z, z, z, z
        g = pc.x
        inside = (s >= g[0]) & (s <= g[-1])
        sc = np.minimum(np.maximum(s, g[0]), g[-1])
        i = np.clip(np.searchsorted(g, sc, side="right") - 1, 0, len(g) - 2)
        t = sc - g[i]
        out = []
        for col in (self._cols[k], self._cols[k + self.steps + 1]):
            c = pc.c[:, i, col]  # (4, m) power-basis coefficients, highest first
            out.append(np.where(inside, ((c[0] * t + c[1]) * t + c[2]) * t + c[3], 0.0))
            out.append(np.where(inside, (3.0 * c[0] * t + 2.0 * c[1]) * t + c[2], 0.0))
        return tuple(out)

    def bounds(self, s, k, zeta: float):
        """``(d_lo, d_hi, d_lo', d_hi')`` at arclength ``s`` and step ``k``
        (broadcast together) for homotopy parameter ``zeta``."""
        s = np.asarray(s, dtype=float)
        k = np.broadcast_to(np.asarray(k, dtype=int), s.shape)
        s1, k1 = s.reshape(-1), k.reshape(-1)
        r, r1, _ = self.right.derivatives(s1)
        lft, l1, _ = self.left.derivatives(s1)
        br, dbr, bl, dbl = self._bumps(s1, k1)
        shp = s.shape
        return ((r + zeta * br).reshape(shp), (lft - zeta * bl).reshape(shp),
                (r1 + zeta * dbr).reshape(shp), (l1 - zeta * dbl).reshape(shp))

    def blend(self, s, k, zeta: float):
        lo, hi, _, _ = self.bounds(s, k, zeta)
        return lo, hi

    def augmented(self, s, k):
        return self.blend(s, k, 1.0)

    def tunnel_width(self, s, k):
        lo, hi = self.blend(s, k, 1.0)
        return hi - lo

    # speed limit -------------------------------------------------------
    def augmented_speed(self, s):
        """Speed limit with the stop ramp, and its s-derivative."""
        s = np.asarray(s, dtype=float)
        b = self.blockade
        if b is None or not b.active:
            return np.full_like(s, self.v_road), np.zeros_like(s)
        return ramp_speed(s, b.s_decl, b.s_stop, b.v0)

    def speed_bound(self, s, zeta: float):
        """``(v_hi, v_hi')`` blended between road limit and the stop ramp."""
        v, dv = self.augmented_speed(s)
        return (1.0 - zeta) * self.v_road + zeta * v, zeta * dv

    def blend_speed(self, s, zeta: float):
        return self.speed_bound(s, zeta)[0]

    @property
    def s_stop(self):
        return self.blockade.s_stop if self.blockade is not None else self.length


def fit_bumps(grid: np.ndarray, bump_right: np.ndarray, bump_left: np.ndarray):
    """PCHIP interpolant of the bump samples and the column of each profile.

    Profiles ``0..N`` are the right bumps, ``N+1..2N+1`` the left ones.  The
    fit covers only the support of the bumps plus two zero nodes on each
    side, which gives zero end slopes, so the pieces equal those of a
    full-grid fit.  Repeated profiles (static obstacles) share a column.
    Returns ``(None, None)`` when there is no bump at all.
    """
    rows = np.concatenate([bump_right, bump_left])
    cols = np.flatnonzero(np.any(rows > 0, axis=0))
    if not len(cols):
        return None, None
    lo, hi = max(cols[0] - 2, 0), min(cols[-1] + 3, len(grid))
    rows = rows[:, lo:hi]
    seen, keep, index = {}, [], np.empty(len(rows), dtype=int)
    for j, row in enumerate(rows):
        key = row.tobytes()
        if key not in seen:
            seen[key] = len(keep)
            keep.append(j)
        index[j] = seen[key]
    return PchipInterpolator(grid[lo:hi], rows[keep].T, axis=0), index


def ramp_speed(s, s_decl: float, s_stop: float, v0: float):
    """Piecewise-linear limit: ``v0`` before ``s_decl``, linear to zero at
    ``s_stop``, zero after.  Returns value and derivative."""
    s = np.asarray(s, dtype=float)
    span = s_stop - s_decl
    if span <= 0:
        v = np.where(s < s_stop, v0, 0.0)
        return v, np.zeros_like(s)
    frac = (s_stop - s) / span
    v = np.where(s < s_decl, v0, np.where(s <= s_stop, v0 * frac, 0.0))
    dv = np.where((s >= s_decl) & (s <= s_stop), -v0 / span, 0.0)
    return v, dv


def speed_profile(s_stop: float, v_road: float, controls: ControlBounds, s_start: float = 0.0):
    """Braking point and initial limit for a stop at ``s_stop``.

    Returns ``(s_decl, v0)``.  Distances are measured from ``s_start``.
    """
    if not v_road > 0:
        raise ValueError("road speed limit must be positive")
    decel = abs(controls.u2_min)
    if decel == 0:
        raise ValueError("braking needs u2_min < 0")
    ds = v_road**2 / (2.0 * decel)
    avail = s_stop - s_start
    if avail >= ds:
        return s_stop - ds, v_road
    return s_start, math.sqrt(2.0 * decel * max(avail, 0.0))


# ---------------------------------------------------------------- building

def augment_boundaries(protrusions, right: BoundarySpline1D, left: BoundarySpline1D,
                       ego: EgoGeometry, length: float, steps: int,
                       grid_spacing: float = GRID_SPACING):
    """Bump samples ``(grid, bump_right, bump_left)`` for steps ``0..steps``.

    Each protrusion's in-lane face is dilated by the ego footprint plus the
    obstacle margin: laterally by ``margin + w/2``, longitudinally so that
    every reference position whose body span ``[s - l_b, s + l_f]`` meets the
    face (plus margin) is constrained.  Grid samples take the extreme over
    their whole cell, which keeps the interpolated boundary conservative.
    """
    n_cells = max(int(math.ceil(length / grid_spacing)), 1)
    grid = np.linspace(0.0, length, n_cells + 1)
    h = grid[1] - grid[0]
    k_count = steps + 1
    bump_r = np.zeros((k_count, len(grid)))
    bump_l = np.zeros((k_count, len(grid)))
    if not protrusions:
        return grid, bump_r, bump_l

    # base boundary extremes over each cell
    probe = np.concatenate([grid - h, grid, grid + h])
    br = right(probe).reshape(3, -1)
    bl = left(probe).reshape(3, -1)
    base_r_min = br.min(axis=0)
    base_l_max = bl.max(axis=0)

    for p in protrusions:
        if p.steps < steps:
            raise ValueError("protrusions must cover the whole horizon")
    chains, jobs = {}, []       # static obstacles repeat the same geometry every step
    for k in range(k_count):
        sides = {RIGHT: [], LEFT: []}
        for p in protrusions:
            poly = p.polygons[k]
            if len(poly) == 0:
                continue
            key = (p.eta, poly.tobytes())
            chain = chains.get(key)
            if chain is None:
                chain = chains[key] = complementary_contour(poly, p.eta)
            if len(chain) == 0:
                continue
            m = p.safety_margin
            sides[p.eta].append((chain, chain[0, 0] - ego.l_f - m, chain[-1, 0] + ego.l_b + m, m))
        for eta, items in sides.items():
            if not items:
                continue
            margins = [it[3] for it in items]
            merged = merge_contours([it[:3] for it in items], eta, ego.w)
            if len(merged) != len(items):
                # merged groups inherit the largest margin
                margins = [max(margins)] * len(merged)
            jobs += [(k, eta, m, chain) for chain, m in zip(merged, margins)]
    if not jobs:
        return grid, bump_r, bump_l

    unique, which = {}, []
    for k, eta, m, chain in jobs:
        key = (eta, m, chain.tobytes())
        if key not in unique:
            unique[key] = (len(unique), eta, m, chain)
        which.append(unique[key][0])
    i0, i1, bumps = _chain_bumps([u[1:] for u in unique.values()], grid, h, ego, base_r_min, base_l_max)
    for (k, eta, _, _), u in zip(jobs, which):
        a, b = i0[u], i1[u]
        if b > a:
            row = bump_r[k] if eta == RIGHT else bump_l[k]
            row[a:b] = np.maximum(row[a:b], bumps[u, :b - a])
    return grid, bump_r, bump_l


def _chain_bumps(items, grid, h, ego, base_r_min, base_l_max):
    # bump samples for each (eta, margin, chain) on the grid points whose
    # dilated window can reach the chain; all chains in one batch
    n_p = max(max(len(c) for _, _, c in items), 2)
    cs = np.empty((len(items), n_p))
    cd = np.empty_like(cs)
    for u, (_, _, c) in enumerate(items):
        cs[u, :len(c)], cd[u, :len(c)] = c[:, 0], c[:, 1]
        cs[u, len(c):], cd[u, len(c):] = c[-1, 0], c[-1, 1]
    right = np.array([eta == RIGHT for eta, _, _ in items])[:, None]
    m = np.array([m for _, m, _ in items], dtype=float)[:, None]
    cd = np.where(right, cd, -cd)   # left chains: min becomes max
    i0 = np.searchsorted(grid, cs[:, 0] - ego.l_f - m[:, 0] - h, side="left")
    i1 = np.searchsorted(grid, cs[:, -1] + ego.l_b + m[:, 0] + h, side="right")
    idx = i0[:, None] + np.arange(max(int((i1 - i0).max()), 1))[None, :]
    valid = idx < i1[:, None]
    idx = np.minimum(idx, len(grid) - 1)
    g = grid[idx]
    ext = _window_extreme(cs, cd, g - h - ego.l_b - m, g + h + ego.l_f + m)
    bump = ext + m + 0.5 * ego.w + np.where(right, -base_r_min[idx], base_l_max[idx])
    return i0, i1, np.where(np.isfinite(bump) & valid, bump, 0.0)


def build_corridor(protrusions, right: BoundarySpline1D, left: BoundarySpline1D,
                   length: float, steps: int, v_road: float,
                   ego: EgoGeometry | None = None, controls: ControlBounds | None = None,
                   omega_min: float = OMEGA_MIN, s_start: float = 0.0,
                   grid_spacing: float = GRID_SPACING, path=None) -> Corridor:
    ego = ego or EgoGeometry()
    controls = controls or ControlBounds()
    grid, bump_r, bump_l = augment_boundaries(protrusions, right, left, ego, length, steps, grid_spacing)
    return Corridor(length, right, left, grid, bump_r, bump_l, v_road, controls, omega_min, s_start, path)


# ---------------------------------------------------------------- blockade

def detect_blockade(corridor: Corridor, omega_min: float | None = None, s_start: float | None = None):
    """Smallest ``s`` (and earliest step) with tunnel width ``<= omega_min``.

    Scans every step on a dense grid from ``s_start`` and refines the first
    bracket with a safeguarded Newton iteration.  Returns ``(length, 0)``
    when the corridor is open everywhere.  Cells whose end samples are
    clearly open are skipped: the bump interpolant never leaves the range of
    its samples, so inside a cell the width can only undercut the smaller end
    value by the variation of the base boundaries.
    """
    om = corridor.omega_min if omega_min is None else omega_min
    s0 = corridor.s_start if s_start is None else s_start
    L = corridor.length
    g = corridor.grid
    base_w = corridor.left(g) - corridor.right(g)
    node_w = base_w[None, :] - corridor.bump_right - corridor.bump_left
    h = g[1] - g[0]
    slack = 2.0 * h * float(np.abs(corridor.left(g, 1)).max() + np.abs(corridor.right(g, 1)).max()) + 0.05
    cell_min = np.minimum(node_w[:, :-1], node_w[:, 1:])
    cand = (cell_min <= om + slack) & (g[None, 1:] >= s0)
    if not cand.any():
        return L, 0
    kk, ii = np.nonzero(cand)
    n_sub = max(int(math.ceil(h / BLOCKADE_SCAN)), 1)
    frac = np.arange(n_sub + 1) / n_sub
    S = g[ii, None] + h * frac[None, :]
    S = np.maximum(S, s0)
    width = corridor.tunnel_width(S, kk[:, None]) - om
    closed = width <= 0
    hit = closed.any(axis=1)
    if not hit.any():
        return L, 0
    rows = np.flatnonzero(hit)
    # rows are ordered by (k, cell); the first hit per k is the earliest
    kr = kk[rows]
    first_row = rows[np.concatenate([[True], kr[1:] != kr[:-1]])]
    j = closed[first_row].argmax(axis=1)
    first = S[first_row, j]
    ks = kk[first_row]
    inner = (j > 0) | (first > s0)
    # a root lies in [lo, first]: brackets starting past the earliest hit cannot win
    inner &= first - BLOCKADE_SCAN <= first.min()
    if inner.any():
        jj = np.maximum(j[inner], 1)
        rr = first_row[inner]
        lo_s = np.where(j[inner] > 0, S[rr, jj - 1], S[rr, 0] - BLOCKADE_SCAN)
        lo_s = np.maximum(lo_s, s0)
        first[inner] = _refine_roots(corridor, ks[inner], om, lo_s, first[inner])
    i = int(np.argmin(first))
    return float(first[i]), int(ks[i])


def _refine_roots(corridor, ks, om, a, b, tol=1e-7):
    # width(a) > om >= width(b) per bracket (a may also be closed if it sits
    # on s_start); Newton with bisection fallback, vectorized over brackets.
    # Returns points with width <= om.
    def f(x):
        lo, hi, dlo, dhi = corridor.bounds(x, ks, 1.0)
        return hi - lo - om, dhi - dlo

    a, b = a.astype(float).copy(), b.astype(float).copy()
    fa, _ = f(a)
    b = np.where(fa <= 0, a, b)
    x = b.copy()
    done = np.zeros(len(x), dtype=bool)
    for _ in range(60):
        fx, dfx = f(x)
        closed = fx <= 0
        b = np.where(closed, x, b)
        a = np.where(closed, a, x)
        safe = np.where(dfx != 0, dfx, 1.0)
        x_new = np.where(dfx != 0, x - fx / safe, 0.5 * (a + b))
        # converged brackets stay put, even when the next step would leave them
        done |= (b - a < tol) | (np.abs(x_new - x) < tol)
        bad = ~((a < x_new) & (x_new < b))
        x_new = np.where(bad, 0.5 * (a + b), x_new)
        x = np.where(done, x, x_new)
        if done.all():
            break
    # Newton may converge from the open side; step just past the root
    x2 = x + tol
    fx2, _ = f(x2)
    return np.where(fx2 <= 0, np.minimum(b, x2), b)


def anticipatory_stop(corridor: Corridor, s_h: float, k_h: int, tol: float = 1e-6) -> float:
    """Backtrack from the blockade along the protruding boundary to where it
    meets the reference line.  Returns 0 when the road start is reached."""
    lo, hi = corridor.augmented(np.array([s_h]), k_h)
    lo, hi = float(lo[0]), float(hi[0])
    cands = []
    if lo > 0:
        cands.append(_backtrack(corridor, s_h, k_h, "lo", 0.0, tol))
    if hi < 0:
        cands.append(_backtrack(corridor, s_h, k_h, "hi", 0.0, tol))
    if not cands:
        # pinch around the reference line: back off to where the nearer
        # boundary enters the band around d = 0
        band = corridor.omega_min
        if abs(lo) <= abs(hi):
            cands.append(_backtrack(corridor, s_h, k_h, "lo", -band, tol))
        else:
            cands.append(_backtrack(corridor, s_h, k_h, "hi", band, tol))
    s = max(cands)
    return min(s, max(s_h - tol, 0.0))


def _backtrack(corridor, s_h, k, side, level, tol):
    # largest s < s_h where the boundary is back on its own side of `level`
    sign = 1.0 if side == "lo" else -1.0

    def g(s):
        lo, hi = corridor.augmented(np.asarray(s, dtype=float), k)
        return sign * ((lo if side == "lo" else hi) - level)

    ss = np.arange(s_h, -BLOCKADE_SCAN, -BLOCKADE_SCAN)
    ss = np.maximum(ss, 0.0)
    vals = g(ss)
    back = np.flatnonzero(vals <= 0)
    if len(back) == 0:
        return 0.0
    j = int(back[0])
    if j == 0:
        return float(ss[0])
    a, b = float(ss[j]), float(ss[j - 1])  # g(a) <= 0 < g(b)
    if g(np.array([a]))[0] == 0.0:
        return a
    r = brentq(lambda x: float(g(np.array([x]))[0]), a, b, xtol=tol)
    # return a point on the closed side of the crossing
    return r if g(np.array([r]))[0] <= 0 else max(r - tol, a)


def _find_blockade(corridor: Corridor) -> Blockade:
    s_h, k_h = detect_blockade(corridor)
    L = corridor.length
    if s_h >= L:
        # open corridor: no stop ramp, the road limit applies everywhere
        return Blockade(L, 0, L, L, corridor.v_road, False)
    s_stop = anticipatory_stop(corridor, s_h, k_h)
    s_decl, v0 = speed_profile(s_stop, corridor.v_road, corridor.controls, corridor.s_start)
    return Blockade(s_h, k_h, s_stop, s_decl, v0, True)
