"""Time-indexed in-lane protrusions of obstacles.

For every obstacle the footprint is hulled and refined, moved to the Frenet
frame, predicted over the horizon as a rigid body around an anchor point,
and clipped at the road edge it is closest to.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import ObstacleMotionModel, predict_anchor
from .geometry import as_points, clip_halfplane_batch, hull_or_inflate, polygon_centroid, refine_polygon
from .splines import BoundarySpline1D, PathSpline2D, local_projection, project_points, wrap_angle

RIGHT = -1
LEFT = 1
REFINE_SPACING = 0.25


@dataclass(frozen=True)
class Obstacle:
    footprint: np.ndarray
    motion: ObstacleMotionModel = field(default_factory=ObstacleMotionModel)
    safety_margin: float = 0.2
    name: str = ""

    def __post_init__(self):
        fp = as_points(self.footprint)
        if len(fp) == 0:
            raise ValueError("obstacle footprint must not be empty")
        if self.safety_margin < 0:
            raise ValueError("safety margin must be non-negative")
        object.__setattr__(self, "footprint", fp)


@dataclass
class ProtrusionSet:
    eta: int
    polygons: list
    anchor: np.ndarray
    radii: np.ndarray
    angles: np.ndarray
    outlines: np.ndarray
    safety_margin: float = 0.0

    @property
    def steps(self):
        return len(self.polygons) - 1

    def is_empty(self):
        return all(len(p) == 0 for p in self.polygons)


def nearest_edge(points_sd0, right: BoundarySpline1D, left: BoundarySpline1D) -> int:
    """Edge an obstacle is attached to: ``RIGHT`` (-1) or ``LEFT`` (+1).

    ``d_l`` is the largest offset of the obstacle from the left edge and
    ``d_r`` the smallest offset from the right edge (both positive to the
    left).  The obstacle aligns right when it lies beyond both edges on the
    right side or when it is at least as close to the right edge.
    """
    pts = as_points(points_sd0)
    d_l = float(local_projection(None, left, pts)[:, 1].max())
    d_r = float(local_projection(None, right, pts)[:, 1].min())
    if (d_r <= 0 and d_l <= 0) or d_r <= -d_l:
        return RIGHT
    return LEFT


def rigid_outlines(points_sd0, anchor_traj):
    """Rebuild the outline at every step from polar offsets to the anchor.

    Returns ``(outlines, radii, angles)`` where ``outlines`` has shape
    ``(K, n, 2)``.  Angles are measured relative to the anchor rotation at
    step 0, so step 0 reproduces the input exactly up to rounding.
    """
    pts = as_points(points_sd0)
    s_m, d_m, th0 = anchor_traj[0]
    rel = pts - np.array([s_m, d_m])
    radii = np.hypot(rel[:, 0], rel[:, 1])
    angles = np.arctan2(rel[:, 1], rel[:, 0]) - th0
    ang = angles[None, :] + anchor_traj[:, 2:3]
    outlines = np.empty((len(anchor_traj), len(pts), 2))
    outlines[..., 0] = anchor_traj[:, 0:1] + radii * np.cos(ang)
    outlines[..., 1] = anchor_traj[:, 1:2] + radii * np.sin(ang)
    # steps where the anchor has not moved reuse the input exactly
    outlines[np.all(anchor_traj == anchor_traj[0], axis=1)] = pts
    return outlines, radii, angles


def project_obstacle(obstacle: Obstacle, path: PathSpline2D, right: BoundarySpline1D,
                     left: BoundarySpline1D, dt: float, steps: int,
                     max_spacing: float = REFINE_SPACING) -> ProtrusionSet:
    refined = refine_polygon(hull_or_inflate(obstacle.footprint), max_spacing)
    s, d = project_points(path, refined, extrapolate=True)
    sd0 = np.column_stack([s, d])

    s_m, d_m = polygon_centroid(sd0)
    motion = obstacle.motion
    th0 = wrap_angle(motion.heading - float(path.tangent_angle(min(max(s_m, 0.0), path.length))))
    if motion.speed == 0.0 and motion.acceleration <= 0.0:
        anchor = np.tile([s_m, d_m, th0], (steps + 1, 1))
    else:
        anchor = predict_anchor(motion, (s_m, d_m, th0), dt, steps)
    outlines, radii, angles = rigid_outlines(sd0, anchor)

    eta = nearest_edge(sd0, right, left)
    edge = right if eta == RIGHT else left
    k, n = outlines.shape[:2]
    on_edge = local_projection(None, edge, outlines.reshape(-1, 2)).reshape(k, n, 2)
    clipped = clip_halfplane_batch(on_edge, 0.0, keep_above=(eta == RIGHT))

    sizes = [len(c) for c in clipped]
    polygons = [np.zeros((0, 2))] * k
    if sum(sizes):
        back = local_projection(edge, None, np.vstack([c for c in clipped if len(c)]))
        start = 0
        for i, m in enumerate(sizes):
            if m:
                polygons[i] = back[start:start + m]
                start += m
    return ProtrusionSet(eta, polygons, anchor, radii, angles, outlines, obstacle.safety_margin)
