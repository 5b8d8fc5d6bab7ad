"""Closed-loop simulation harness and trace output."""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corridor import build_corridor
from .dynamics import NX, ObstacleMotionModel, _motion_step, cartesian_derivative
from .errors import NoProjection, TickFailure
from .geometry import convex_polygons_intersect
from .mpc import HOMOTOPY_PARTIAL, BackupPlanner, is_safe, plan_step
from .ocp import FAMILIES
from .projection import Obstacle, project_obstacle
from .scenario import Scenario
from .splines import BoundarySpline1D, fit_path, frenet_to_cartesian_many, project_points, wrap_angle

COMPLETED = "Completed"
HALTED = "Halted-at-Blockade"
FAILED = "Failed"
INCOMPLETE = "Incomplete"

TRACE_COLUMNS = (
    ["tick", "t", "u1", "u2", "u1_end", "u2_end", "x", "y", "heading", "kappa", "v", "s_global", "s", "d", "chi",
     "status", "zeta", "iterations", "solves", "wall_ms", "blockade", "s_stop", "collision", "verified"]
    + [f"res_{f}" for f in FAMILIES]
)
SUBSTEPS = 4
HALT_SPEED = 0.1


@dataclass
class Outcome:
    kind: str
    location: tuple | None = None

    def __str__(self):
        if self.location is None:
            return self.kind
        return f"{self.kind}({', '.join(f'{v:.2f}' for v in self.location)})"


@dataclass
class RunResult:
    variant: str
    outcome: Outcome
    rows: list
    plans: list = field(default_factory=list)
    constraints: list = field(default_factory=list)
    collisions: int = 0
    final: np.ndarray | None = None     # ego x, y, heading, kappa, v after the last tick
    final_s: float = float("nan")       # global arclength of the final pose

    @property
    def completed(self):
        return self.outcome.kind == COMPLETED

    def column(self, name):
        return np.array([r[name] for r in self.rows])


def ego_rectangle(pose, geom):
    x, y, th = pose
    c, s = math.cos(th), math.sin(th)
    body = np.array([[-geom.l_b, -geom.w / 2], [geom.l_f, -geom.w / 2],
                     [geom.l_f, geom.w / 2], [-geom.l_b, geom.w / 2]])
    return body @ np.array([[c, -s], [s, c]]).T + np.array([x, y])


def _local_frame(sc: Scenario, s_g: float):
    a = max(0.0, s_g - sc.behind)
    b = min(sc.path.length, s_g + sc.ahead)
    n = max(int(math.ceil(b - a)), 3)
    ss = np.linspace(a, b, n + 1)
    pts = sc.path.position(ss)
    local = fit_path(pts)
    bounds = []
    for spl in (sc.right, sc.left):
        bp = frenet_to_cartesian_many(sc.path, ss, spl(ss))
        s_l, d_l = project_points(local, bp, extrapolate=True)
        bounds.append(BoundarySpline1D.fit(s_l, d_l))
    return local, bounds[0], bounds[1]


def run(sc: Scenario, variant: str, ticks: int | None = None, keep_plans: bool = False,
        keep_constraints: bool = False) -> RunResult:
    cfg = sc.planner
    dt = cfg.horizon.dt
    N = cfg.horizon.N
    geom = sc.ego
    ego = np.array([sc.ego_pose[0], sc.ego_pose[1], sc.ego_pose[2], sc.ego_kappa, sc.ego_speed])
    obs_state = [(o.pose.copy(), o.motion.speed) for o in sc.obstacles]
    backup = BackupPlanner(cfg) if variant == "ss" else None
    previous = None
    rows, plans, cons = [], [], []
    collisions = 0
    outcome = Outcome(INCOMPLETE)
    max_ticks = sc.max_ticks if ticks is None else ticks
    try:
        for tick in range(max_ticks):
            s_g = float(project_points(sc.path, ego[None, :2], extrapolate=True)[0][0])
            if s_g >= sc.goal_s:
                outcome = Outcome(COMPLETED)
                break
            local, rb, lb = _local_frame(sc, s_g)
            prots = []
            for o, (pose, speed) in zip(sc.obstacles, obs_state):
                fp = o.footprint(pose)
                motion = ObstacleMotionModel(o.motion.kind, speed, pose[2], o.motion.curvature,
                                             o.motion.acceleration)
                try:
                    prots.append(project_obstacle(Obstacle(fp, motion, o.margin), local, rb, lb, dt, N))
                except NoProjection:
                    continue
            s_l, d_l = project_points(local, ego[None, :2], extrapolate=True)
            s0, d0 = float(s_l[0]), float(d_l[0])
            chi = wrap_angle(ego[2] - float(local.tangent_angle(s0)))
            x0 = np.array([s0, d0, chi, ego[3], ego[4]])
            corridor = build_corridor(prots, rb, lb, local.length, N, sc.v_road, geom, sc.controls,
                                      s_start=s0, path=local)
            if backup is not None:
                backup.publish(x0, corridor, tick)
            t0 = time.perf_counter()
            try:
                step = plan_step(variant, x0, corridor, previous, cfg, backup, tick,
                                 location=(float(ego[0]), float(ego[1]), s_g))
            except TickFailure as exc:
                outcome = Outcome(FAILED, exc.location)
                break
            wall = (time.perf_counter() - t0) * 1e3
            rec = step.record
            previous = rec
            u = rec.first_control
            u_end = rec.nodes[1, NX:].copy()
            if keep_plans:
                plans.append((tick, rec.cartesian.copy()))
            if keep_constraints:
                cons.append((tick, _snapshot(corridor)))

            # independent re-check of the accepted plan against its own problem
            zeta_chk = rec.zeta if rec.status == HOMOTOPY_PARTIAL else 1.0
            verified = is_safe(rec.nodes.reshape(-1), step.problem, cfg.safety, zeta_chk)
            hit = any(convex_polygons_intersect(ego_rectangle(ego[:3], geom), o.footprint(p))
                      for o, (p, _) in zip(sc.obstacles, obs_state))
            collisions += int(hit)
            row = {
                "tick": tick, "t": tick * dt, "u1": float(u[0]), "u2": float(u[1]),
                "u1_end": float(u_end[0]), "u2_end": float(u_end[1]),
                "x": float(ego[0]), "y": float(ego[1]), "heading": float(ego[2]),
                "kappa": float(ego[3]), "v": float(ego[4]), "s_global": s_g,
                "s": s0, "d": d0, "chi": chi, "status": rec.status, "zeta": rec.zeta,
                "iterations": step.iterations, "solves": step.solves, "wall_ms": wall,
                "blockade": int(corridor.blockade.active), "s_stop": corridor.s_stop,
                "collision": int(hit), "verified": int(verified),
            }
            row.update({f"res_{f}": rec.residuals.get(f, float("nan")) for f in FAMILIES})
            rows.append(row)

            ego = _advance_ego(ego, u, dt, u_end)
            obs_state = [_advance_obstacle(o.motion, p, v, dt) for o, (p, v) in zip(sc.obstacles, obs_state)]
            if corridor.blockade.active and ego[4] < HALT_SPEED and tick > 0:
                outcome = Outcome(HALTED)
                break
        else:
            s_g = float(project_points(sc.path, ego[None, :2], extrapolate=True)[0][0])
            if s_g >= sc.goal_s:
                outcome = Outcome(COMPLETED)
    finally:
        if backup is not None:
            backup.close()
    # final pose certificate
    hit = any(convex_polygons_intersect(ego_rectangle(ego[:3], geom), o.footprint(p))
              for o, (p, _) in zip(sc.obstacles, obs_state))
    collisions += int(hit)
    s_end = float(project_points(sc.path, ego[None, :2], extrapolate=True)[0][0])
    return RunResult(variant, outcome, rows, plans, cons, collisions, ego, s_end)


def _advance_ego(ego, u0, dt, u1=None):
    """Integrate the plant over one step.  Controls ramp linearly from ``u0``
    to ``u1`` (first-order hold, as in the trapezoidal transcription)."""
    u0 = np.asarray(u0, dtype=float)
    du = np.zeros_like(u0) if u1 is None else (np.asarray(u1, dtype=float) - u0) / dt
    h = dt / SUBSTEPS
    x = ego.copy()
    for i in range(SUBSTEPS):
        t0 = i * h

        def f(xx, t):
            return cartesian_derivative(xx, u0 + du * t)

        k1 = f(x, t0)
        k2 = f(x + 0.5 * h * k1, t0 + 0.5 * h)
        k3 = f(x + 0.5 * h * k2, t0 + 0.5 * h)
        k4 = f(x + h * k3, t0 + h)
        x = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        x[4] = max(x[4], 0.0)
    return x


def _advance_obstacle(model, pose, speed, dt):
    a, b, th, v = _motion_step(pose[0], pose[1], pose[2], speed, model.curvature, model.acceleration, dt)
    return np.array([a, b, th]), v


def _snapshot(corridor, spacing: float = 0.25):
    s = np.arange(0.0, corridor.length + 1e-9, spacing)
    lo0, hi0 = corridor.blend(s, 0, 0.0)
    lo1, hi1 = corridor.blend(s, 0, 1.0)
    vh = corridor.blend_speed(s, 1.0)
    return np.column_stack([s, lo0, hi0, lo1, hi1, vh])


# ---------------------------------------------------------------- output

def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return "%.9g" % v
    return str(v)


def emit(result: RunResult, out_dir, fmt: str = "csv", aggregate: bool = False):
    """Write the trace and constraint snapshots; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = result.variant
    written = []
    if fmt == "csv":
        p = out / f"{stem}_trace.csv"
        with p.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_COLUMNS)
            for r in result.rows:
                w.writerow([_fmt(r[c]) for c in TRACE_COLUMNS])
        written.append(p)
        p = out / f"{stem}_constraints.csv"
        with p.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["tick", "s", "d_lo_base", "d_hi_base", "d_lo_aug", "d_hi_aug", "v_hi"])
            for tick, snap in result.constraints:
                for row in snap:
                    w.writerow([tick] + [_fmt(v) for v in row])
        written.append(p)
    elif fmt == "json":
        p = out / f"{stem}_trace.json"
        p.write_text(json.dumps({"variant": stem, "outcome": str(result.outcome), "rows": result.rows}))
        written.append(p)
        p = out / f"{stem}_constraints.json"
        p.write_text(json.dumps([{"tick": t, "samples": snap.tolist()} for t, snap in result.constraints]))
        written.append(p)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if aggregate:
        p = out / f"{stem}_plans.csv"
        with p.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["tick", "node", "x", "y", "heading", "kappa", "v"])
            for tick, cart in result.plans:
                for k, row in enumerate(cart):
                    w.writerow([tick, k] + [_fmt(v) for v in row])
        written.append(p)
    return written


def timing_table(results, out_dir):
    """Per-variant solve-time summary."""
    p = Path(out_dir) / "table.csv"
    with p.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["variant", "outcome", "ticks", "mean_ms", "max_ms", "mean_iterations"])
        for r in results:
            ms = r.column("wall_ms") if r.rows else np.array([np.nan])
            it = r.column("iterations") if r.rows else np.array([np.nan])
            w.writerow([r.variant, str(r.outcome), len(r.rows), _fmt(float(np.mean(ms))),
                        _fmt(float(np.max(ms))), _fmt(float(np.mean(it)))])
    return p
