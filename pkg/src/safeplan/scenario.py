"""Declarative scenario files.

Scenarios are YAML documents validated against a JSON schema.  Roads are
given as point lists or simple generators; obstacles as Cartesian polygons
or as boxes placed in the road's Frenet frame.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from .corridor import EgoGeometry
from .dynamics import ControlBounds, ObstacleMotionModel
from .errors import DegenerateInput, ScenarioError
from .mpc import PlannerConfig, ValidityThresholds
from .ocp import ConstraintMargins, HorizonConfig, ObjectiveWeights
from .splines import BoundarySpline1D, PathSpline2D, fit_path, frenet_to_cartesian_many, project_points

_num = {"type": "number"}
_point_list = {"type": "array", "minItems": 3,
               "items": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}}
_polygon = {"type": "array", "minItems": 1,
            "items": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}}

SCHEMA = {
    "type": "object",
    "required": ["road", "ego"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "road": {
            "type": "object",
            "required": ["reference"],
            "additionalProperties": False,
            "properties": {
                "reference": {"oneOf": [
                    _point_list,
                    {"type": "object", "required": ["generator"], "additionalProperties": False,
                     "properties": {"generator": {"enum": ["straight", "arc", "s_curve"]},
                                    "length": _num, "radius": _num, "amplitude": _num,
                                    "spacing": _num}},
                ]},
                "right": {"oneOf": [_num, _point_list]},
                "left": {"oneOf": [_num, _point_list]},
                "speed_limit": {"type": "number", "exclusiveMinimum": 0},
                "a_n_max": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "ego": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "s": _num, "d": _num, "heading": _num, "speed": {"type": "number", "minimum": 0},
                "kappa": _num,
                "geometry": {"type": "object", "additionalProperties": False,
                             "properties": {"w": _num, "l_f": _num, "l_b": _num}},
                "controls": {"type": "object", "additionalProperties": False,
                             "properties": {"u1_min": _num, "u1_max": _num,
                                            "u2_min": _num, "u2_max": _num}},
            },
        },
        "obstacles": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "properties": {
                    "name": {"type": "string"},
                    "footprint": _polygon,
                    "box": {"type": "object", "required": ["s", "d", "length", "width"],
                            "additionalProperties": False,
                            "properties": {"s": _num, "d": _num, "length": _num, "width": _num,
                                           "heading": _num}},
                    "motion": {"type": "object", "additionalProperties": False,
                               "properties": {"kind": {"enum": ["cv", "cca"]},
                                              "speed": {"type": "number", "minimum": 0},
                                              "heading": _num, "curvature": _num,
                                              "acceleration": _num}},
                    "margin": {"type": "number", "minimum": 0},
                },
                "oneOf": [{"required": ["footprint"]}, {"required": ["box"]}],
            },
        },
        "planner": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "T": {"type": "number", "exclusiveMinimum": 0},
                "N": {"type": "integer", "minimum": 2},
                "iter_cap": {"type": "integer", "minimum": 0},
                "homotopy_z": {"type": "integer", "minimum": 1},
                "stop_alpha_v": {"type": "number", "exclusiveMinimum": 0},
                "weights": {"type": "object", "additionalProperties": False,
                            "properties": {k: {"type": "number", "minimum": 0}
                                           for k in ("s", "d", "chi", "u1", "u2", "v")}},
                "margins": {"type": "object", "additionalProperties": False,
                            "properties": {k: {"type": "number", "minimum": 0}
                                           for k in ("stop", "lateral", "v_lo", "velocity", "accel", "control")}},
                "validity": {"type": "object", "additionalProperties": False,
                             "properties": {k: {"type": "number", "minimum": 0}
                                            for k in ("position", "heading", "velocity")}},
            },
        },
        "sim": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "goal_s": _num,
                "max_ticks": {"type": "integer", "minimum": 1},
                "behind": {"type": "number", "minimum": 0},
                "ahead": {"type": "number", "exclusiveMinimum": 0},
            },
        },
    },
}


@dataclass
class ObstacleSpec:
    name: str
    body: np.ndarray            # footprint in the body frame of the anchor pose
    pose: np.ndarray            # x, y, heading
    motion: ObstacleMotionModel
    margin: float = 0.2

    def footprint(self, pose=None):
        x, y, th = self.pose if pose is None else pose
        c, s = math.cos(th), math.sin(th)
        rot = np.array([[c, -s], [s, c]])
        return self.body @ rot.T + np.array([x, y])


@dataclass
class Scenario:
    name: str
    path: PathSpline2D
    right: BoundarySpline1D
    left: BoundarySpline1D
    v_road: float
    ego_pose: np.ndarray        # x, y, heading
    ego_speed: float
    ego_kappa: float
    ego: EgoGeometry
    controls: ControlBounds
    obstacles: list
    planner: PlannerConfig
    goal_s: float
    max_ticks: int
    behind: float = 5.0
    ahead: float = 60.0
    source: dict = field(default_factory=dict)


def _generate(ref: dict) -> np.ndarray:
    kind = ref["generator"]
    length = float(ref.get("length", 200.0))
    step = float(ref.get("spacing", 1.0))
    s = np.linspace(0.0, length, max(int(round(length / step)), 2) + 1)
    if kind == "straight":
        return np.column_stack([s, np.zeros_like(s)])
    if kind == "arc":
        r = float(ref.get("radius", 100.0))
        th = s / r
        return np.column_stack([r * np.sin(th), r * (1 - np.cos(th))])
    amp = float(ref.get("amplitude", 5.0))
    return np.column_stack([s, amp * np.sin(2 * np.pi * s / length)])


def _boundary(spec, default, path: PathSpline2D) -> BoundarySpline1D:
    if spec is None:
        spec = default
    if isinstance(spec, (int, float)):
        return BoundarySpline1D.constant(float(spec), path.length)
    s, d = project_points(path, np.asarray(spec, dtype=float), extrapolate=True)
    return BoundarySpline1D.fit(s, d)


def _obstacle(o: dict, path: PathSpline2D, idx: int) -> ObstacleSpec:
    mot = dict(o.get("motion", {}))
    if "box" in o:
        b = o["box"]
        s_c, d_c = float(b["s"]), float(b["d"])
        xy = frenet_to_cartesian_many(path, np.array([s_c]), np.array([d_c]))[0]
        th = float(path.tangent_angle(s_c)) + float(b.get("heading", 0.0))
        hl, hw = 0.5 * float(b["length"]), 0.5 * float(b["width"])
        body = np.array([[-hl, -hw], [hl, -hw], [hl, hw], [-hl, hw]])
    else:
        pts = np.asarray(o["footprint"], dtype=float)
        cen = pts.mean(axis=0)
        s_c, _ = project_points(path, cen[None, :], extrapolate=True)
        th = float(path.tangent_angle(float(s_c[0])))
        xy = cen
        c, s = math.cos(th), math.sin(th)
        body = (pts - cen) @ np.array([[c, -s], [s, c]])
    # motion heading defaults to the road direction at the obstacle
    heading = th + float(mot.get("heading", 0.0))
    model = ObstacleMotionModel(mot.get("kind", "cv"), float(mot.get("speed", 0.0)), heading,
                                float(mot.get("curvature", 0.0)), float(mot.get("acceleration", 0.0)))
    return ObstacleSpec(o.get("name", f"obstacle{idx}"), body, np.array([xy[0], xy[1], th]),
                        model, float(o.get("margin", 0.2)))


def parse(doc: dict) -> Scenario:
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ScenarioError(f"invalid scenario: {exc.message}") from exc
    try:
        return _build(doc)
    except (ValueError, DegenerateInput) as exc:
        raise ScenarioError(f"invalid scenario: {exc}") from exc


def _build(doc: dict) -> Scenario:
    road = doc["road"]
    ref = road["reference"]
    pts = _generate(ref) if isinstance(ref, dict) else np.asarray(ref, dtype=float)
    path = fit_path(pts)
    right = _boundary(road.get("right"), -2.0, path)
    left = _boundary(road.get("left"), 2.0, path)
    v_road = float(road.get("speed_limit", 10.0))

    eg = doc["ego"]
    s0, d0 = float(eg.get("s", 0.0)), float(eg.get("d", 0.0))
    xy = frenet_to_cartesian_many(path, np.array([s0]), np.array([d0]))[0]
    heading = float(path.tangent_angle(s0)) + float(eg.get("heading", 0.0))
    geom = EgoGeometry(**eg.get("geometry", {}))
    controls = ControlBounds(**eg.get("controls", {}))

    pl = doc.get("planner", {})
    horizon = HorizonConfig(float(pl.get("T", 3.5)), int(pl.get("N", 25)))
    cfg = PlannerConfig(
        horizon=horizon,
        weights=ObjectiveWeights(**pl.get("weights", {})),
        margins=ConstraintMargins(**pl.get("margins", {})),
        iter_cap=int(pl.get("iter_cap", 30)),
        homotopy_z=int(pl.get("homotopy_z", 20)),
        a_n_max=float(road.get("a_n_max", 4.0)),
        stop_alpha_v=float(pl.get("stop_alpha_v", 2.0)),
        validity=ValidityThresholds(**pl.get("validity", {})),
    )
    obstacles = [_obstacle(o, path, i) for i, o in enumerate(doc.get("obstacles", []))]
    sim = doc.get("sim", {})
    goal = float(sim.get("goal_s", path.length - 10.0))
    if not 0 < goal <= path.length:
        raise ScenarioError("goal_s must lie on the road")
    return Scenario(doc.get("name", "scenario"), path, right, left, v_road,
                    np.array([xy[0], xy[1], heading]), float(eg.get("speed", 0.0)),
                    float(eg.get("kappa", 0.0)), geom, controls, obstacles, cfg, goal,
                    int(sim.get("max_ticks", 600)), float(sim.get("behind", 5.0)),
                    float(sim.get("ahead", 60.0)), doc)


def bundled():
    """Names of the scenarios shipped with the package."""
    root = resources.files("safeplan") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def load(name_or_path) -> Scenario:
    """Load a scenario file, or a bundled scenario by name."""
    p = Path(name_or_path)
    if p.suffix in (".yaml", ".yml") and p.exists():
        text = p.read_text()
    else:
        res = resources.files("safeplan") / "scenarios" / f"{p.stem}.yaml"
        if not res.is_file():
            raise ScenarioError(f"no scenario file or bundled scenario named {name_or_path!r}")
        text = res.read_text()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"malformed YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ScenarioError("scenario must be a mapping")
    return parse(doc)
