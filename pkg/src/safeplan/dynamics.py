"""Ego kinematics in the Frenet frame, obstacle motion models and RK4."""
from __future__ import annotations

import math
from dataclasses import dataclass, astuple
from enum import Enum

import numpy as np

NX = 5
NU = 2


@dataclass(frozen=True)
class EgoState:
    s: float
    d: float
    chi: float
    kappa: float
    v: float

    def as_array(self):
        return np.array(astuple(self), dtype=float)

    @classmethod
    def from_array(cls, x):
        return cls(*(float(c) for c in x[:NX]))


@dataclass(frozen=True)
class EgoControl:
    u1: float
    u2: float

    def as_array(self):
        return np.array([self.u1, self.u2], dtype=float)


@dataclass(frozen=True)
class ControlBounds:
    u1_min: float = -0.3
    u1_max: float = 0.3
    u2_min: float = -4.0
    u2_max: float = 2.0

    def __post_init__(self):
        if self.u1_min > self.u1_max or self.u2_min > self.u2_max:
            raise ValueError("control bounds need min <= max")

    @property
    def lower(self):
        return np.array([self.u1_min, self.u2_min])

    @property
    def upper(self):
        return np.array([self.u1_max, self.u2_max])

    def clamp(self, u):
        return np.minimum(np.maximum(u, self.lower), self.upper)


def ego_derivative(x, u, kappa_r):
    """Frenet point-mass kinematics.

    ``s' = v, d' = v chi, chi' = v (kappa - kappa_r), kappa' = u1, v' = u2``.
    Works on single states or stacks with trailing dimension 5 / 2.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    v = x[..., 4]
    return np.stack([v, v * x[..., 2], v * (x[..., 3] - kappa_r), u[..., 0], u[..., 1]], axis=-1)


def ego_jacobians(x, u, kappa_r, dkappa_r):
    """``df/dx`` (..., 5, 5) and ``df/du`` (..., 5, 2) of :func:`ego_derivative`.

    ``dkappa_r`` is the arclength derivative of the reference curvature.
    """
    x = np.asarray(x, dtype=float)
    shape = x.shape[:-1]
    v, chi, kap = x[..., 4], x[..., 2], x[..., 3]
    a = np.zeros(shape + (NX, NX))
    a[..., 0, 4] = 1.0
    a[..., 1, 2] = v
    a[..., 1, 4] = chi
    a[..., 2, 0] = -v * dkappa_r
    a[..., 2, 3] = v
    a[..., 2, 4] = kap - kappa_r
    b = np.zeros(shape + (NX, NU))
    b[..., 3, 0] = 1.0
    b[..., 4, 1] = 1.0
    return a, b


def cartesian_derivative(x, u):
    """Ego kinematics in the plane: state ``(x, y, heading, kappa, v)``."""
    px, py, phi, kap, v = x
    return np.array([v * math.cos(phi), v * math.sin(phi), kap * v, u[0], u[1]])


def rk4_step(state, derivative_fn, dt: float):
    """One classical Runge-Kutta step of ``state' = derivative_fn(state)``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    x = np.asarray(state, dtype=float)
    k1 = np.asarray(derivative_fn(x))
    k2 = np.asarray(derivative_fn(x + 0.5 * dt * k1))
    k3 = np.asarray(derivative_fn(x + 0.5 * dt * k2))
    k4 = np.asarray(derivative_fn(x + dt * k3))
    return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


class MotionKind(str, Enum):
    CV = "cv"
    CCA = "cca"


@dataclass(frozen=True)
class ObstacleMotionModel:
    """Planar motion model of an obstacle anchor.

    ``heading`` is the Cartesian direction of motion.  Constant velocity has
    zero curvature and acceleration; constant curvature and acceleration
    follows ``x' = v cos th, y' = v sin th, th' = kappa v, v' = a``.
    """

    kind: MotionKind = MotionKind.CV
    speed: float = 0.0
    heading: float = 0.0
    curvature: float = 0.0
    acceleration: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", MotionKind(self.kind))
        vals = (self.speed, self.heading, self.curvature, self.acceleration)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("motion model parameters must be finite")
        if self.kind is MotionKind.CV and (self.curvature != 0.0 or self.acceleration != 0.0):
            raise ValueError("constant velocity model has zero curvature and acceleration")
        if self.speed < 0:
            raise ValueError("speed must be non-negative")

    @property
    def is_static(self):
        return self.speed == 0.0 and self.acceleration <= 0.0


def _motion_step(a, b, th, v, kappa, accel, dt):
    # classical RK4 on (a, b, theta, v); speed is floored at zero per stage
    h = 0.5 * dt
    acc1 = accel if (v > 0.0 or accel > 0.0) else 0.0
    ka, kb, kt = v * math.cos(th), v * math.sin(th), kappa * v
    v2 = max(v + h * acc1, 0.0)
    t2 = th + h * kt
    acc2 = accel if (v2 > 0.0 or accel > 0.0) else 0.0
    la, lb, lt = v2 * math.cos(t2), v2 * math.sin(t2), kappa * v2
    v3 = max(v + h * acc2, 0.0)
    t3 = th + h * lt
    acc3 = accel if (v3 > 0.0 or accel > 0.0) else 0.0
    ma, mb, mt = v3 * math.cos(t3), v3 * math.sin(t3), kappa * v3
    v4 = max(v + dt * acc3, 0.0)
    t4 = th + dt * mt
    acc4 = accel if (v4 > 0.0 or accel > 0.0) else 0.0
    na, nb, nt = v4 * math.cos(t4), v4 * math.sin(t4), kappa * v4
    w = dt / 6.0
    a += w * (ka + 2 * la + 2 * ma + na)
    b += w * (kb + 2 * lb + 2 * mb + nb)
    th += w * (kt + 2 * lt + 2 * mt + nt)
    v = max(v + w * (acc1 + 2 * acc2 + 2 * acc3 + acc4), 0.0)
    return a, b, th, v


def propagate(model: ObstacleMotionModel, pose, speed: float, dt: float, steps: int = 1):
    """Integrate a motion model from ``pose=(a, b, theta)``.

    Returns ``(poses, speeds)`` with ``steps + 1`` rows including the start.
    Speed is floored at zero (no reversing under deceleration).
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    a, b, th = (float(c) for c in pose)
    v = float(speed)
    kappa, accel = model.curvature, model.acceleration
    out = [(a, b, th)]
    speeds = [v]
    for _ in range(int(steps)):
        a, b, th, v = _motion_step(a, b, th, v, kappa, accel, dt)
        out.append((a, b, th))
        speeds.append(v)
    return np.array(out), np.array(speeds)


def predict_anchor(model: ObstacleMotionModel, anchor, dt: float, steps: int, heading=None):
    """Anchor trajectory ``(s_m, d_m, theta_m)`` for ``k = 0..steps``.

    The anchor moves in the (s, d) plane treated as Euclidean.  ``heading``
    overrides the initial rotation (defaults to ``anchor[2]``).
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    s, d, th = anchor
    if heading is not None:
        th = heading
    poses, _ = propagate(model, (s, d, th), model.speed, dt, steps)
    return poses
