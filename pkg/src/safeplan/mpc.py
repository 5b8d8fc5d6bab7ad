"""Receding-horizon controller variants and their safety fallbacks.

Variants: ``mpc`` (single solve), ``re`` (control clamping recovery),
``hb`` (homotopy chain), ``su`` (sensitivity-shifted previous plan) and
``ss`` (stop trajectory from a concurrent backup planner).
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .corridor import Corridor, homotopy_schedule
from .dynamics import NX, EgoState, ego_jacobians
from .errors import FrameTransformError, NoProjection, TickFailure
from .ocp import (IKAP, IS, IV, NZ, ConstraintMargins, HorizonConfig,
                  ObjectiveWeights, OcpProblem, evaluate_constraints, solve, transcribe)
from .splines import frenet_to_cartesian_many, project_points, wrap_angle

VARIANTS = ("mpc", "re", "hb", "su", "ss")

OPTIMAL = "Optimal"
HOMOTOPY_PARTIAL = "Homotopy-Partial"
SENSITIVITY_SHIFTED = "Sensitivity-Shifted"
STOP_FALLBACK = "Stop-Fallback"
RECOVERED = "Recovered"

MONOTONE_TOL = 1e-9
TOL_FLOOR = 1e-5


def safety_tolerances(margins: ConstraintMargins, factor: float = 0.5) -> ConstraintMargins:
    """Verification tolerances: a fraction of the margins, floored."""
    return ConstraintMargins(*(max(factor * getattr(margins, f), TOL_FLOOR) for f in
                               ("stop", "lateral", "v_lo", "velocity", "accel", "control")))


@dataclass(frozen=True)
class ValidityThresholds:
    position: float = 0.2
    heading: float = 0.1
    velocity: float = 0.5


@dataclass(frozen=True)
class PlannerConfig:
    horizon: HorizonConfig = field(default_factory=HorizonConfig)
    weights: ObjectiveWeights = field(default_factory=ObjectiveWeights)
    margins: ConstraintMargins = field(default_factory=ConstraintMargins)
    tolerances: ConstraintMargins | None = None
    iter_cap: int = 30
    homotopy_z: int = 20
    a_n_max: float = 4.0
    stop_alpha_v: float = 2.0
    validity: ValidityThresholds = field(default_factory=ValidityThresholds)
    shift: int = 1

    @property
    def safety(self):
        return self.tolerances if self.tolerances is not None else safety_tolerances(self.margins)


@dataclass
class PlanRecord:
    n: int
    nodes: np.ndarray          # (M, 7) Frenet nodes in the frame of tick n
    zeta: float
    cartesian: np.ndarray      # (M, 5): x, y, heading, kappa, v
    sensitivity: np.ndarray    # (M, 5, 5): d x(k) / d x(0)
    status: str
    iterations: int = 0
    residuals: dict = field(default_factory=dict)
    dt: float = 0.14

    @property
    def controls(self):
        return self.nodes[:, NX:]

    @property
    def first_control(self):
        return self.nodes[0, NX:].copy()


# ---------------------------------------------------------------- checks

def is_safe(z, problem: OcpProblem, tolerances: ConstraintMargins, zeta: float = 1.0):
    """True iff the hard constraints (zero margins, homotopy ``zeta``) hold
    within ``tolerances`` and s does not decrease along the horizon."""
    zz = np.asarray(getattr(z, "z", z), dtype=float)
    nodes = zz.reshape(-1, NZ)
    if not np.all(np.isfinite(nodes)):
        return False
    if np.any(np.diff(nodes[:, IS]) < -MONOTONE_TOL):
        return False
    g, _ = evaluate_constraints(zz, problem, zeta=zeta, margins=ConstraintMargins.zero())
    tol = np.concatenate([np.full(problem.slices[f].stop - problem.slices[f].start, tolerances.family(f))
                          for f in problem.slices])
    return bool(np.all(g <= tol))


def hard_residuals(z, problem: OcpProblem):
    _, fam = evaluate_constraints(np.asarray(getattr(z, "z", z)), problem, zeta=1.0,
                                  margins=ConstraintMargins.zero())
    return fam


def to_cartesian(path, nodes):
    """Frenet nodes -> ``(x, y, heading, kappa, v)`` rows."""
    s, d = nodes[:, IS], nodes[:, 1]
    xy = frenet_to_cartesian_many(path, s, d)
    heading = path.tangent_angle(s) + nodes[:, 2]
    return np.column_stack([xy, heading, nodes[:, IKAP], nodes[:, IV]])


def to_frenet(path, cart):
    """Re-express Cartesian rows in the frame of ``path``."""
    try:
        s, d = project_points(path, cart[:, :2], extrapolate=True)
    except NoProjection as exc:
        raise FrameTransformError(str(exc)) from exc
    chi = wrap_angle(cart[:, 2] - path.tangent_angle(s))
    return np.column_stack([s, d, chi, cart[:, 3], cart[:, 4]])


def is_valid(current: EgoState | None, previous: PlanRecord | None, path, thresholds=None,
             shift: int = 1) -> bool:
    """Whether the current state is close enough to the previous plan's
    prediction for this instant."""
    if current is None or previous is None or len(previous.nodes) <= shift:
        return False
    th = thresholds or ValidityThresholds()
    try:
        pred = to_frenet(path, previous.cartesian[shift:shift + 1])[0]
    except FrameTransformError:
        return False
    x = current.as_array() if hasattr(current, "as_array") else np.asarray(current, dtype=float)
    pos = math.hypot(x[0] - pred[0], x[1] - pred[1])
    head = abs(wrap_angle(x[2] - pred[2]))
    vel = abs(x[4] - pred[4])
    return bool(pos <= th.position and head <= th.heading and vel <= th.velocity)


# ---------------------------------------------------------------- repairs

def recover(z, problem: OcpProblem):
    """Clamp controls nodewise and re-propagate the states from ``x0``."""
    nodes = np.asarray(getattr(z, "z", z), dtype=float).reshape(-1, NZ).copy()
    u = problem.controls.clamp(nodes[:, NX:])
    return problem.rollout(u)


def transition_matrices(problem: OcpProblem, nodes):
    """Trapezoidal one-step state transition Jacobians and their running
    products ``S(k) = Phi(k-1) ... Phi(0)`` along a solution."""
    dt = problem.dt
    x, u = nodes[:, :NX], nodes[:, NX:]
    kr, dkr = problem._kappa_r(x[:, IS])
    A, _ = ego_jacobians(x, u, kr, dkr)
    eye = np.eye(NX)
    S = np.empty((len(nodes), NX, NX))
    S[0] = eye
    for k in range(len(nodes) - 1):
        phi = np.linalg.solve(eye - 0.5 * dt * A[k + 1], eye + 0.5 * dt * A[k])
        S[k + 1] = phi @ S[k]
    return S


def sensitivity_shift(previous: PlanRecord, x0, path, shift: int = 1):
    """Previous plan re-expressed in the current frame, first ``shift``
    nodes dropped, states corrected to first order for the discrepancy
    between ``x0`` and the previous prediction.  Returns ``(M - shift, 7)``."""
    if len(previous.nodes) <= shift:
        raise FrameTransformError("previous plan too short to shift")
    states = to_frenet(path, previous.cartesian[shift:])
    x0 = np.asarray(x0.as_array() if hasattr(x0, "as_array") else x0, dtype=float)
    dx = x0 - states[0]
    dx[2] = wrap_angle(dx[2])
    S = previous.sensitivity
    base_inv = np.linalg.inv(S[shift])
    rel = S[shift:] @ base_inv
    corrected = states + rel @ dx
    corrected[0] = x0
    return np.column_stack([corrected, previous.nodes[shift:, NX:]])


# ---------------------------------------------------------------- warm start

def warm_start(problem: OcpProblem, previous: PlanRecord | None, path, shift: int = 1):
    """Previous plan re-projected and shifted, padded by holding its last
    control; zero-control rollout when there is no usable history."""
    N = problem.N
    if previous is not None and len(previous.nodes) > shift:
        try:
            states = to_frenet(path, previous.cartesian[shift:])
        except FrameTransformError:
            states = None
        if states is not None:
            u = previous.nodes[shift:, NX:]
            m = len(u)
            if m < N + 1:
                u = np.vstack([u, np.repeat(u[-1:], N + 1 - m, axis=0)])
            guess = problem.rollout(u[:N + 1]).reshape(N + 1, NZ)
            # keep the previous geometry where available, rollout beyond it
            k = min(m, N + 1)
            guess[1:k, :NX] = states[1:k]
            guess[0, :NX] = problem.x0
            return guess.reshape(-1)
    return problem.rollout(np.zeros((N + 1, 2)))


def stop_guess(problem: OcpProblem, previous: PlanRecord | None, path, shift: int = 1):
    if previous is not None:
        return warm_start(problem, previous, path, shift)
    u = np.zeros((problem.N + 1, 2))
    u[:, 1] = 0.5 * problem.controls.u2_min
    return problem.rollout(u)


# ---------------------------------------------------------------- planning

def _record(n, problem: OcpProblem, z, zeta, status, iterations, path):
    nodes = np.asarray(z, dtype=float).reshape(-1, NZ).copy()
    cart = to_cartesian(path, nodes)
    S = transition_matrices(problem, nodes)
    return PlanRecord(n, nodes, zeta, cart, S, status, iterations,
                      hard_residuals(nodes.reshape(-1), problem), problem.dt)


def ocp_safe(x0, corridor, config: PlannerConfig, zeta=1.0):
    return transcribe(x0, corridor, config.weights, config.margins, zeta, config.horizon, config.a_n_max)


def ocp_stop(x0, corridor, config: PlannerConfig):
    return transcribe(x0, corridor, config.weights.for_stop(config.stop_alpha_v),
                      ConstraintMargins.zero(), 1.0, config.horizon, config.a_n_max)


def solve_stop(x0, corridor, config: PlannerConfig, previous: PlanRecord | None = None, n: int = 0):
    """Backup lane: OCP_stop from a snapshot; returns a record or ``None``."""
    prob = ocp_stop(x0, corridor, config)
    guess = stop_guess(prob, previous, corridor.path, config.shift)
    sol = solve(prob, guess, config.iter_cap)
    z = sol.z
    if not is_safe(z, prob, config.safety):
        z = recover(z, prob)
        if not is_safe(z, prob, config.safety):
            return None
    return _record(n, prob, z, 1.0, STOP_FALLBACK, sol.iterations, corridor.path)


class BackupPlanner:
    """Concurrent OCP_stop lane.  ``publish`` starts a solve on an immutable
    snapshot; ``latest`` waits for and returns its result."""

    def __init__(self, config: PlannerConfig):
        self.config = config
        self._pool = ThreadPoolExecutor(max_workers=1, thread_name_prefix="backup")
        self._future = None
        self._last = None

    def publish(self, x0, corridor, n):
        prev = self._last
        self._future = self._pool.submit(solve_stop, np.array(x0, dtype=float), corridor,
                                         self.config, prev, n)

    def latest(self):
        if self._future is not None:
            self._last = self._future.result()
            self._future = None
        return self._last

    def close(self):
        self._pool.shutdown(wait=True)


@dataclass
class StepResult:
    record: PlanRecord
    problem: OcpProblem
    solves: int
    iterations: int


def plan_step(variant: str, x0, corridor: Corridor, previous: PlanRecord | None,
              config: PlannerConfig | None = None, backup: BackupPlanner | None = None,
              n: int = 0, location=None) -> StepResult:
    """One planning tick.  Raises ``TickFailure`` when no strategy of the
    variant yields a plan that passes ``is_safe``."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    cfg = config or PlannerConfig()
    x0 = np.asarray(x0.as_array() if hasattr(x0, "as_array") else x0, dtype=float)
    path = corridor.path
    tol = cfg.safety
    problem = ocp_safe(x0, corridor, cfg, 1.0)
    guess = warm_start(problem, previous, path, cfg.shift)
    solves = 0
    iters = 0

    if variant == "hb":
        last_safe = None
        sol = None
        hess = None
        z = guess
        for zeta in homotopy_schedule(cfg.homotopy_z):
            prob_i = problem if zeta == 1.0 else ocp_safe(x0, corridor, cfg, zeta)
            sol = solve(prob_i, z, cfg.iter_cap, hessian=hess)
            solves += 1
            iters += sol.iterations
            z, hess = sol.z, sol.hessian
            if zeta < 1.0 and is_safe(sol.z, problem, tol, zeta):
                last_safe = (sol.z, zeta, sol.iterations)
        if is_safe(sol.z, problem, tol):
            return StepResult(_record(n, problem, sol.z, 1.0, OPTIMAL, iters, path), problem, solves, iters)
        if last_safe is not None:
            zl, zeta_l, _ = last_safe
            return StepResult(_record(n, problem, zl, zeta_l, HOMOTOPY_PARTIAL, iters, path),
                              problem, solves, iters)
        raise TickFailure(variant, location, hard_residuals(sol.z, problem))

    sol = solve(problem, guess, cfg.iter_cap)
    solves, iters = 1, sol.iterations
    if is_safe(sol.z, problem, tol):
        return StepResult(_record(n, problem, sol.z, 1.0, OPTIMAL, iters, path), problem, solves, iters)
    residuals = hard_residuals(sol.z, problem)
    if variant == "mpc":
        raise TickFailure(variant, location, residuals)

    zr = recover(sol.z, problem)
    if is_safe(zr, problem, tol):
        return StepResult(_record(n, problem, zr, 1.0, RECOVERED, iters, path), problem, solves, iters)
    if variant == "re":
        raise TickFailure(variant, location, residuals)

    if variant == "su":
        if is_valid(x0, previous, path, cfg.validity, cfg.shift):
            try:
                nodes = sensitivity_shift(previous, x0, path, cfg.shift)
            except FrameTransformError:
                nodes = None
            if nodes is not None:
                m = len(nodes) - 1
                short = HorizonConfig(problem.dt * m, m)
                sprob = replace_horizon(problem, short)
                if is_safe(nodes.reshape(-1), sprob, tol):
                    rec = _record(n, sprob, nodes.reshape(-1), previous.zeta, SENSITIVITY_SHIFTED, iters, path)
                    return StepResult(rec, sprob, solves, iters)
        raise TickFailure(variant, location, residuals)

    # ss
    stop = backup.latest() if backup is not None else solve_stop(x0, corridor, cfg, None, n)
    if stop is not None and np.allclose(stop.nodes[0, :NX], x0, atol=1e-9):
        sprob = ocp_stop(x0, corridor, cfg)
        if is_safe(stop.nodes.reshape(-1), sprob, tol):
            return StepResult(stop, sprob, solves, iters)
    raise TickFailure(variant, location, residuals)


def replace_horizon(problem: OcpProblem, horizon: HorizonConfig) -> OcpProblem:
    return OcpProblem(problem.x0, problem.corridor, problem.weights, problem.margins,
                      problem.zeta, horizon, problem.a_n_max)
