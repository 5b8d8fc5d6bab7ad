"""Optimal control problem: trapezoidal transcription and an SQP solver.

Decision vector: ``z = (x(0), u(0), ..., x(N), u(N))`` with the Frenet
state ``x = (s, d, chi, kappa, v)`` and controls ``u = (u1, u2)``, seven
entries per node.  Equalities are the initial condition and the trapezoidal
defects; inequalities are written as ``g(z) <= 0``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import quadprog
from scipy.linalg import lu_factor, lu_solve, qr, solve_triangular

from .dynamics import NU, NX, ego_derivative, ego_jacobians

NZ = NX + NU
IS, ID, ICHI, IKAP, IV, IU1, IU2 = range(NZ)

FAMILIES = ("stop", "d_lo", "d_hi", "v_lo", "v_hi", "an_pos", "an_neg",
            "u1_lo", "u1_hi", "u2_lo", "u2_hi")
STATE_FAMILIES = FAMILIES[:7]
CONTROL_FAMILIES = FAMILIES[7:]
A_N_MAX = 4.0


@dataclass(frozen=True)
class HorizonConfig:
    T: float = 3.5
    N: int = 25

    def __post_init__(self):
        if self.N < 2 or not self.T > 0:
            raise ValueError("horizon needs N >= 2 and T > 0")

    @property
    def dt(self):
        return self.T / self.N


@dataclass(frozen=True)
class ObjectiveWeights:
    s: float = 1.0
    d: float = 0.5
    chi: float = 1.0
    u1: float = 5.0
    u2: float = 0.5
    v: float = 0.0

    def __post_init__(self):
        if min(self.s, self.d, self.chi, self.u1, self.u2, self.v) < 0:
            raise ValueError("objective weights must be non-negative")

    def for_stop(self, alpha_v: float = 2.0):
        """Weights of the stopping problem: no progress reward, speed penalty."""
        if not alpha_v > 0:
            raise ValueError("stop problem needs alpha_v > 0")
        return replace(self, s=0.0, v=alpha_v)


@dataclass(frozen=True)
class ConstraintMargins:
    """Tightening per constraint family (same units as the constraint)."""

    stop: float = 0.5
    lateral: float = 0.1
    v_lo: float = 0.0
    velocity: float = 0.2
    accel: float = 0.2
    control: float = 0.0

    def __post_init__(self):
        if min(self.stop, self.lateral, self.v_lo, self.velocity, self.accel, self.control) < 0:
            raise ValueError("margins must be non-negative")

    @classmethod
    def zero(cls):
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)

    def family(self, name):
        return {
            "stop": self.stop, "d_lo": self.lateral, "d_hi": self.lateral,
            "v_lo": self.v_lo, "v_hi": self.velocity,
            "an_pos": self.accel, "an_neg": self.accel,
        }.get(name, self.control)

    def scaled(self, factor: float):
        return ConstraintMargins(*(factor * getattr(self, f) for f in
                                   ("stop", "lateral", "v_lo", "velocity", "accel", "control")))


# ---------------------------------------------------------------- generic NLP

class NlpProblem:
    """Smooth NLP ``min f(z) s.t. c(z) = 0, g(z) <= 0``.

    Subclasses provide the callbacks.  ``partition`` may return
    ``(dependent, free)`` index arrays such that the equality Jacobian
    restricted to ``dependent`` is square and invertible; otherwise a QR
    null space is used.
    """

    n: int = 0

    def objective(self, z):
        raise NotImplementedError

    def gradient(self, z):
        raise NotImplementedError

    def hessian_guess(self):
        return np.eye(self.n)

    def equality(self, z):
        """``(c, J)``."""
        return np.zeros(0), np.zeros((0, self.n))

    def inequality(self, z):
        """``(g, G)``."""
        return np.zeros(0), np.zeros((0, self.n))

    def partition(self):
        return None


class QuadraticProblem(NlpProblem):
    """``min 1/2 z'Hz + q'z  s.t.  A z = b,  C z <= e`` as an NLP."""

    def __init__(self, H, q, A=None, b=None, C=None, e=None):
        self.H = np.asarray(H, float)
        self.q = np.asarray(q, float)
        self.n = len(self.q)
        self.A = np.zeros((0, self.n)) if A is None else np.asarray(A, float)
        self.b = np.zeros(0) if b is None else np.asarray(b, float)
        self.C = np.zeros((0, self.n)) if C is None else np.asarray(C, float)
        self.e = np.zeros(0) if e is None else np.asarray(e, float)

    def objective(self, z):
        return 0.5 * z @ self.H @ z + self.q @ z

    def gradient(self, z):
        return self.H @ z + self.q

    def hessian_guess(self):
        return self.H.copy()

    def equality(self, z):
        return self.A @ z - self.b, self.A

    def inequality(self, z):
        return self.C @ z - self.e, self.C


@dataclass
class NlpSolution:
    z: np.ndarray
    objective: float
    status: str
    iterations: int
    violation: float
    lam_eq: np.ndarray | None = None
    lam_ineq: np.ndarray | None = None
    hessian: np.ndarray | None = None
    merit: list = field(default_factory=list)

    @property
    def ok(self):
        return self.status == "Converged"


CONVERGED = "Converged"
ITERATION_LIMIT = "IterationLimit"
INFEASIBLE = "Infeasible"


# ---------------------------------------------------------------- SQP

class _NullSpace:
    def __init__(self, J, c, part):
        n = J.shape[1]
        self.part = part
        if J.shape[0] == 0:
            self.p0 = np.zeros(n)
            self.Z = np.eye(n)
            return
        if part is not None:
            dep, free = part
            self.dep, self.free = dep, free
            self.lu = lu_factor(J[:, dep])
            Z = np.zeros((n, len(free)))
            Z[dep] = -lu_solve(self.lu, J[:, free])
            Z[free, np.arange(len(free))] = 1.0
            p0 = np.zeros(n)
            p0[dep] = -lu_solve(self.lu, c)
        else:
            m = J.shape[0]
            Q, R = qr(J.T)
            self.Q1, self.R = Q[:, :m], R[:m, :m]
            Z = Q[:, m:]
            p0 = -self.Q1 @ solve_triangular(self.R, c, trans="T")
        self.p0, self.Z = p0, Z

    def eq_multipliers(self, r):
        """``lam`` with ``J' lam = -r`` (least squares on the range)."""
        if not hasattr(self, "lu") and not hasattr(self, "Q1"):
            return np.zeros(0)
        if self.part is not None:
            return -lu_solve(self.lu, r[self.dep], trans=1)
        return -solve_triangular(self.R, self.Q1.T @ r)


def _solve_qp(B, grad, c, J, g, G, part, elastic_penalty=1e4):
    """Returns ``(p, lam_eq, mu, slack)``; raises ``np.linalg.LinAlgError``
    if the equality system is singular."""
    ns = _NullSpace(J, c, part)
    Z, p0 = ns.Z, ns.p0
    BZ = B @ Z
    H = Z.T @ BZ
    H = 0.5 * (H + H.T)
    nr = H.shape[0]
    H[np.diag_indices(nr)] += 1e-10 * max(1.0, float(np.abs(np.diag(H)).max(initial=0.0)))
    q = Z.T @ (B @ p0 + grad)
    m = len(g)
    slack = 0.0
    if m:
        GZ = G @ Z
        rhs = g + G @ p0
        try:
            y, _, _, _, mu, _ = quadprog.solve_qp(H, -q, -GZ.T, rhs, 0)
        except ValueError:
            # elastic mode: one shared slack on all inequalities
            He = np.zeros((nr + 1, nr + 1))
            He[:nr, :nr] = H
            He[nr, nr] = 1.0
            ae = np.concatenate([-q, [-elastic_penalty]])
            Ce = np.zeros((nr + 1, m + 1))
            Ce[:nr, :m] = -GZ.T
            Ce[nr, :m] = 1.0
            Ce[nr, m] = 1.0
            be = np.concatenate([rhs, [0.0]])
            sol, _, _, _, lam, _ = quadprog.solve_qp(He, ae, Ce, be, 0)
            y, slack, mu = sol[:nr], float(sol[nr]), lam[:m]
    else:
        y = np.linalg.solve(H, -q)
        mu = np.zeros(0)
    p = p0 + Z @ y
    r = grad + B @ p + (G.T @ mu if m else 0.0)
    lam = ns.eq_multipliers(r)
    return p, lam, mu, slack


def _violation(c, g):
    v = float(np.abs(c).max(initial=0.0))
    if len(g):
        v = max(v, float(g.max()))
    return max(v, 0.0)


def _l1(c, g):
    return float(np.abs(c).sum() + np.maximum(g, 0.0).sum())


@dataclass
class SqpSettings:
    tol: float = 1e-6
    step_tol: float = 1e-7
    armijo: float = 1e-4
    min_alpha: float = 2.0 ** -12


def solve(problem: NlpProblem, z0, max_iterations: int = 30, hessian=None,
          settings: SqpSettings | None = None) -> NlpSolution:
    """SQP with damped BFGS and an L1 merit line search.

    Returns the best iterate seen (lowest violation, then objective) when
    the iteration cap is hit.  Deterministic for identical inputs.
    """
    st = settings or SqpSettings()
    z = np.array(z0, dtype=float, copy=True)
    if z.shape != (problem.n,):
        raise ValueError(f"initial guess must have shape ({problem.n},)")
    f = problem.objective(z)
    c, J = problem.equality(z)
    g, G = problem.inequality(z)
    viol = _violation(c, g)
    if max_iterations <= 0:
        return NlpSolution(z, f, ITERATION_LIMIT, 0, viol)

    B0 = problem.hessian_guess()
    B = B0.copy() if hessian is None else np.array(hessian, dtype=float, copy=True)
    grad = problem.gradient(z)
    part = problem.partition()
    nu = 1.0
    best = (z.copy(), f, viol)
    merit_log = []
    lam = mu = None
    status = ITERATION_LIMIT
    used_slack = False
    fails = 0
    it = 0
    for it in range(1, max_iterations + 1):
        try:
            p, lam, mu, slack = _solve_qp(B, grad, c, J, g, G, part)
        except (np.linalg.LinAlgError, ValueError):
            status = INFEASIBLE if viol > 1e3 * st.tol else ITERATION_LIMIT
            break
        used_slack = slack > st.tol
        pmax = float(np.abs(p).max(initial=0.0))
        if pmax <= st.step_tol and viol <= st.tol and not used_slack:
            status = CONVERGED
            break
        mult = max(float(np.abs(lam).max(initial=0.0)), float(np.abs(mu).max(initial=0.0)))
        nu = max(nu, 1.1 * mult)
        l1 = _l1(c, g)
        phi = f + nu * l1
        dphi = float(grad @ p) - nu * l1
        alpha = 1.0
        accepted = False
        while alpha >= st.min_alpha:
            zt = z + alpha * p
            ft = problem.objective(zt)
            ct, _ = problem.equality(zt)
            gt, _ = problem.inequality(zt)
            phit = ft + nu * _l1(ct, gt)
            if phit <= phi + st.armijo * alpha * min(dphi, 0.0):
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            fails += 1
            B = B0.copy()
            if fails >= 2:
                break
            continue
        fails = 0
        merit_log.append((phi, phit))
        z_old, grad_old, J_old, G_old = z, grad, J, G
        z = zt
        f = ft
        grad = problem.gradient(z)
        c, J = problem.equality(z)
        g, G = problem.inequality(z)
        viol = _violation(c, g)

        # damped BFGS on the Lagrangian gradient with the new multipliers
        sv = z - z_old
        gl_new = grad + J.T @ lam + (G.T @ mu if len(mu) else 0.0)
        gl_old = grad_old + J_old.T @ lam + (G_old.T @ mu if len(mu) else 0.0)
        yv = gl_new - gl_old
        Bs = B @ sv
        sBs = float(sv @ Bs)
        if sBs > 1e-16:
            sy = float(sv @ yv)
            if sy < 0.2 * sBs:
                theta = 0.8 * sBs / (sBs - sy)
                yv = theta * yv + (1.0 - theta) * Bs
                sy = float(sv @ yv)
            B = B - np.outer(Bs, Bs) / sBs + np.outer(yv, yv) / sy

        key = (viol if viol > st.tol else 0.0, f)
        best_key = (best[2] if best[2] > st.tol else 0.0, best[1])
        if key <= best_key:
            best = (z.copy(), f, viol)

        if alpha * pmax <= st.step_tol and viol <= st.tol:
            status = CONVERGED
            break
    if status == CONVERGED:
        return NlpSolution(z, f, status, it, viol, lam, mu, B, merit_log)
    zb, fb, vb = best
    if used_slack and vb > 1e3 * st.tol:
        status = INFEASIBLE
    elif status != INFEASIBLE:
        status = ITERATION_LIMIT
    return NlpSolution(zb, fb, status, it, vb, lam, mu, B, merit_log)


# ---------------------------------------------------------------- transcription

def node_view(z, N):
    return np.asarray(z, dtype=float).reshape(N + 1, NZ)


class OcpProblem(NlpProblem):
    """Trapezoidal transcription of the corridor-constrained OCP."""

    def __init__(self, x0, corridor, weights: ObjectiveWeights, margins: ConstraintMargins,
                 zeta: float, horizon: HorizonConfig, a_n_max: float = A_N_MAX):
        if not 0.0 <= zeta <= 1.0:
            raise ValueError("zeta must lie in [0, 1]")
        if corridor.steps < horizon.N:
            raise ValueError("corridor covers fewer steps than the horizon")
        self.x0 = np.asarray(x0 if not hasattr(x0, "as_array") else x0.as_array(), dtype=float)
        self.corridor = corridor
        self.weights = weights
        self.margins = margins
        self.zeta = float(zeta)
        self.horizon = horizon
        self.a_n_max = float(a_n_max)
        self.N = N = horizon.N
        self.dt = horizon.dt
        self.n = (N + 1) * NZ
        self.controls = corridor.controls
        self.path = getattr(corridor, "path", None)

        w = np.ones(N + 1)
        w[0] = w[-1] = 0.5
        self._wq = w * self.dt
        qw = np.zeros(NZ)
        qw[ID], qw[ICHI], qw[IV] = weights.d, weights.chi, weights.v
        qw[IU1], qw[IU2] = weights.u1, weights.u2
        self._qdiag = (self._wq[:, None] * qw[None, :]).reshape(-1)

        idx = np.arange(self.n).reshape(N + 1, NZ)
        self._idx = idx
        dep = idx[:, :NX].reshape(-1)
        free = idx[:, NX:].reshape(-1)
        self._part = (dep, free)

        nodes = np.arange(1, N + 1)
        self._nodes = nodes
        # node 0 is pinned by the initial condition; only the lateral
        # acceleration limit is also imposed there
        sizes = {f: N for f in STATE_FAMILIES}
        sizes.update({f: N + 1 for f in ("an_pos", "an_neg") + CONTROL_FAMILIES})
        self.slices = {}
        start = 0
        for fam in FAMILIES:
            self.slices[fam] = slice(start, start + sizes[fam])
            start += sizes[fam]
        self.m_ineq = start
        self._margin_vec = np.concatenate(
            [np.full(sizes[f], margins.family(f)) for f in FAMILIES])

    # -- reference curvature
    def _kappa_r(self, s):
        if self.path is None:
            return np.zeros_like(s), np.zeros_like(s)
        return self.path.curvature(s), self.path.curvature_derivative(s)

    # -- objective
    def objective(self, z):
        q = self._qdiag @ (z * z)
        return float(-self.weights.s * z[self._idx[-1, IS]] + q)

    def gradient(self, z):
        gr = 2.0 * self._qdiag * z
        gr[self._idx[-1, IS]] -= self.weights.s
        return gr

    def hessian_guess(self):
        h = 2.0 * self._qdiag
        # small curvature on otherwise unpenalized states keeps the model convex
        reg = np.zeros(NZ)
        reg[IS], reg[IKAP], reg[IV] = 1e-3, 1e-1, 1e-2
        h = h + np.tile(reg, self.N + 1) * self.dt
        h = np.maximum(h, 1e-6)
        return np.diag(h)

    def partition(self):
        return self._part

    # -- dynamics
    def equality(self, z):
        N, dt = self.N, self.dt
        Zn = node_view(z, N)
        x, u = Zn[:, :NX], Zn[:, NX:]
        kr, dkr = self._kappa_r(x[:, IS])
        fx = ego_derivative(x, u, kr)
        A, Bm = ego_jacobians(x, u, kr, dkr)
        c = np.empty(NX * (N + 1))
        c[:NX] = x[0] - self.x0
        c[NX:] = (x[1:] - x[:-1] - 0.5 * dt * (fx[:-1] + fx[1:])).reshape(-1)

        J = np.zeros((NX * (N + 1), self.n))
        J[np.arange(NX), np.arange(NX)] = 1.0
        D = np.concatenate([A, Bm], axis=2)  # (N+1, 5, 7)
        eye = np.zeros((NX, NZ))
        eye[:, :NX] = np.eye(NX)
        for k in range(N):
            r = NX * (k + 1)
            J[r:r + NX, k * NZ:(k + 1) * NZ] = -eye - 0.5 * dt * D[k]
            J[r:r + NX, (k + 1) * NZ:(k + 2) * NZ] = eye - 0.5 * dt * D[k + 1]
        return c, J

    # -- path constraints
    def raw_residuals(self, z, zeta=None):
        """Residual vector and Jacobian with zero margins."""
        zeta = self.zeta if zeta is None else zeta
        N = self.N
        Zn = node_view(z, N)
        nodes = self._nodes
        s, d = Zn[nodes, IS], Zn[nodes, ID]
        v = Zn[nodes, IV]
        lo, hi, dlo, dhi = self.corridor.bounds(s, nodes, zeta)
        vhi, dvhi = self.corridor.speed_bound(s, zeta)
        kap_all, v_all = Zn[:, IKAP], Zn[:, IV]
        an = kap_all * v_all * v_all
        ub = self.controls
        u1, u2 = Zn[:, IU1], Zn[:, IU2]
        g = np.concatenate([
            s - self.corridor.s_stop,
            lo - d,
            d - hi,
            -v,
            v - vhi,
            an - self.a_n_max,
            -an - self.a_n_max,
            ub.u1_min - u1,
            u1 - ub.u1_max,
            ub.u2_min - u2,
            u2 - ub.u2_max,
        ])
        G = np.zeros((self.m_ineq, self.n))
        idx = self._idx
        sl = self.slices
        r = np.arange(N)
        rc = np.arange(N + 1)
        is_, id_, iv = idx[nodes, IS], idx[nodes, ID], idx[nodes, IV]
        ik_all, iv_all = idx[:, IKAP], idx[:, IV]
        G[sl["stop"].start + r, is_] = 1.0
        G[sl["d_lo"].start + r, is_] = dlo
        G[sl["d_lo"].start + r, id_] = -1.0
        G[sl["d_hi"].start + r, is_] = -dhi
        G[sl["d_hi"].start + r, id_] = 1.0
        G[sl["v_lo"].start + r, iv] = -1.0
        G[sl["v_hi"].start + r, is_] = -dvhi
        G[sl["v_hi"].start + r, iv] = 1.0
        G[sl["an_pos"].start + rc, ik_all] = v_all * v_all
        G[sl["an_pos"].start + rc, iv_all] = 2.0 * kap_all * v_all
        G[sl["an_neg"].start + rc, ik_all] = -v_all * v_all
        G[sl["an_neg"].start + rc, iv_all] = -2.0 * kap_all * v_all
        G[sl["u1_lo"].start + rc, idx[:, IU1]] = -1.0
        G[sl["u1_hi"].start + rc, idx[:, IU1]] = 1.0
        G[sl["u2_lo"].start + rc, idx[:, IU2]] = -1.0
        G[sl["u2_hi"].start + rc, idx[:, IU2]] = 1.0
        return g, G

    def inequality(self, z):
        g, G = self.raw_residuals(z)
        return g + self._margin_vec, G

    def family_max(self, g):
        return {f: float(g[self.slices[f]].max()) for f in FAMILIES}

    # -- helpers
    def rollout(self, controls, x0=None):
        """States from ``controls`` (N+1, 2) by RK4 with linearly
        interpolated controls, packed as a decision vector."""
        x = (self.x0 if x0 is None else np.asarray(x0, dtype=float)).copy()
        u = np.asarray(controls, dtype=float)
        dt = self.dt
        out = np.empty((self.N + 1, NZ))
        out[0, :NX], out[:, NX:] = x, u
        for k in range(self.N):
            x = _rk4_interp(x, u[k], u[k + 1], dt, self._kappa_r)
            x[IV] = max(x[IV], 0.0)
            out[k + 1, :NX] = x
        return out.reshape(-1)


def _rk4_interp(x, ua, ub, dt, kappa_fn):
    def f(xx, uu):
        kr, _ = kappa_fn(np.array([xx[IS]]))
        return ego_derivative(xx, uu, kr[0])

    um = 0.5 * (ua + ub)
    k1 = f(x, ua)
    k2 = f(x + 0.5 * dt * k1, um)
    k3 = f(x + 0.5 * dt * k2, um)
    k4 = f(x + dt * k3, ub)
    return x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def transcribe(x0, corridor, weights=None, margins=None, zeta: float = 1.0,
               horizon=None, a_n_max: float = A_N_MAX) -> OcpProblem:
    return OcpProblem(x0, corridor, weights or ObjectiveWeights(),
                      margins if margins is not None else ConstraintMargins(),
                      zeta, horizon or HorizonConfig(), a_n_max)


def evaluate_constraints(z, problem: OcpProblem, zeta=None, margins: ConstraintMargins | None = None):
    """Signed residuals (negative = satisfied) for ``margins`` (default: the
    problem's own margins).  Returns ``(g, per_family_max)``."""
    g, _ = problem.raw_residuals(np.asarray(getattr(z, "z", z), dtype=float), zeta)
    m = problem.margins if margins is None else margins
    vec = np.concatenate([np.full(problem.slices[f].stop - problem.slices[f].start, m.family(f))
                          for f in FAMILIES])
    g = g + vec
    return g, problem.family_max(g)
