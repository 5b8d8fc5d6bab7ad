"""End-to-end acceptance criteria, one pass/fail line each."""
import time
from dataclasses import replace

import numpy as np
import pytest

from safeplan.corridor import (EgoGeometry, augment_boundaries, build_corridor, detect_blockade, fit_bumps,
                               ramp_speed)
from safeplan.dynamics import ObstacleMotionModel
from safeplan.mpc import PlannerConfig, plan_step
from safeplan.projection import Obstacle, project_obstacle
from safeplan.scenario import load
from safeplan.sim import COMPLETED, FAILED, HALTED, _local_frame, run
from safeplan.splines import BoundarySpline1D, fit_path

VARIANTS = ("mpc", "re", "hb", "su", "ss")


def _run(name, variant, **kw):
    sc = load(name)
    if "homotopy_z" in kw:
        sc.planner = replace(sc.planner, homotopy_z=kw.pop("homotopy_z"))
    t0 = time.perf_counter()
    res = run(sc, variant, keep_plans=True, **kw)
    return res, time.perf_counter() - t0


@pytest.fixture(scope="module")
def scenario2():
    return {v: _run("scenario2", v) for v in VARIANTS}


@pytest.fixture(scope="module")
def scenario1():
    return {v: _run("scenario1", v)[0] for v in ("mpc", "hb", "ss")}


@pytest.fixture(scope="module")
def blockade_ss():
    return _run("blockade", "ss")[0]


def _lateral_rms(a, b):
    sa, da = a.column("s_global"), a.column("d")
    sb, db = b.column("s_global"), b.column("d")
    lo, hi = max(sa[0], sb[0]), min(sa[-1], sb[-1])
    s = np.linspace(lo, hi, 500)
    return float(np.sqrt(np.mean((np.interp(s, sa, da) - np.interp(s, sb, db)) ** 2)))


def test_scenario2_overtaking(scenario2, criterion):
    ref = scenario2["mpc"][0]
    parts, ok = [], True
    for v, (res, secs) in scenario2.items():
        rms = _lateral_rms(ref, res)
        good = res.outcome.kind == COMPLETED and res.collisions == 0 and rms <= 0.3 and secs < 60
        ok &= good
        parts.append(f"{v}:{res.outcome} c={res.collisions} rms={rms:.3f} {secs:.1f}s")
    assert criterion("1 scenario-2 overtaking: all variants complete, lateral RMS <= 0.3 m, < 60 s",
                     ok, "; ".join(parts))


def test_scenario1_pin(scenario1, criterion):
    mpc, hb, ss = scenario1["mpc"], scenario1["hb"], scenario1["ss"]
    vmin_hb, vmin_ss = hb.column("v").min(), ss.column("v").min()
    ok = (hb.outcome.kind == COMPLETED and hb.collisions == 0
          and ss.outcome.kind == COMPLETED and ss.collisions == 0
          and vmin_hb > vmin_ss and mpc.outcome.kind == FAILED)
    detail = (f"mpc:{mpc.outcome} hb:{hb.outcome} c={hb.collisions} vmin={vmin_hb:.2f} "
              f"ss:{ss.outcome} c={ss.collisions} vmin={vmin_ss:.2f}")
    assert criterion("2 scenario-1 pin: HB and SS complete, vmin(HB) > vmin(SS), plain MPC fails", ok, detail)


def _dense_oracle(c, spacing=0.01):
    s = np.arange(c.s_start, c.length + 1e-9, spacing)
    best = c.length
    for k in range(c.steps + 1):
        closed = np.flatnonzero(c.tunnel_width(s, k) <= c.omega_min)
        if len(closed):
            best = min(best, s[closed[0]])
    return best


def test_blockade(blockade_ss, criterion):
    sc = load("blockade")
    s0 = float(sc.ego_pose[0])
    local, rb, lb = _local_frame(sc, s0)
    prots = [project_obstacle(Obstacle(o.footprint(), o.motion, o.margin), local, rb, lb, 0.14, 25)
             for o in sc.obstacles]
    c = build_corridor(prots, rb, lb, local.length, 25, sc.v_road, sc.ego, sc.controls, s_start=0.0,
                       path=local)
    s_h, _ = detect_blockade(c)
    err = abs(s_h - _dense_oracle(c))

    res = blockade_ss
    last = res.rows[-1]
    stop_global = last["s_global"] + last["s_stop"] - last["s"]
    halted = res.outcome.kind == HALTED and res.final[4] < 0.1 and res.final_s <= stop_global

    b = c.blockade
    jumps = []
    for j in (b.s_decl, b.s_stop):
        v, _ = ramp_speed(np.array([np.nextafter(j, -np.inf), j, np.nextafter(j, np.inf)]),
                          b.s_decl, b.s_stop, b.v0)
        jumps.append(float(np.ptp(v)))
    ok = err <= 0.05 and halted and max(jumps) <= 1e-9 and res.collisions == 0
    detail = (f"|s_h - oracle|={err:.4f} outcome={res.outcome} v_end={res.final[4]:.3f} "
              f"s_end={res.final_s:.2f} <= s_stop={stop_global:.2f} junction={max(jumps):.1e}")
    assert criterion("3 blockade: detection vs dense oracle, SS halts before the stop point, ramp continuity",
                     ok, detail)


def test_homotopy_identities(scenario2, criterion):
    L = 100.0
    t = np.arange(0.0, L + 1)
    path = fit_path(np.column_stack([t, 0.01 * t ** 1.5]))
    s_k = np.linspace(0, path.length, 21)
    r = BoundarySpline1D.fit(s_k, -2.0 + 0.3 * np.sin(s_k / 9))
    l = BoundarySpline1D.fit(s_k, 2.2 + 0.2 * np.cos(s_k / 7))
    xy = path.position(np.array([30.0, 34.0]))
    fp = np.array([[xy[0, 0], xy[0, 1] - 3.5], [xy[1, 0], xy[1, 1] - 3.5],
                   [xy[1, 0], xy[1, 1] - 0.9], [xy[0, 0], xy[0, 1] - 0.9]])
    ob = Obstacle(fp, ObstacleMotionModel("cv", 1.5, 1.2), 0.2)
    c = build_corridor([project_obstacle(ob, path, r, l, 0.14, 25)], r, l, path.length, 25, 10.0,
                       EgoGeometry(), path=path)
    rng = np.random.default_rng(0)
    s = rng.uniform(0, path.length, 1000)
    k = rng.integers(0, 26, 1000)
    lo0, hi0 = c.blend(s, k, 0.0)
    lo1, hi1 = c.blend(s, k, 1.0)
    alo, ahi = c.augmented(s, k)
    e0 = max(np.abs(lo0 - r(s)).max(), np.abs(hi0 - l(s)).max())
    e1 = max(np.abs(lo1 - alo).max(), np.abs(hi1 - ahi).max())

    same = []
    for name in ("empty", "scenario2", "blockade"):
        base = scenario2["mpc"][0] if name == "scenario2" else _run(name, "mpc")[0]
        one = _run(name, "hb", homotopy_z=1)[0]
        equal = (str(base.outcome) == str(one.outcome) and len(base.plans) == len(one.plans)
                 and all(np.array_equal(a[1], b[1]) for a, b in zip(base.plans, one.plans)))
        same.append(f"{name}:{'same' if equal else 'DIFF'}({len(one.plans)})")
    ok = e0 <= 1e-12 and e1 <= 1e-12 and all("same" in x for x in same)
    assert criterion("4 homotopy endpoints exact, HB with Z=1 equals plain MPC",
                     ok, f"zeta0={e0:.1e} zeta1={e1:.1e} " + " ".join(same))


def test_oracle_suite(criterion):
    import test_dynamics
    import test_geometry
    import test_ocp
    import test_splines
    checks = {
        "a hull": test_geometry.test_hull_matches_brute_force_on_200_sets,
        "b clip": test_geometry.test_clip_piecewise_boundary_matches_monte_carlo_area,
        "c projection": test_splines.test_projection_matches_dense_argmin,
        "d gradients": test_ocp.test_derivatives_match_finite_differences,
        "e rk4 order": test_dynamics.test_rk4_order_four_on_cca,
    }
    parts, ok = [], True
    for name, fn in checks.items():
        try:
            fn()
            parts.append(f"{name}:ok")
        except AssertionError:
            ok = False
            parts.append(f"{name}:FAILED")
    assert criterion("5 numerical oracle suite (a-e)", ok, " ".join(parts))


def test_performance(scenario2, criterion):
    t = np.arange(0.0, 101)
    path = fit_path(np.column_stack([t, np.zeros_like(t)]))
    r, l = BoundarySpline1D.constant(-2.0, 100.0), BoundarySpline1D.constant(2.0, 100.0)
    th = np.linspace(0, 2 * np.pi, 9)[:-1]
    octagon = np.column_stack([30 + 1.5 * np.cos(th), -2.0 + 1.2 * np.sin(th)])
    ob = Obstacle(octagon, ObstacleMotionModel("cv", 2.0, 0.3), 0.2)
    for _ in range(5):
        project_obstacle(ob, path, r, l, 0.15, 30)
    n = 200
    t0 = time.perf_counter()
    for _ in range(n):
        project_obstacle(ob, path, r, l, 0.15, 30)
    proj_us = (time.perf_counter() - t0) / n * 1e6

    obs = [ob, Obstacle(np.array([[50, 0.8], [53, 0.8], [53, 3.0], [50, 3.0]])),
           Obstacle(np.array([[70, -3.0], [72, -3.0], [72, -1.0], [70, -1.0]]),
                    ObstacleMotionModel("cv", 3.0, 0.0))]
    prots = [project_obstacle(o, path, r, l, 0.14, 25) for o in obs]
    ego = EgoGeometry()

    def augment():
        # augmented boundaries: bump samples plus their interpolant
        fit_bumps(*augment_boundaries(prots, r, l, ego, 100.0, 25))

    augment()
    n = 30
    t0 = time.perf_counter()
    for _ in range(n):
        augment()
    aug_us = (time.perf_counter() - t0) / n * 1e6
    t0 = time.perf_counter()
    for _ in range(n):
        build_corridor(prots, r, l, 100.0, 25, 10.0, ego, path=path)
    full_us = (time.perf_counter() - t0) / n * 1e6

    tick_ms = float(np.mean(scenario2["mpc"][0].column("wall_ms")))
    ok = proj_us <= 4 * 450 and aug_us <= 4 * 2500 and tick_ms <= 50
    detail = (f"projection {proj_us:.0f} us, augmentation {aug_us:.0f} us, mean MPC tick {tick_ms:.1f} ms "
              f"(corridor with blockade stage {full_us:.0f} us, not budgeted)")
    assert criterion("6 performance: projection <= 1800 us, augmentation <= 10000 us, MPC tick <= 50 ms",
                     ok, detail)


def test_safety_verification(scenario2, scenario1, blockade_ss, criterion):
    import test_mpc
    runs = [r for r, _ in scenario2.values()] + list(scenario1.values()) + [blockade_ss]
    accepted = sum(len(r.rows) for r in runs)
    unverified = sum(int((r.column("verified") == 0).sum()) for r in runs if r.rows)
    fuzz_ok = True
    try:
        cor = test_mpc.corridor([test_mpc.BOX])
        step = plan_step("mpc", np.array([5.0, 0.0, 0.0, 0.0, 8.0]), cor, None, PlannerConfig())
        test_mpc.test_is_safe_fuzz((cor, None, step))
    except AssertionError:
        fuzz_ok = False
    ok = unverified == 0 and fuzz_ok
    assert criterion("7 safety verification: accepted plans pass is_safe, 1e4 fuzzed rejections", ok,
                     f"{accepted} accepted plans, {unverified} unverified, fuzz {'ok' if fuzz_ok else 'FAILED'}")
