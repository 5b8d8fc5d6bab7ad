import csv
import json

import numpy as np
import pytest
import yaml

from safeplan.cli import EXIT_FAILED, EXIT_OK, EXIT_SCENARIO, main
from safeplan.errors import ScenarioError
from safeplan.scenario import bundled, load, parse
from safeplan.sim import COMPLETED, FAILED, TRACE_COLUMNS, _advance_ego, emit, run, timing_table

EMPTY = {"road": {"reference": {"generator": "straight", "length": 120}}, "ego": {"s": 5.0, "speed": 8.0}}


def test_bundled_scenarios_load():
    names = bundled()
    assert {"empty", "scenario1", "scenario2", "blockade"} <= set(names)
    for n in names:
        load(n)


@pytest.mark.parametrize("patch", [
    {"road": None},
    {"road": {"reference": {"generator": "spiral"}}},
    {"road": {"reference": {"generator": "straight"}, "speed_limit": -1}},
    {"ego": {"speed": -2.0}},
    {"obstacles": [{"margin": 0.1}]},
    {"sim": {"goal_s": 500.0}},
    {"unexpected": 1},
    {"ego": {"controls": {"u1_min": 1.0, "u1_max": -1.0}}},
    {"road": {"reference": [[0, 0], [1, 0]]}},
])
def test_invalid_scenarios_raise(patch):
    doc = json.loads(json.dumps(EMPTY))
    for k, v in patch.items():
        if v is None:
            doc.pop(k)
        else:
            doc[k] = v
    with pytest.raises(ScenarioError):
        parse(doc)


def test_load_errors(tmp_path):
    with pytest.raises(ScenarioError):
        load("no_such_scenario")
    bad = tmp_path / "bad.yaml"
    bad.write_text("road: [unclosed")
    with pytest.raises(ScenarioError):
        load(bad)
    bad.write_text("- just\n- a list\n")
    with pytest.raises(ScenarioError):
        load(bad)


@pytest.fixture(scope="module")
def empty_run():
    sc = load("empty")
    return sc, run(sc, "mpc", keep_plans=True, keep_constraints=True)


def test_empty_road_completes_near_centerline(empty_run):
    _, r = empty_run
    assert r.outcome.kind == COMPLETED and r.collisions == 0
    assert np.abs(r.column("d")).max() < 0.05
    assert np.all(np.diff(r.column("s_global")) >= 0)
    assert np.all(np.diff(r.column("t")) > 0)
    assert list(r.column("tick")) == list(range(len(r.rows)))


def test_first_plan_interval_is_applied(empty_run):
    sc, r = empty_run
    dt = sc.planner.horizon.dt
    for a, b in zip(r.rows[:-1], r.rows[1:]):
        ego = np.array([a["x"], a["y"], a["heading"], a["kappa"], a["v"]])
        nxt = _advance_ego(ego, np.array([a["u1"], a["u2"]]), dt, np.array([a["u1_end"], a["u2_end"]]))
        assert np.allclose(nxt, [b["x"], b["y"], b["heading"], b["kappa"], b["v"]], atol=1e-12)


def test_runs_are_deterministic(empty_run):
    sc, r = empty_run
    again = run(sc, "mpc", keep_plans=True, keep_constraints=True)
    strip = [{k: v for k, v in row.items() if k != "wall_ms"} for row in r.rows]
    assert strip == [{k: v for k, v in row.items() if k != "wall_ms"} for row in again.rows]
    assert all(np.array_equal(a[1], b[1]) for a, b in zip(r.plans, again.plans))


def test_emit_csv_and_json(empty_run, tmp_path):
    _, r = empty_run
    files = emit(r, tmp_path, "csv", aggregate=True)
    with files[0].open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == list(TRACE_COLUMNS) and len(rows) == len(r.rows) + 1
    with files[1].open() as fh:
        cons = list(csv.reader(fh))[1:]
    assert sorted({int(c[0]) for c in cons}) == list(range(len(r.rows)))
    with files[2].open() as fh:
        plans = list(csv.reader(fh))[1:]
    assert len(plans) == len(r.rows) * 26
    jfiles = emit(r, tmp_path / "j", "json")
    doc = json.loads(jfiles[0].read_text())
    assert len(doc["rows"]) == len(r.rows) and doc["outcome"] == COMPLETED
    with pytest.raises(ValueError):
        emit(r, tmp_path, "xml")
    table = timing_table([r], tmp_path)
    with table.open() as fh:
        t = list(csv.DictReader(fh))
    assert t[0]["variant"] == "mpc" and int(t[0]["ticks"]) == len(r.rows)


def test_tick_limit_gives_incomplete():
    r = run(load("empty"), "mpc", ticks=3)
    assert r.outcome.kind == "Incomplete" and len(r.rows) == 3


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["list"]) == EXIT_OK
    assert "scenario1" in capsys.readouterr().out
    assert main(["run", "empty", "--out", str(tmp_path), "--ticks", "3", "--table"]) == EXIT_OK
    assert (tmp_path / "mpc_trace.csv").exists() and (tmp_path / "table.csv").exists()
    assert main(["run", "no_such", "--out", str(tmp_path)]) == EXIT_SCENARIO
    assert main(["run", "empty", "--out", str(tmp_path), "--iter-cap", "-1"]) == EXIT_SCENARIO
    assert main(["run", "empty", "--out", str(tmp_path), "--homotopy-z", "0"]) == EXIT_SCENARIO
    # heading out of the lane with no solver iterations: the guess is unsafe
    doc = json.loads(json.dumps(EMPTY))
    doc["ego"].update({"d": 1.5, "heading": 0.4})
    f = tmp_path / "drift.yaml"
    f.write_text(yaml.safe_dump(doc))
    assert main(["run", str(f), "--out", str(tmp_path / "d"), "--iter-cap", "0", "--ticks", "3"]) == EXIT_FAILED
    out = capsys.readouterr().out
    assert FAILED in out
