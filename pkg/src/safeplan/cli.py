"""Command line entry point: ``plan run <scenario> --variant ...``."""
from __future__ import annotations

import argparse
import dataclasses
import sys

from .errors import ScenarioError
from .mpc import VARIANTS
from .scenario import bundled, load
from .sim import FAILED, emit, run, timing_table

EXIT_OK = 0
EXIT_FAILED = 2
EXIT_SCENARIO = 3


def _parser():
    p = argparse.ArgumentParser(prog="plan", description="Frenet-frame NMPC scenario simulator.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate a scenario in closed loop")
    r.add_argument("scenario", help="scenario YAML file or bundled scenario name")
    r.add_argument("--variant", choices=VARIANTS + ("all",), default="mpc")
    r.add_argument("--out", default="out", help="output directory")
    r.add_argument("--ticks", type=int, default=None, help="override the scenario tick limit")
    r.add_argument("--seed", type=int, default=None,
                   help="accepted for interface stability; runs are deterministic")
    r.add_argument("--iter-cap", type=int, default=None, help="SQP iteration cap per solve")
    r.add_argument("--homotopy-z", type=int, default=None, help="number of homotopy steps")
    r.add_argument("--emit", choices=("csv", "json"), default="csv")
    r.add_argument("--aggregate", action="store_true", help="also write every planned trajectory")
    r.add_argument("--table", action="store_true", help="write a per-variant timing table")

    sub.add_parser("list", help="list bundled scenarios")
    return p


def _configure(sc, args):
    changes = {}
    if args.iter_cap is not None:
        changes["iter_cap"] = args.iter_cap
    if args.homotopy_z is not None:
        changes["homotopy_z"] = args.homotopy_z
    if changes:
        sc.planner = dataclasses.replace(sc.planner, **changes)
    return sc


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "list":
        print("\n".join(bundled()))
        return EXIT_OK
    if (args.iter_cap is not None and args.iter_cap < 0) or \
            (args.homotopy_z is not None and args.homotopy_z < 1):
        print("error: --iter-cap must be >= 0 and --homotopy-z >= 1", file=sys.stderr)
        return EXIT_SCENARIO
    try:
        sc = _configure(load(args.scenario), args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCENARIO

    variants = VARIANTS if args.variant == "all" else (args.variant,)
    results = []
    for v in variants:
        res = run(sc, v, ticks=args.ticks, keep_plans=args.aggregate, keep_constraints=True)
        emit(res, args.out, args.emit, args.aggregate)
        results.append(res)
        print(f"{v}: {res.outcome} ticks={len(res.rows)} collisions={res.collisions}")
    if args.table:
        timing_table(results, args.out)
    return EXIT_FAILED if any(r.outcome.kind == FAILED for r in results) else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
