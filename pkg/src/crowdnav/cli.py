"""Command-line entry point.

Exit codes: 0 success, 1 validation or usage error, 2 incomplete run.
"""
from __future__ import annotations

import argparse
import json
import sys
from typing import List, Optional

import numpy as np

from .config import ConfigError, load_scenario
from .core import GridSpec, OccupancyGrid, PlanarState, PredictionStack, TrackingErrorBound
from .prediction import (collision_prob_joint_oracle, collision_prob_marginal,
                         independent_joint)
from .sim import plan_bench, run_scenario
from .tracking import TrackerParams, derive_teb, validate_teb


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="crowdnav", description="Multi-robot navigation among predicted pedestrians")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="simulate a scenario and write trace + metrics")
    r.add_argument("--scenario", required=True, help="scenario JSON path or shipped name")
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--pth", type=float, default=None, help="override p_th")
    r.add_argument("--replan-period", type=float, default=None, help="seconds between rounds")
    r.add_argument("--workers", type=int, default=1, help="threads for per-human prediction")

    v = sub.add_parser("validate-teb", help="check a TEB against simulated worst-case tracking")
    v.add_argument("--params", required=True, help="JSON with tracker params and optional teb")

    o = sub.add_parser("oracle", help="brute-force cross-checks")
    osub = o.add_subparsers(dest="oracle", required=True, parser_class=_Parser)
    e = osub.add_parser("eq2-eq3", help="joint enumeration vs independent-marginal formula")
    e.add_argument("--grid", type=int, default=5)
    e.add_argument("--humans", type=int, default=3)
    e.add_argument("--instances", type=int, default=20)
    e.add_argument("--seed", type=int, default=0)

    b = sub.add_parser("plan-bench", help="planning-time statistics for a scenario")
    b.add_argument("--scenario", required=True)
    b.add_argument("--repeats", type=int, default=5)
    return p


def _cmd_run(args) -> int:
    overrides = {"p_th": args.pth, "replan_period": args.replan_period, "seed": args.seed}
    cfg = load_scenario(args.scenario, {k: v for k, v in overrides.items() if v is not None})
    res = run_scenario(cfg, out_dir=args.out, workers=args.workers)
    m = res.metrics
    print(json.dumps({"complete": m.complete, "arrival_times": m.arrival_times,
                      "metrics": str(res.metrics_path), "trace": str(res.trace_path)}))
    return 0 if m.complete else 2


def _cmd_validate_teb(args) -> int:
    with open(args.params) as f:
        d = json.load(f)
    known = set(TrackerParams.__dataclass_fields__)
    try:
        params = TrackerParams(**{k: v for k, v in d.items() if k in known})
    except (TypeError, ValueError) as exc:
        print(f"params: {exc}", file=sys.stderr)
        return 1
    duration = float(d.get("duration", 100.0))
    v_ref = float(d.get("v_ref", 1.0))
    period = float(d.get("switch_period", 1.5))
    derived = derive_teb(params, duration, v_ref, period)
    teb = TrackingErrorBound(*d["teb"]) if "teb" in d else derived
    reports = {pol: validate_teb(params, teb, duration, pol, int(d.get("seed", 0)), v_ref,
                                 period).to_dict()
               for pol in ("greedy", "random")}
    out = {"teb": [teb.half_width_x, teb.half_width_y],
           "derived_teb": [derived.half_width_x, derived.half_width_y],
           "reports": reports,
           "contained": all(r["contained"] for r in reports.values())}
    print(json.dumps(out, indent=2))
    return 0


def eq2_eq3_check(n: int, humans: int, instances: int = 20, seed: int = 0) -> float:
    """Largest |joint enumeration - marginal formula| over random independent instances."""
    rng = np.random.default_rng(seed)
    spec = GridSpec((0.0, 0.0), 1.0, n, n)
    worst = 0.0
    for _ in range(instances):
        grids = []
        for _ in range(humans):
            m = rng.random((n, n)) * (rng.random((n, n)) < 0.6)
            if m.sum() == 0:
                m[rng.integers(n), rng.integers(n)] = 1.0
            grids.append(OccupancyGrid(spec, m / m.sum()))
        s = PlanarState(*rng.uniform(0, n, 2))
        teb = TrackingErrorBound(*rng.uniform(0.1, n / 2, 2))
        stacks = [PredictionStack(0.0, 1.0, (g,)) for g in grids]
        marg = collision_prob_marginal(s, teb, stacks, 1)
        joint = collision_prob_joint_oracle(s, teb, independent_joint(grids), spec)
        worst = max(worst, abs(joint - marg))
    return worst


def _cmd_oracle(args) -> int:
    if args.grid < 1 or args.humans < 1:
        print("--grid and --humans must be positive", file=sys.stderr)
        return 1
    worst = eq2_eq3_check(args.grid, args.humans, args.instances, args.seed)
    ok = worst <= 1e-12
    print(json.dumps({"grid": args.grid, "humans": args.humans, "instances": args.instances,
                      "max_abs_discrepancy": worst, "pass": ok}))
    return 0 if ok else 1


def _cmd_plan_bench(args) -> int:
    cfg = load_scenario(args.scenario)
    print(json.dumps(plan_bench(cfg, args.repeats), indent=2))
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "validate-teb":
            return _cmd_validate_teb(args)
        if args.command == "oracle":
            return _cmd_oracle(args)
        if args.command == "plan-bench":
            return _cmd_plan_bench(args)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    return 1


if __name__ == "__main__":
    sys.exit(main())
