"""Acceptance criteria, one test per criterion.

Each check returns (passed, detail). The pytest hook in conftest.py prints
one PASS/FAIL line per criterion at the end of the session; running this
file directly prints the same lines.
"""
from __future__ import annotations

import statistics
import subprocess
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

from crowdnav.config import load_scenario
from crowdnav.core import (GridSpec, OccupancyGrid, PlanarState, PredictionStack,
                           TrackingErrorBound, teb_box_at, world_to_cell)
from crowdnav.experiments import confidence_pair
from crowdnav.planning import EdgeTable, NoPath, plan, state_safe
from crowdnav.prediction import (IntentPosterior, QFunction, boltzmann,
                                 collision_prob_joint_oracle, collision_prob_marginal,
                                 independent_joint, softmax, update_posterior)
from crowdnav.sim import run_scenario
from crowdnav.tracking import TrackerParams, derive_teb, validate_teb

sys.path.insert(0, str(Path(__file__).parent))
from oracles import dijkstra_arrival, random_instance  # noqa: E402

RESULTS: dict = {}


def _record(name, ok, detail):
    RESULTS[name] = (ok, detail)
    return ok, detail


# 1 -------------------------------------------------------------------------------

def check_oracle_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(20240601)
    worst = 0.0
    count = 0
    for n in range(1, 7):
        spec = GridSpec((0.0, 0.0), 1.0, n, n)
        for k in range(1, 4):
            for _ in range(8):
                grids = []
                for _ in range(k):
                    m = rng.random((n, n))
                    grids.append(OccupancyGrid(spec, m / m.sum()))
                s = PlanarState(*rng.uniform(0, n, 2))
                teb = TrackingErrorBound(*rng.uniform(0.05, n / 2 + 0.5, 2))
                stacks = [PredictionStack(0.0, 1.0, (g,)) for g in grids]
                joint = collision_prob_joint_oracle(s, teb, independent_joint(grids), spec)
                worst = max(worst, abs(joint - collision_prob_marginal(s, teb, stacks, 1)))
                count += 1
    bound_fail = 0
    for _ in range(1000):
        n, k = int(rng.integers(1, 7)), int(rng.integers(1, 4))
        spec = GridSpec((0.0, 0.0), 1.0, n, n)
        grids = []
        for _ in range(k):
            m = rng.random((n, n)) * (rng.random((n, n)) < 0.5)
            m[int(rng.integers(n)), int(rng.integers(n))] += 1e-3
            grids.append(OccupancyGrid(spec, m / m.sum()))
        s = PlanarState(*rng.uniform(0, n, 2))
        teb = TrackingErrorBound(*rng.uniform(0.05, n / 2 + 0.5, 2))
        ps = [g.mass_in_box(teb_box_at(s, teb)) for g in grids]
        p = collision_prob_marginal(s, teb, [PredictionStack(0.0, 1.0, (g,)) for g in grids], 1)
        if not (max(ps) - 1e-12 <= p <= min(1.0, sum(ps)) + 1e-12):
            bound_fail += 1
    dt = time.perf_counter() - t0
    ok = worst <= 1e-12 and bound_fail == 0 and dt < 10
    return _record("1 oracle equivalence", ok,
                   f"{count} independent joints, max |joint-marginal|={worst:.2e}; "
                   f"bound failures {bound_fail}/1000; {dt:.1f}s (<10s)")


# 2 -------------------------------------------------------------------------------

def check_boltzmann_posterior():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    uni = 0.0
    for _ in range(200):
        q = QFunction(tuple(rng.uniform(-10, 10, 2)), 0.25, 1.0)
        uni = max(uni, float(np.abs(boltzmann(rng.uniform(-10, 10, 2), 0.0, q) - 1 / 9).max()))
    shift = 0.0
    for _ in range(2000):
        z = rng.uniform(-50, 50, 9)
        b, c = rng.uniform(0, 50), rng.uniform(-1e3, 1e3)
        shift = max(shift, float(np.abs(softmax(b * z) - softmax(b * (z + c))).max()))
    post = IntentPosterior.uniform(rng.uniform(-10, 10, (4, 2)))
    norm = 0.0
    for _ in range(10_000):
        post = update_posterior(post, rng.uniform(-10, 10, 2), int(rng.integers(9)))
        norm = max(norm, abs(float(post.weights.sum()) - 1.0))
    fixed = IntentPosterior.uniform(rng.uniform(-10, 10, (3, 2)), betas=(0.0,))
    cur = fixed
    for _ in range(100):
        cur = update_posterior(cur, rng.uniform(-10, 10, 2), int(rng.integers(9)))
    fp = float(np.abs(cur.weights - fixed.weights).max())
    dt = time.perf_counter() - t0
    ok = uni <= 1e-12 and shift <= 1e-12 and norm <= 1e-9 and fp == 0.0 and dt < 5
    return _record("2 Boltzmann/posterior", ok,
                   f"beta=0 dev {uni:.1e}, shift dev {shift:.1e}, norm drift {norm:.1e} after 1e4 "
                   f"updates, beta=0 fixed-point dev {fp:.1e}; {dt:.1f}s (<5s)")


# 3 -------------------------------------------------------------------------------

def check_confidence_adaptation():
    t0 = time.perf_counter()
    pairs = [confidence_pair(seed) for seed in range(20)]
    gaps = [p["gap"] for p in pairs]
    dt = time.perf_counter() - t0
    ok = min(gaps) >= 0.5 and dt < 30
    return _record("3 confidence adaptation", ok,
                   f"entropy gap deviating-conforming over 20 seeds: min {min(gaps):.3f}, "
                   f"mean {statistics.fmean(gaps):.3f} nats (>=0.5); {dt:.1f}s (<30s)")


# 4 -------------------------------------------------------------------------------

def check_planner_optimality():
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    done = mismatch = solved = 0
    while done < 200:
        start, goal, teb, stack, grid = random_instance(rng, n=12, steps=40)
        if not state_safe(start, teb, stack):
            continue
        table = EdgeTable(grid, teb, stack, start.t)
        expect = dijkstra_arrival(world_to_cell(grid.spec, start.xy),
                                  world_to_cell(grid.spec, goal), table, grid.max_steps)
        try:
            traj = plan(start, goal, teb, stack, grid, table)
            got = round((traj.last.t - start.t) / grid.dt_plan)
            solved += 1
        except NoPath:
            got = None
        mismatch += got != expect
        done += 1
    dt = time.perf_counter() - t0
    ok = mismatch == 0 and dt < 60
    return _record("4 planner optimality", ok,
                   f"{done} random 12x12x40 graphs ({solved} solvable), {mismatch} mismatches "
                   f"vs Dijkstra; {dt:.1f}s (<60s)")


# 5 -------------------------------------------------------------------------------

def check_stp_safety():
    t0 = time.perf_counter()
    rows = []
    medians = []
    for name in ("symmetric_crossing", "default"):
        for seed in range(10):
            m = run_scenario(load_scenario(name, {"seed": seed})).metrics
            rows.append((name, seed, m.tube_violations, m.pth_violations, m.complete))
            medians.append(statistics.median(m.plan_times))
    bad = [r for r in rows if r[2] or r[3] or not r[4]]
    med = statistics.median(medians)
    dt = time.perf_counter() - t0
    soft = "met" if med < 1.0 else "NOT met (non-failing)"
    return _record("5 STP safety", not bad,
                   f"{len(rows)} runs, {len(bad)} with tube/P_th violations or timeouts; "
                   f"median plan time {med * 1e3:.0f} ms, soft bound <1s {soft}; {dt:.0f}s")


# 6 -------------------------------------------------------------------------------

def check_tracking_containment():
    t0 = time.perf_counter()
    params = TrackerParams()
    steps = 10_000
    duration = steps * params.dt_sim
    teb = derive_teb(params, duration)
    greedy = validate_teb(params, teb, duration, "greedy")
    rand = validate_teb(params, teb, duration, "random", seed=0)
    shrunk = validate_teb(params, teb.scaled(0.8), duration, "greedy")
    dt = time.perf_counter() - t0
    ok = (greedy.violations == 0 and rand.violations == 0 and greedy.steps == steps
          and shrunk.violations > 0 and dt < 10)
    return _record("6 tracking containment", ok,
                   f"derived TEB ({teb.half_width_x:.4f}, {teb.half_width_y:.4f}); violations "
                   f"greedy {greedy.violations}, random {rand.violations} over {steps} steps; "
                   f"80% box greedy violations {shrunk.violations}; {dt:.1f}s (<10s)")


# 7 -------------------------------------------------------------------------------

def check_determinism():
    t0 = time.perf_counter()
    with tempfile.TemporaryDirectory() as tmp:
        traces = []
        for k in range(2):
            out = Path(tmp) / str(k)
            r = subprocess.run([sys.executable, "-m", "crowdnav.cli", "run", "--scenario", "default",
                                "--seed", "42", "--out", str(out)], capture_output=True, text=True)
            if r.returncode not in (0, 2):
                return _record("7 determinism", False, f"run failed: {r.stderr.strip()}")
            traces.append((out / "trace.jsonl").read_bytes())
    same = traces[0] == traces[1]
    dt = time.perf_counter() - t0
    return _record("7 determinism", same,
                   f"two `run --scenario default --seed 42` traces "
                   f"{'byte-identical' if same else 'DIFFER'} ({len(traces[0])} bytes); {dt:.0f}s")


CHECKS = [check_oracle_equivalence, check_boltzmann_posterior, check_confidence_adaptation,
          check_planner_optimality, check_stp_safety, check_tracking_containment,
          check_determinism]


@pytest.mark.slow
@pytest.mark.parametrize("check", CHECKS, ids=lambda f: f.__name__.replace("check_", ""))
def test_acceptance(check):
    ok, detail = check()
    assert ok, detail


if __name__ == "__main__":
    failed = 0
    for check in CHECKS:
        ok, detail = check()
        failed += not ok
        print(f"{'PASS' if ok else 'FAIL'}  {detail}", flush=True)
    sys.exit(1 if failed else 0)
