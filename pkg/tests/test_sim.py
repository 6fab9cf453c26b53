import json
import math
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crowdnav.cli import main
from crowdnav.config import (ConfigError, load_scenario, scenario_from_dict, scenario_to_dict)
from crowdnav.core import Box, TrackingErrorBound, Trajectory
from crowdnav.pedestrians import PedestrianParams, pedestrian_step, pedestrian_velocities
from crowdnav.planning import densify, static_clear
from crowdnav.sim import named_rng, run_scenario
from crowdnav.stp import TimeVaryingTube, TubeSlice, tube_conflicts
from crowdnav.trace import dumps, read_trace

NOJIT = PedestrianParams(k_attract=0.05, jitter=0.0)


# -- pedestrians ------------------------------------------------------------------

def test_lone_pedestrian_heads_to_goal():
    v = pedestrian_velocities([(0, 0)], [], [(10, 0)], NOJIT, np.random.default_rng(0))[0]
    assert v[1] == 0.0
    assert v[0] == pytest.approx(min(0.05 * 10, NOJIT.v_max_ped))
    fast = PedestrianParams(k_attract=0.5, jitter=0.0)
    v = pedestrian_velocities([(0, 0)], [], [(10, 0)], fast, np.random.default_rng(0))[0]
    assert v[0] == pytest.approx(1.0)


def test_pedestrian_at_goal_is_still():
    v = pedestrian_velocities([(3, 4)], [], [(3, 4)], NOJIT, np.random.default_rng(0))
    np.testing.assert_array_equal(v, [[0.0, 0.0]])


def test_head_on_repulsion_is_antisymmetric():
    p = PedestrianParams(k_attract=1e-9, k_repulse=0.1, jitter=0.0, v_max_ped=100.0)
    humans = [(-0.5, 0.0), (0.5, 0.0)]
    v = pedestrian_velocities(humans, [], humans, p, np.random.default_rng(0))
    np.testing.assert_allclose(v[0], -v[1], atol=1e-12)
    assert v[0][0] < 0 and v[0][1] == 0.0
    assert v[0][0] == pytest.approx(-0.1 / 1.0 ** 2)


def test_robots_repel_pedestrians():
    p = PedestrianParams(k_attract=1e-9, jitter=0.0)
    v = pedestrian_velocities([(0.0, 0.0)], [(0.0, 1.0)], [(0.0, 0.0)], p, np.random.default_rng(0))
    assert v[0][1] < 0


def test_coincident_agents_seeded_direction():
    p = PedestrianParams(jitter=0.0)
    a = pedestrian_velocities([(1, 1), (1, 1)], [], [(1, 1), (1, 1)], p, np.random.default_rng(4))
    b = pedestrian_velocities([(1, 1), (1, 1)], [], [(1, 1), (1, 1)], p, np.random.default_rng(4))
    np.testing.assert_array_equal(a, b)
    assert np.all(np.isfinite(a)) and np.all(np.hypot(a[:, 0], a[:, 1]) > 0)


@settings(max_examples=50)
@given(st.integers(1, 8), st.integers(0, 3), st.integers(0, 2**31 - 1))
def test_pedestrian_speed_clamped(n, m, seed):
    rng = np.random.default_rng(seed)
    p = PedestrianParams()
    h = rng.uniform(0, 5, (n, 2))
    new = pedestrian_step(h, rng.uniform(0, 5, (m, 2)), rng.uniform(-20, 20, (n, 2)), p, 0.25, rng)
    assert np.all(np.hypot(*(new - h).T) / 0.25 <= p.v_max_ped + 1e-9)


@given(st.floats(-20, 20), st.floats(-20, 20), st.floats(-20, 20), st.floats(-20, 20))
def test_distance_to_goal_non_increasing_without_neighbours(x, y, gx, gy):
    p = PedestrianParams(jitter=0.0)
    h = np.array([[x, y]])
    d0 = math.dist((x, y), (gx, gy))
    for _ in range(20):
        h = pedestrian_step(h, np.empty((0, 2)), [(gx, gy)], p, 0.25, np.random.default_rng(0))
        d1 = math.dist(h[0], (gx, gy))
        assert d1 <= d0 + 1e-12
        d0 = d1


def test_named_streams_are_independent():
    a = named_rng(7, "pedestrians").random(4)
    b = named_rng(7, "disturbances").random(4)
    assert not np.allclose(a, b)
    np.testing.assert_array_equal(a, named_rng(7, "pedestrians").random(4))


# -- config -----------------------------------------------------------------------

def _degenerate_dict():
    return scenario_to_dict(load_scenario("degenerate"))


def test_config_round_trip():
    cfg = load_scenario("default")
    assert scenario_from_dict(scenario_to_dict(cfg), name=cfg.name) == cfg


def test_config_lists_every_error():
    d = _degenerate_dict()
    d["p_th"] = 1.5
    d["robots"][0]["priority"] = 3
    d["robots"][0]["goal"] = [50.0, 50.0]
    d["bogus"] = 1
    with pytest.raises(ConfigError) as e:
        scenario_from_dict(d)
    text = str(e.value)
    for field in ("p_th", "priority", "robots[0].goal", "bogus"):
        assert field in text
    assert len(e.value.errors) == 4


def test_unmodeled_flag_required_for_foreign_goal():
    d = scenario_to_dict(load_scenario("crossing_humans"))
    d["humans"][0]["true_goal"] = [1.0, 1.0]
    with pytest.raises(ConfigError, match="true_goal"):
        scenario_from_dict(d)
    d["humans"][0]["unmodeled"] = True
    scenario_from_dict(d)


def test_shipped_defaults_match_reference_parameters():
    cfg = load_scenario("default")
    assert (len(cfg.robots), len(cfg.humans)) == (5, 10)
    assert cfg.prediction.horizon_s == 2.0 and cfg.prediction.resolution == 0.25
    assert cfg.planner.resolution == 1.5 and cfg.planner.collision_check_step_m == 0.1
    assert cfg.p_th == 0.05


# -- trace ------------------------------------------------------------------------

def test_trace_float_format():
    assert dumps({"a": 0.1, "b": [1, math.inf, None, True]}) == \
        '{"a":0.10000000000000001,"b":[1,Infinity,null,true]}'
    assert json.loads(dumps(0.1)) == 0.1


# -- end-to-end runs -----------------------------------------------------------------

def test_degenerate_run(tmp_path):
    res = run_scenario(load_scenario("degenerate"), tmp_path)
    m = res.metrics
    assert m.complete and m.arrival_times[0] is not None
    assert m.min_robot_human_distance == math.inf
    assert m.min_tube_clearance == math.inf
    assert m.max_planned_collision_prob == 0.0
    saved = json.loads(res.metrics_path.read_text())
    assert saved["complete"] and saved["min_robot_human_distance"] == math.inf
    records = read_trace(res.trace_path)
    assert records[0]["record"] == "header"
    ts = [r["t"] for r in records[1:]]
    assert ts == sorted(ts) and len(set(ts)) == len(ts)


def test_crossing_humans_entropy_peaks_in_interaction(tmp_path):
    cfg = load_scenario("crossing_humans")
    res = run_scenario(cfg, tmp_path)
    ticks = read_trace(res.trace_path)[1:]
    ent = np.array([np.mean(r["entropy"]) for r in ticks])
    dist = np.array([math.dist(*r["humans"]) for r in ticks])
    inter = np.flatnonzero(dist < cfg.pedestrians.repulse_radius)
    assert inter.size
    a, b = inter[0], inter[-1]
    assert ent[a:b + 1].max() > ent[:a].mean()
    assert res.metrics.complete


def _recheck_trace(records, cfg):
    """Re-derive tube disjointness and static clearance from a trace alone."""
    conflicts = static_hits = 0
    for r in records[1:]:
        rnd = r["round"]
        if rnd is None:
            continue
        published = []
        for msg in rnd["messages"]:
            traj = Trajectory.from_list(msg["trajectory"])
            teb = TrackingErrorBound(*msg["teb"])
            for other in published:
                rows = rnd["tubes"][str(other)]
                tube = TimeVaryingTube(tuple(TubeSlice(a, b, Box(*box)) for a, b, *box in rows))
                conflicts += tube_conflicts(traj, teb, tube)
            xs, ys, _ = densify(traj, 0.1)
            static_hits += int((~static_clear(xs, ys, teb, cfg.static_obstacles)).sum())
            published.append(msg["robot_id"])
    return conflicts, static_hits


def test_trace_recheck_crossing(tmp_path):
    cfg = load_scenario("crossing_humans")
    res = run_scenario(cfg, tmp_path)
    assert _recheck_trace(read_trace(res.trace_path), cfg) == (0, 0)
    assert res.metrics.tube_violations == 0 and res.metrics.pth_violations == 0


def test_trace_deterministic_with_parallel_prediction(tmp_path):
    cfg = load_scenario("crossing_humans", {"seed": 3})
    a = run_scenario(cfg, tmp_path / "a", workers=1)
    b = run_scenario(cfg, tmp_path / "b", workers=4)
    assert a.trace_path.read_bytes() == b.trace_path.read_bytes()


def test_replan_period_override(tmp_path):
    cfg = load_scenario("degenerate", {"replan_period": 0.5})
    res = run_scenario(cfg, tmp_path)
    assert res.metrics.complete
    rounds = [r for r in read_trace(res.trace_path)[1:] if r["round"] is not None]
    assert len(rounds) == res.metrics.rounds
    assert rounds[1]["t"] == 0.5


# -- CLI ------------------------------------------------------------------------------

def test_cli_run_degenerate(tmp_path, capsys):
    assert main(["run", "--scenario", "degenerate", "--seed", "1", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "metrics.json").exists() and (tmp_path / "trace.jsonl").exists()


def test_cli_bad_pth(tmp_path, capsys):
    code = main(["run", "--scenario", "degenerate", "--pth", "1.5", "--out", str(tmp_path)])
    assert code == 1
    assert "p_th" in capsys.readouterr().err


def test_cli_incomplete_run(tmp_path):
    d = _degenerate_dict()
    d["sim"]["max_duration_s"] = 1.0
    p = tmp_path / "short.json"
    p.write_text(json.dumps(d))
    assert main(["run", "--scenario", str(p), "--out", str(tmp_path / "o")]) == 2


def test_cli_unknown_flag_exits_one():
    with pytest.raises(SystemExit) as e:
        main(["run", "--bogus"])
    assert e.value.code == 1


def test_cli_missing_scenario(tmp_path):
    assert main(["run", "--scenario", "nope", "--out", str(tmp_path)]) == 1


def test_cli_oracle(capsys):
    assert main(["oracle", "eq2-eq3", "--grid", "5", "--humans", "3"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["max_abs_discrepancy"] <= 1e-12


def test_cli_validate_teb(tmp_path, capsys):
    p = tmp_path / "params.json"
    p.write_text(json.dumps({"a_max": 6.0, "d_max": 0.5, "teb": [0.45, 0.45], "duration": 20.0}))
    assert main(["validate-teb", "--params", str(p)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["contained"] and set(out["reports"]) == {"greedy", "random"}


def test_cli_plan_bench(capsys):
    assert main(["plan-bench", "--scenario", "symmetric_crossing", "--repeats", "2"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["overall"]["count"] == 4


def test_console_script_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "crowdnav.cli", "oracle", "eq2-eq3", "--grid", "3",
                        "--humans", "2"], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
