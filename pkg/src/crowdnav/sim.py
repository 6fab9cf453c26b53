"""Scenario runner: sense, predict, replan and track on a fixed tick.

The tick loop is single-threaded; only per-human prediction may fan out to
a thread pool, and its results are merged in human order.
"""
from __future__ import annotations

import json
import logging
import math
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .config import ScenarioConfig, scenario_to_dict
from .core import (PlanarState, PredictionStack, RobotPhysicalState, Trajectory, cell_center,
                   teb_box_at, world_to_cell)
from .pedestrians import pedestrian_step
from .planning import PlannerGrid, max_collision_prob
from .prediction import IntentPosterior, infer_action, predict, prediction_entropy, update_posterior
from .stp import (PriorityOrder, RobotRequest, TrajectoryBus, replan_round, tube_conflicts,
                  tube_from)
from .trace import TraceWriter
from .tracking import (RelativeState, greedy_disturbance, reference_at, reference_velocity,
                       step_tracker, tracking_control)

log = logging.getLogger(__name__)

STREAMS = {"pedestrians": 0, "disturbances": 1, "tiebreaks": 2}


def named_rng(seed: int, name: str) -> np.random.Generator:
    """Independent generator per named sub-stream of one run seed."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(STREAMS[name],)))


def _stats(xs: Sequence[float]) -> dict:
    if not xs:
        return {"count": 0, "mean": None, "std": None, "median": None, "max": None}
    return {"count": len(xs), "mean": statistics.fmean(xs),
            "std": statistics.pstdev(xs), "median": statistics.median(xs), "max": max(xs)}


@dataclass
class RunMetrics:
    arrival_times: List[Optional[float]]
    min_tube_clearance: float = math.inf
    min_robot_human_distance: float = math.inf
    max_planned_collision_prob: float = 0.0
    containment_violations: int = 0
    tube_violations: int = 0
    pth_violations: int = 0
    blocked_events: int = 0
    rounds: int = 0
    complete: bool = False
    duration_s: float = 0.0
    plan_times: List[float] = field(default_factory=list, repr=False)
    prediction_times: List[float] = field(default_factory=list, repr=False)

    def snapshot(self) -> dict:
        """Deterministic part of the metrics (no wall-clock timings)."""
        d = asdict(self)
        d.pop("plan_times")
        d.pop("prediction_times")
        return d

    def to_dict(self) -> dict:
        d = self.snapshot()
        d["plan_time_s"] = _stats(self.plan_times)
        d["prediction_time_s"] = _stats(self.prediction_times)
        return d


@dataclass
class RunResult:
    metrics: RunMetrics
    trace_path: Optional[Path] = None
    metrics_path: Optional[Path] = None


def _box_gap(a, b) -> float:
    gx = max(a.xmin - b.xmax, b.xmin - a.xmax, 0.0)
    gy = max(a.ymin - b.ymax, b.ymin - a.ymax, 0.0)
    return math.hypot(gx, gy)


class Simulation:
    def __init__(self, cfg: ScenarioConfig, workers: int = 1):
        self.cfg = cfg
        self.workers = workers
        seed = cfg.sim.seed
        self.rng_ped = named_rng(seed, "pedestrians")
        self.rng_dist = named_rng(seed, "disturbances")
        pl = cfg.planner
        self.grid = PlannerGrid(cfg.planner_spec, pl.v_max_plan, pl.collision_check_step_m,
                                pl.horizon_s)
        self.pspec = cfg.prediction_spec
        spec = self.grid.spec
        # starts and goals live on planner cell centers
        self.starts = [cell_center(spec, world_to_cell(spec, r.start)) for r in cfg.robots]
        self.goals = [cell_center(spec, world_to_cell(spec, r.goal)) for r in cfg.robots]
        self.tebs = [r.teb for r in cfg.robots]
        self.robots = [RobotPhysicalState(x, y) for x, y in self.starts]
        self.trajs = [Trajectory((PlanarState(x, y, 0.0),)) for x, y in self.starts]
        self.order = PriorityOrder.from_priorities([r.priority for r in cfg.robots])
        self.bus = TrajectoryBus()
        pr = cfg.prediction
        self.action_speed = pr.resolution / pr.dt
        self.humans = np.array([h.start for h in cfg.humans], float).reshape(-1, 2)
        self.human_goals = np.array([h.true_goal for h in cfg.humans], float).reshape(-1, 2)
        self.posteriors = [IntentPosterior.uniform(h.candidate_goals, pr.beta_grid, pr.dt,
                                                   self.action_speed) for h in cfg.humans]
        self.stacks: List[PredictionStack] = []
        w = cfg.world
        self._lo = np.array(w.origin, float)
        self._hi = self._lo + np.array([w.width, w.height]) - 1e-6
        self.metrics = RunMetrics(arrival_times=[None] * len(cfg.robots))
        self.round_index = 0

    # -- sensing and prediction ------------------------------------------

    def _predict_one(self, i: int, prev, t: float):
        t0 = time.perf_counter()
        post = self.posteriors[i]
        curr = self.humans[i]
        if prev is not None:
            dt = self.cfg.sim.dt
            a = infer_action(PlanarState(prev[0], prev[1], t - dt), PlanarState(curr[0], curr[1], t),
                             dt, self.action_speed)
            post = update_posterior(post, prev, a)
        stack = predict(post, curr, self.cfg.prediction.horizon_steps, self.cfg.prediction.dt,
                        self.pspec, t0=t)
        return post, stack, time.perf_counter() - t0

    def sense_and_predict(self, prev_humans, t: float):
        n = len(self.humans)
        prevs = [None] * n if prev_humans is None else list(prev_humans)
        if self.workers > 1 and n > 1:
            with ThreadPoolExecutor(self.workers) as ex:
                out = list(ex.map(lambda i: self._predict_one(i, prevs[i], t), range(n)))
        else:
            out = [self._predict_one(i, prevs[i], t) for i in range(n)]
        self.posteriors = [o[0] for o in out]
        self.stacks = [o[1] for o in out]
        self.metrics.prediction_times.extend(o[2] for o in out)

    # -- planning --------------------------------------------------------

    def _parked(self, i: int, t_s: float) -> bool:
        last = self.trajs[i].last
        gx, gy = self.goals[i]
        return abs(last.x - gx) < 1e-9 and abs(last.y - gy) < 1e-9 and t_s >= last.t

    def replan(self, t: float) -> dict:
        cfg = self.cfg
        dtp = self.grid.dt_plan
        t_s = math.ceil(t / dtp - 1e-9) * dtp
        static = list(cfg.static_obstacles)
        parked = [i for i in range(len(self.robots)) if self._parked(i, t_s)]
        for i in parked:
            static.append(teb_box_at(self.goals[i], self.tebs[i], cfg.keepout.robot_robot_margin))
        requests = []
        for i in range(len(self.robots)):
            if i in parked:
                continue
            ref = reference_at(self.trajs[i], t_s)
            requests.append(RobotRequest(i, PlanarState(ref.x, ref.y, t_s), self.goals[i],
                                         self.tebs[i]))
        res = replan_round(requests, self.order.ordering, static, self.stacks, self.grid,
                           cfg.p_th, cfg.keepout, self.bus, self.round_index)
        m = self.metrics
        m.rounds += 1
        m.blocked_events += len(res.blocked)
        m.plan_times.extend(res.plan_times[i] for i in sorted(res.plan_times))
        step = cfg.planner.collision_check_step_m
        tubes = {}
        for msg in res.messages:
            i = msg.robot_id
            tubes[i] = tube_from(msg.trajectory, msg.teb, cfg.keepout.robot_robot_margin)
        # post-hoc re-check of every published trajectory against this round
        published = [msg.robot_id for msg in res.messages]
        for k, j in enumerate(published):
            traj = res.trajectories[j]
            for i in published[:k]:
                m.tube_violations += tube_conflicts(traj, self.tebs[j], tubes[i], step)
            if j not in res.blocked:
                p = max_collision_prob(traj, self.tebs[j], res.stacks[j], step)
                m.max_planned_collision_prob = max(m.max_planned_collision_prob, p)
                if p > cfg.p_th:
                    m.pth_violations += 1
        for i, traj in res.trajectories.items():
            if t_s > t + 1e-12:
                # keep the committed motion between now and the plan start
                now_ref = reference_at(self.trajs[i], t)
                traj = Trajectory((PlanarState(now_ref.x, now_ref.y, t),) + traj.samples)
            self.trajs[i] = traj
        info = {
            "index": self.round_index,
            "plan_start": t_s,
            "messages": [msg.to_dict() for msg in res.messages],
            "tubes": {str(i): tubes[i].to_list() for i in published},
            "blocked": {str(i): r for i, r in sorted(res.blocked.items())},
            "parked": parked,
        }
        self.round_index += 1
        return info

    # -- physical motion -------------------------------------------------

    def advance_robots(self, t: float):
        cfg = self.cfg
        p = cfg.tracker
        n_sub = max(1, int(round(cfg.sim.dt / p.dt_sim)))
        h = cfg.sim.dt / n_sub
        greedy = cfg.sim.disturbance == "greedy"
        for i, traj in enumerate(self.trajs):
            robot = self.robots[i]
            teb = self.tebs[i]
            for n in range(n_sub):
                tau = t + n * h
                ref = reference_at(traj, tau)
                rv = reference_velocity(traj, tau)
                rel = RelativeState(robot.x - ref.x, robot.y - ref.y, robot.vx - rv[0],
                                    robot.vy - rv[1])
                cmd = tracking_control(rel, p)
                if greedy:
                    dist = greedy_disturbance(rel, p)
                else:
                    dist = tuple(self.rng_dist.uniform(-p.d_max, p.d_max, 2))
                robot = step_tracker(robot, cmd, dist, p)
                nref = reference_at(traj, tau + h)
                if (abs(robot.x - nref.x) > teb.half_width_x
                        or abs(robot.y - nref.y) > teb.half_width_y):
                    self.metrics.containment_violations += 1
            self.robots[i] = robot

    def advance_humans(self):
        if not len(self.humans):
            return
        robots = np.array([r.xy for r in self.robots], float)
        new = pedestrian_step(self.humans, robots, self.human_goals, self.cfg.pedestrians,
                              self.cfg.sim.dt, self.rng_ped)
        self.humans = np.clip(new, self._lo, self._hi)

    # -- bookkeeping -----------------------------------------------------

    def update_distance_metrics(self, t: float):
        m = self.metrics
        refs = [reference_at(tr, t) for tr in self.trajs]
        boxes = [teb_box_at(r, teb) for r, teb in zip(refs, self.tebs)]
        for i in range(len(boxes)):
            for j in range(i + 1, len(boxes)):
                m.min_tube_clearance = min(m.min_tube_clearance, _box_gap(boxes[i], boxes[j]))
        for r in self.robots:
            for hx, hy in self.humans:
                m.min_robot_human_distance = min(m.min_robot_human_distance,
                                                 math.hypot(r.x - hx, r.y - hy))
        tol = self.cfg.sim.goal_tolerance
        for i, r in enumerate(self.robots):
            if m.arrival_times[i] is None:
                gx, gy = self.goals[i]
                if math.hypot(r.x - gx, r.y - gy) <= tol:
                    m.arrival_times[i] = t

    def all_arrived(self) -> bool:
        tol = self.cfg.sim.goal_tolerance
        return all(math.hypot(r.x - g[0], r.y - g[1]) <= tol for r, g in zip(self.robots, self.goals))

    def tick_record(self, tick: int, t: float, round_info) -> dict:
        h = self.cfg.prediction.horizon_steps
        return {
            "record": "tick",
            "tick": tick,
            "t": t,
            "robots": [[r.x, r.y, r.vx, r.vy] for r in self.robots],
            "references": [list(reference_at(tr, t).xy) for tr in self.trajs],
            "humans": self.humans.tolist(),
            "posteriors": [p.summary() for p in self.posteriors],
            "entropy": [prediction_entropy(s, h) for s in self.stacks],
            "round": round_info,
            "metrics": self.metrics.snapshot(),
        }

    def run(self, writer: Optional[TraceWriter] = None) -> RunMetrics:
        cfg = self.cfg
        dt = cfg.sim.dt
        period = cfg.replan_period
        next_round = 0.0
        prev_humans = None
        tick = 0
        while True:
            t = tick * dt
            self.sense_and_predict(prev_humans, t)
            round_info = None
            if t >= next_round - 1e-9:
                round_info = self.replan(t)
                while next_round <= t + 1e-9:
                    next_round += period
            self.update_distance_metrics(t)
            done = self.all_arrived()
            self.metrics.complete = done
            self.metrics.duration_s = t
            if writer is not None:
                writer.write(self.tick_record(tick, t, round_info))
            if done or t >= cfg.sim.max_duration_s - 1e-9:
                break
            prev_humans = self.humans.copy()
            self.advance_robots(t)
            self.advance_humans()
            tick += 1
        return self.metrics


def run_scenario(cfg: ScenarioConfig, out_dir=None, workers: int = 1) -> RunResult:
    """Run one scenario; with ``out_dir`` also write trace.jsonl and metrics.json."""
    sim = Simulation(cfg, workers=workers)
    if out_dir is None:
        return RunResult(sim.run())
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trace_path = out / "trace.jsonl"
    metrics_path = out / "metrics.json"
    with open(trace_path, "w", newline="\n") as f:
        writer = TraceWriter(f)
        writer.header(scenario=scenario_to_dict(cfg), seed=cfg.sim.seed)
        metrics = sim.run(writer)
    with open(metrics_path, "w") as f:
        json.dump(metrics.to_dict(), f, indent=2)
    return RunResult(metrics, trace_path, metrics_path)


def plan_bench(cfg: ScenarioConfig, repeats: int = 5) -> dict:
    """Time the first replan round of a scenario ``repeats`` times."""
    times: Dict[int, List[float]] = {i: [] for i in range(len(cfg.robots))}
    blocked = 0
    for _ in range(repeats):
        sim = Simulation(cfg)
        sim.sense_and_predict(None, 0.0)
        info = sim.replan(0.0)
        blocked += len(info["blocked"])
        for i, v in zip(sorted(times), sim.metrics.plan_times):
            times[i].append(v)
    all_t = [v for vs in times.values() for v in vs]
    return {"repeats": repeats, "blocked": blocked,
            "per_robot": {str(i): _stats(v) for i, v in times.items()},
            "overall": _stats(all_t)}
