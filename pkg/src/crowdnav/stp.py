"""Sequential trajectory planning in a fixed priority order.

Robots plan one after another. Each one publishes its TEB-inflated
trajectory as a time-sliced tube, and every lower-priority robot treats
those tubes as moving obstacles.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import (Box, KeepOutSpec, PlanarState, PredictionStack, TrackingErrorBound,
                   Trajectory, teb_box_at)
from .planning import (NoPath, ObstacleStack, PlannerGrid, StartUnsafe, _overlap, densify,
                       plan)


@dataclass(frozen=True)
class TubeSlice:
    t_start: float
    t_end: float
    box: Box


@dataclass(frozen=True, eq=False)
class TimeVaryingTube:
    slices: Tuple[TubeSlice, ...]

    def __post_init__(self):
        object.__setattr__(self, "slices", tuple(self.slices))
        if not self.slices:
            raise ValueError("tube needs at least one slice")
        for a, b in zip(self.slices, self.slices[1:]):
            if a.t_end != b.t_start or not a.t_start < a.t_end:
                raise ValueError("tube slices must be contiguous and time-ordered")

    @cached_property
    def start_array(self) -> np.ndarray:
        return np.array([s.t_start for s in self.slices])

    @cached_property
    def end_array(self) -> np.ndarray:
        return np.array([s.t_end for s in self.slices])

    @cached_property
    def box_array(self) -> np.ndarray:
        return np.array([s.box.as_tuple() for s in self.slices])

    def lookup(self, ts):
        """Index of the slice containing each time and whether one exists."""
        ts = np.asarray(ts, float)
        idx = np.searchsorted(self.start_array, ts, side="right") - 1
        active = (idx >= 0) & (ts < self.end_array[np.maximum(idx, 0)])
        return np.maximum(idx, 0), active

    def box_at(self, t: float) -> Optional[Box]:
        idx, active = self.lookup([t])
        return self.slices[int(idx[0])].box if active[0] else None

    def to_list(self):
        return [[s.t_start, s.t_end, *s.box.as_tuple()] for s in self.slices]


def tube_from(traj: Trajectory, teb: TrackingErrorBound, margin: float = 0.0) -> TimeVaryingTube:
    """One slice per segment (hull of the endpoint boxes) plus an open-ended final slice."""
    boxes = [teb_box_at(s, teb, margin) for s in traj.samples]
    slices = [TubeSlice(a.t, b.t, ba.hull(bb))
              for a, b, ba, bb in zip(traj.samples, traj.samples[1:], boxes, boxes[1:])]
    slices.append(TubeSlice(traj.last.t, math.inf, boxes[-1]))
    return TimeVaryingTube(tuple(slices))


def tube_conflicts(traj: Trajectory, teb: TrackingErrorBound, tube: TimeVaryingTube,
                   step: float = 0.1) -> int:
    """Number of densified trajectory samples whose TEB box hits the tube at that time."""
    xs, ys, ts = densify(traj, step)
    idx, active = tube.lookup(ts)
    hit = _overlap(xs, ys, teb.half_width_x, teb.half_width_y, tube.box_array[idx]) & active
    return int(hit.sum())


@dataclass(frozen=True)
class PriorityOrder:
    ordering: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "ordering", tuple(self.ordering))
        if sorted(self.ordering) != list(range(len(self.ordering))):
            raise ValueError(f"priority order {self.ordering} is not a permutation")

    @classmethod
    def from_priorities(cls, priorities: Sequence[int]) -> "PriorityOrder":
        """Robot ids sorted by priority value (1 plans first)."""
        return cls(tuple(sorted(range(len(priorities)), key=lambda i: priorities[i])))


class BusClosed(RuntimeError):
    pass


@dataclass(frozen=True)
class BusMessage:
    robot_id: int
    round: int
    trajectory: Trajectory
    teb: TrackingErrorBound

    def to_dict(self) -> dict:
        return {"robot_id": self.robot_id, "round": self.round,
                "trajectory": self.trajectory.as_list(),
                "teb": [self.teb.half_width_x, self.teb.half_width_y]}

    @classmethod
    def from_dict(cls, d) -> "BusMessage":
        return cls(int(d["robot_id"]), int(d["round"]), Trajectory.from_list(d["trajectory"]),
                   TrackingErrorBound(*d["teb"]))


class TrajectoryBus:
    """In-process stand-in for the network robots use to share plans.

    Holds the latest message per robot; a publish is visible to every later
    read, which gives the publish-before-read ordering a round needs.
    """

    def __init__(self):
        self._latest: Dict[int, BusMessage] = {}
        self.closed = False

    def publish(self, msg: BusMessage) -> BusMessage:
        if self.closed:
            raise BusClosed("trajectory bus is closed")
        self._latest[msg.robot_id] = msg
        return msg

    def read(self, robot_ids: Optional[Sequence[int]] = None,
             round: Optional[int] = None) -> List[BusMessage]:
        if self.closed:
            raise BusClosed("trajectory bus is closed")
        ids = sorted(self._latest) if robot_ids is None else robot_ids
        out = []
        for i in ids:
            m = self._latest.get(i)
            if m is not None and (round is None or m.round == round):
                out.append(m)
        return out

    def close(self):
        self.closed = True


def share_trajectory(bus: TrajectoryBus, robot_id: int, traj: Trajectory,
                     teb: TrackingErrorBound, round: int = 0) -> BusMessage:
    return bus.publish(BusMessage(robot_id, round, traj, teb))


@dataclass(frozen=True)
class RobotRequest:
    robot_id: int
    start: PlanarState
    goal: Tuple[float, float]
    teb: TrackingErrorBound


@dataclass
class RoundResult:
    trajectories: Dict[int, Trajectory] = field(default_factory=dict)
    blocked: Dict[int, str] = field(default_factory=dict)
    stacks: Dict[int, ObstacleStack] = field(default_factory=dict)
    plan_times: Dict[int, float] = field(default_factory=dict)
    messages: List[BusMessage] = field(default_factory=list)


def start_reservation(req: RobotRequest, duration: float, margin: float) -> TimeVaryingTube:
    """Keep-out box around a robot's start for the first ``duration`` seconds."""
    # the tiny extension closes the interval at the end of the first step
    end = req.start.t + duration * (1 + 1e-9) + 1e-9
    return TimeVaryingTube((TubeSlice(req.start.t, end, teb_box_at(req.start, req.teb, margin)),))


def replan_round(requests: Sequence[RobotRequest], order: Sequence[int],
                 static: Sequence[Box], human_stacks: Sequence[PredictionStack],
                 grid: PlannerGrid, p_th: float = 0.05, keepout: KeepOutSpec = KeepOutSpec(),
                 bus: Optional[TrajectoryBus] = None, round_index: int = 0,
                 reserve_starts: bool = True) -> RoundResult:
    """One priority sweep. ``order`` lists robot ids, highest priority first.

    Each robot avoids the tubes published earlier in the round. With
    ``reserve_starts`` it also avoids the start boxes of lower-priority
    robots for one planner step, so it cannot drive over a robot that has no
    time left to get out of the way.

    A robot that cannot plan is parked: its published trajectory is its start
    state held forever, and it is reported in ``blocked``.
    """
    bus = bus if bus is not None else TrajectoryBus()
    by_id = {r.robot_id: r for r in requests}
    ordered = [rid for rid in order if rid in by_id]
    result = RoundResult()
    done: List[int] = []
    for pos, rid in enumerate(ordered):
        req = by_id[rid]
        tubes = tuple(tube_from(m.trajectory, m.teb, keepout.robot_robot_margin)
                      for m in bus.read(done, round=round_index))
        if reserve_starts:
            tubes += tuple(start_reservation(by_id[j], grid.dt_plan, keepout.robot_robot_margin)
                           for j in ordered[pos + 1:])
        stack = ObstacleStack(tuple(static), tubes, tuple(human_stacks), p_th, keepout)
        t0 = time.perf_counter()
        try:
            traj = plan(req.start, req.goal, req.teb, stack, grid)
        except (NoPath, StartUnsafe) as exc:
            traj = Trajectory((req.start,))
            result.blocked[rid] = type(exc).__name__
        result.plan_times[rid] = time.perf_counter() - t0
        result.trajectories[rid] = traj
        result.stacks[rid] = stack
        result.messages.append(share_trajectory(bus, rid, traj, req.teb, round_index))
        done.append(rid)
    return result
