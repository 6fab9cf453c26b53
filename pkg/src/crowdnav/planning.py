"""Time-varying A* over (cell, time-step) with TEB-inflated collision checks.

Every edge of the product graph is checked by sampling the straight segment
between cell centers at most ``check_step`` apart. A sample is safe when the
robot's TEB box misses all static boxes, misses every higher-priority tube
slice active at the sample time, and the independent-humans collision
probability at the nearest prediction step stays at or below ``p_th``.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .core import (Box, Cell, GridSpec, KeepOutSpec, PlanarState, PredictionStack,
                   TrackingErrorBound, Trajectory, cell_center, world_to_cell)

MOVES = np.array([[0, 0], [1, 0], [1, 1], [0, 1], [-1, 1],
                  [-1, 0], [-1, -1], [0, -1], [1, -1]], dtype=int)


class NoPath(Exception):
    pass


class StartUnsafe(Exception):
    pass


@dataclass(frozen=True, eq=False)
class ObstacleStack:
    static: Tuple[Box, ...] = ()
    tubes: Tuple = ()
    humans: Tuple[PredictionStack, ...] = ()
    p_th: float = 0.05
    keepout: KeepOutSpec = KeepOutSpec()

    def __post_init__(self):
        if not 0 < self.p_th < 1:
            raise ValueError("p_th must lie in (0, 1)")
        for name in ("static", "tubes", "humans"):
            object.__setattr__(self, name, tuple(getattr(self, name)))


@dataclass(frozen=True)
class PlannerGrid:
    spec: GridSpec
    v_max_plan: float = 1.0
    check_step: float = 0.1
    horizon_s: float = 60.0

    @property
    def dt_plan(self) -> float:
        """One cell per step; ``v_max_plan`` bounds the speed on each axis."""
        return self.spec.resolution / self.v_max_plan

    @property
    def max_steps(self) -> int:
        return int(math.floor(self.horizon_s / self.dt_plan + 1e-9))


def _overlap(xs, ys, hx, hy, box_arr):
    """Strict overlap of boxes centred at (xs, ys) with half-widths (hx, hy)."""
    return ((xs - hx < box_arr[..., 2]) & (box_arr[..., 0] < xs + hx)
            & (ys - hy < box_arr[..., 3]) & (box_arr[..., 1] < ys + hy))


def static_clear(xs, ys, teb: TrackingErrorBound, boxes: Sequence[Box]) -> np.ndarray:
    xs = np.asarray(xs, float)
    ys = np.asarray(ys, float)
    ok = np.ones(xs.shape, dtype=bool)
    for b in boxes:
        ok &= ~_overlap(xs, ys, teb.half_width_x, teb.half_width_y, np.array(b.as_tuple()))
    return ok


def tubes_clear(xs, ys, ts, teb: TrackingErrorBound, tubes) -> np.ndarray:
    xs = np.asarray(xs, float)
    ys = np.asarray(ys, float)
    ts = np.asarray(ts, float)
    ok = np.ones(xs.shape, dtype=bool)
    for tube in tubes:
        idx, active = tube.lookup(ts)
        boxes = tube.box_array[idx]
        hit = _overlap(xs, ys, teb.half_width_x, teb.half_width_y, boxes) & active
        ok &= ~hit
    return ok


def collision_probs(xs, ys, ts, teb: TrackingErrorBound, humans: Sequence[PredictionStack],
                    margin: float) -> np.ndarray:
    """Independent-humans collision probability at each sample; 0 past the horizon."""
    xs = np.asarray(xs, float)
    ys = np.asarray(ys, float)
    ts = np.broadcast_to(np.asarray(ts, float), xs.shape)
    hx = teb.half_width_x + margin
    hy = teb.half_width_y + margin
    p_free = np.ones(xs.shape)
    for st in humans:
        taus = st.steps_for_times(ts)
        for tau in np.unique(taus):
            if tau == 0:
                continue
            sel = taus == tau
            x, y = xs[sel], ys[sel]
            p = st.grid(int(tau)).box_mass_many(x - hx, y - hy, x + hx, y + hy)
            p_free[sel] *= 1.0 - p
    return 1.0 - p_free


def safe_mask(xs, ys, ts, teb: TrackingErrorBound, stack: ObstacleStack) -> np.ndarray:
    xs = np.asarray(xs, float)
    ys = np.asarray(ys, float)
    ts = np.broadcast_to(np.asarray(ts, float), xs.shape)
    ok = static_clear(xs, ys, teb, stack.static)
    if stack.tubes and ok.any():
        ok[ok] = tubes_clear(xs[ok], ys[ok], ts[ok], teb, stack.tubes)
    if stack.humans and ok.any():
        p = collision_probs(xs[ok], ys[ok], ts[ok], teb, stack.humans,
                            stack.keepout.robot_human_margin)
        ok[ok] = p <= stack.p_th
    return ok


def state_safe(s: PlanarState, teb: TrackingErrorBound, stack: ObstacleStack) -> bool:
    return bool(safe_mask([s.x], [s.y], [s.t], teb, stack)[0])


def densify(traj: Trajectory, step: float, t_from: float = -math.inf):
    """Points along the trajectory at most ``step`` apart, from ``t_from`` on."""
    xs, ys, ts = [], [], []
    samples = traj.samples
    if len(samples) == 1 or samples[-1].t <= t_from:
        s = samples[-1]
        return np.array([s.x]), np.array([s.y]), np.array([max(s.t, t_from)])
    for a, b in zip(samples, samples[1:]):
        if b.t < t_from:
            continue
        n = max(1, math.ceil(math.hypot(b.x - a.x, b.y - a.y) / step))
        f = np.linspace(0.0, 1.0, n + 1)
        t = a.t + f * (b.t - a.t)
        keep = t >= t_from
        xs.append((a.x + f * (b.x - a.x))[keep])
        ys.append((a.y + f * (b.y - a.y))[keep])
        ts.append(t[keep])
    return np.concatenate(xs), np.concatenate(ys), np.concatenate(ts)


def max_collision_prob(traj: Trajectory, teb: TrackingErrorBound, stack: ObstacleStack,
                       step: float = 0.1) -> float:
    xs, ys, ts = densify(traj, step)
    if not stack.humans:
        return 0.0
    return float(collision_probs(xs, ys, ts, teb, stack.humans,
                                 stack.keepout.robot_human_margin).max())


class EdgeTable:
    """Lazily computed edge validity for one planning query.

    ``layer(k)[ix, iy, m]`` says whether move ``m`` from cell (ix, iy)
    starting at step ``k`` is collision-free at every sample.
    """

    def __init__(self, grid: PlannerGrid, teb: TrackingErrorBound, stack: ObstacleStack,
                 t0: float):
        self.grid, self.teb, self.stack, self.t0 = grid, teb, stack, t0
        spec = grid.spec
        res = spec.resolution
        n = max(1, math.ceil(res * math.sqrt(2) / grid.check_step))
        self.frac = np.linspace(0.0, 1.0, n + 1)
        centers = spec.centers()
        # (W, H, 9, S)
        self.px = centers[:, :, 0, None, None] + MOVES[None, None, :, 0, None] * res * self.frac
        self.py = centers[:, :, 1, None, None] + MOVES[None, None, :, 1, None] * res * self.frac
        ix = np.arange(spec.width)[:, None, None] + MOVES[None, None, :, 0]
        iy = np.arange(spec.height)[None, :, None] + MOVES[None, None, :, 1]
        inside = (ix >= 0) & (ix < spec.width) & (iy >= 0) & (iy < spec.height)
        self.static = inside & static_clear(self.px, self.py, teb, stack.static).all(axis=-1)
        self._layers: Dict[int, np.ndarray] = {}
        self._parking: Dict[Tuple[int, int, int], bool] = {}

    def time(self, k: int) -> float:
        return self.t0 + k * self.grid.dt_plan

    def layer(self, k: int) -> np.ndarray:
        if k in self._layers:
            return self._layers[k]
        ok = self.static.copy()
        st = self.stack
        if st.tubes or st.humans:
            sel = np.nonzero(ok)
            xs, ys = self.px[sel], self.py[sel]
            ts = np.broadcast_to(self.t0 + (k + self.frac) * self.grid.dt_plan, xs.shape)
            dyn = safe_mask(xs, ys, ts, self.teb,
                            ObstacleStack((), st.tubes, st.humans, st.p_th, st.keepout))
            ok[sel] = dyn.all(axis=-1)
        ok.setflags(write=False)
        self._layers[k] = ok
        return ok

    def parking_ok(self, cell: Cell, k: int) -> bool:
        """Whether a robot can stay at ``cell`` from step ``k`` onward."""
        key = (cell[0], cell[1], k)
        if key in self._parking:
            return self._parking[key]
        x, y = cell_center(self.grid.spec, cell)
        t = self.time(k)
        st = self.stack
        ok = bool(self.static[cell[0], cell[1], 0])
        if ok:
            hx, hy = self.teb.half_width_x, self.teb.half_width_y
            for tube in st.tubes:
                later = tube.end_array > t
                if np.any(_overlap(x, y, hx, hy, tube.box_array[later])):
                    ok = False
                    break
        if ok and st.humans:
            ts = [t]
            for h in st.humans:
                ts.extend(h.t0 + tau * h.dt for tau in range(1, h.horizon_steps + 1)
                          if h.t0 + tau * h.dt > t)
            ts = np.array(ts)
            p = collision_probs(np.full(ts.shape, x), np.full(ts.shape, y), ts, self.teb,
                                st.humans, st.keepout.robot_human_margin)
            ok = bool(np.all(p <= st.p_th))
        self._parking[key] = ok
        return ok


def plan(start: PlanarState, goal, teb: TrackingErrorBound, stack: ObstacleStack,
         grid: PlannerGrid, table: Optional[EdgeTable] = None) -> Trajectory:
    """Earliest-arrival trajectory from ``start`` to the cell containing ``goal``.

    The start is snapped to its cell center. Moves are one cell (or a wait)
    per ``grid.dt_plan``. The goal cell is accepted only at a step from which
    the robot can park there indefinitely.
    """
    spec = grid.spec
    start_cell = world_to_cell(spec, start.xy)
    if start_cell is None or not state_safe(start, teb, stack):
        raise StartUnsafe(f"start {start} is not safe")
    goal_cell = world_to_cell(spec, goal)
    if goal_cell is None:
        raise NoPath(f"goal {tuple(goal)} is outside the planner grid")
    if table is None:
        table = EdgeTable(grid, teb, stack, start.t)
    gx, gy = goal_cell
    K = grid.max_steps

    def h(ix, iy):
        # admissible: a diagonal move takes one step
        return max(abs(ix - gx), abs(iy - gy))

    def tie(ix, iy):
        # straight-line distance breaks ties between equal-cost paths
        return math.hypot(ix - gx, iy - gy)

    sx, sy = start_cell
    heap = [(h(sx, sy), tie(sx, sy), sx, sy, 0)]
    parent = {(sx, sy, 0): None}
    closed = set()
    while heap:
        _, _, ix, iy, k = heapq.heappop(heap)
        node = (ix, iy, k)
        if node in closed:
            continue
        closed.add(node)
        if ix == gx and iy == gy and table.parking_ok((ix, iy), k):
            return _reconstruct(parent, node, spec, table)
        if k >= K:
            continue
        valid = table.layer(k)[ix, iy]
        for m in range(len(MOVES)):
            if not valid[m]:
                continue
            nxt = (ix + int(MOVES[m, 0]), iy + int(MOVES[m, 1]), k + 1)
            if nxt in parent:
                continue
            parent[nxt] = node
            heapq.heappush(heap, (k + 1 + h(nxt[0], nxt[1]), tie(nxt[0], nxt[1]),
                                  nxt[0], nxt[1], k + 1))
    raise NoPath(f"no safe path to {tuple(goal)} within {grid.horizon_s} s")


def _reconstruct(parent, node, spec, table) -> Trajectory:
    chain = []
    while node is not None:
        chain.append(node)
        node = parent[node]
    chain.reverse()
    samples = []
    for ix, iy, k in chain:
        x, y = cell_center(spec, (ix, iy))
        samples.append(PlanarState(x, y, table.time(k)))
    return Trajectory(tuple(samples))


def replan_needed(traj: Trajectory, now: float, stack: ObstacleStack, teb: TrackingErrorBound,
                  goal=None, last_replan: Optional[float] = None,
                  period: Optional[float] = None, goal_tol: float = 0.5,
                  check_step: float = 0.1) -> bool:
    """Whether the current plan should be regenerated at time ``now``."""
    if period is not None and last_replan is not None and now - last_replan >= period - 1e-9:
        return True
    last = traj.last
    if now > last.t:
        at_goal = goal is not None and math.hypot(last.x - goal[0], last.y - goal[1]) <= goal_tol
        if not at_goal:
            return True
    xs, ys, ts = densify(traj, check_step, t_from=now)
    return not bool(safe_mask(xs, ys, ts, teb, stack).all())
