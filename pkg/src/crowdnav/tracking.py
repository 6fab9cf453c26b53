"""Planar double-integrator tracking of planner references.

The physical robot follows the piecewise-linear reference with a saturating
PD law while a bounded disturbance acts on its acceleration. The tracking
error bound is an input here; ``validate_teb`` and ``derive_teb`` check it by
simulation.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .core import PlanarState, RobotPhysicalState, TrackingErrorBound, Trajectory


@dataclass(frozen=True)
class TrackerParams:
    a_max: float = 6.0
    d_max: float = 0.5
    v_max_track: float = 2.0
    dt_sim: float = 0.01
    kp: float = 6.0

    def __post_init__(self):
        if not self.a_max > self.d_max >= 0:
            raise ValueError("need a_max > d_max >= 0")
        if not self.dt_sim > 0:
            raise ValueError("dt_sim must be positive")
        if not (self.kp > 0 and self.v_max_track > 0):
            raise ValueError("kp and v_max_track must be positive")

    @property
    def kd(self) -> float:
        # critically damped
        return 2.0 * math.sqrt(self.kp)


@dataclass(frozen=True)
class RelativeState:
    ex: float
    ey: float
    evx: float
    evy: float


def relative_state(robot: RobotPhysicalState, ref: PlanarState, ref_v: Tuple[float, float]) -> RelativeState:
    return RelativeState(robot.x - ref.x, robot.y - ref.y, robot.vx - ref_v[0], robot.vy - ref_v[1])


def reference_at(traj: Trajectory, t: float) -> PlanarState:
    """Linear interpolation of the reference, held constant outside its time span."""
    s = traj.samples
    if t <= s[0].t:
        return s[0] if t == s[0].t else PlanarState(s[0].x, s[0].y, max(t, 0.0))
    if t >= s[-1].t:
        return s[-1] if t == s[-1].t else PlanarState(s[-1].x, s[-1].y, t)
    i = bisect.bisect_right([p.t for p in s], t) - 1
    a, b = s[i], s[i + 1]
    if t == a.t:
        return a
    f = (t - a.t) / (b.t - a.t)
    return PlanarState(a.x + f * (b.x - a.x), a.y + f * (b.y - a.y), t)


def reference_velocity(traj: Trajectory, t: float) -> Tuple[float, float]:
    s = traj.samples
    if t < s[0].t or t >= s[-1].t:
        return (0.0, 0.0)
    i = bisect.bisect_right([p.t for p in s], t) - 1
    a, b = s[i], s[i + 1]
    dt = b.t - a.t
    return ((b.x - a.x) / dt, (b.y - a.y) / dt)


def _clamp(v: float, lim: float) -> float:
    return -lim if v < -lim else (lim if v > lim else v)


def tracking_control(rel: RelativeState, params: TrackerParams) -> Tuple[float, float]:
    kp, kd = params.kp, params.kd
    ux = _clamp(-kp * rel.ex - kd * rel.evx, params.a_max)
    uy = _clamp(-kp * rel.ey - kd * rel.evy, params.a_max)
    return (ux + 0.0, uy + 0.0)


def step_tracker(state: RobotPhysicalState, cmd, disturbance, params: TrackerParams) -> RobotPhysicalState:
    """Symplectic Euler: update velocity first, clamp it, then move."""
    dx, dy = disturbance
    if abs(dx) > params.d_max + 1e-12 or abs(dy) > params.d_max + 1e-12:
        raise ValueError(f"disturbance {disturbance} exceeds d_max={params.d_max}")
    h = params.dt_sim
    vx = _clamp(state.vx + (cmd[0] + dx) * h, params.v_max_track)
    vy = _clamp(state.vy + (cmd[1] + dy) * h, params.v_max_track)
    return RobotPhysicalState(state.x + vx * h, state.y + vy * h, vx, vy)


def _sign(v: float) -> float:
    return (v > 0) - (v < 0)


def greedy_disturbance(rel: RelativeState, params: TrackerParams) -> Tuple[float, float]:
    """Push each axis the way its error is currently growing.

    Uses the sign of the error rate, falling back to the error itself when
    the rate is zero. Pushing on the position error alone settles on the
    wrong side before each reference reversal and is beaten by random noise.
    """
    sx = _sign(rel.evx) or _sign(rel.ex)
    sy = _sign(rel.evy) or _sign(rel.ey)
    return (params.d_max * sx, params.d_max * sy)


@dataclass(frozen=True)
class TebReport:
    max_error_x: float
    max_error_y: float
    contained: bool
    violations: int
    steps: int

    def to_dict(self) -> dict:
        return {"max_error_x": self.max_error_x, "max_error_y": self.max_error_y,
                "contained": self.contained, "violations": self.violations, "steps": self.steps}


def switching_reference(v_ref: float, switch_period: float, duration: float) -> Trajectory:
    """Worst-case style reference: full speed on both axes, reversing each period.

    The y axis reverses half a period later than x so the two axes do not
    stay in phase.
    """
    n = max(1, math.ceil(duration / switch_period)) + 1
    samples = [PlanarState(0.0, 0.0, 0.0)]
    x = y = 0.0
    for k in range(1, 2 * n + 1):
        t = k * switch_period / 2
        seg = k - 1
        x += v_ref * switch_period / 2 * (1 if (seg // 2) % 2 == 0 else -1)
        y += v_ref * switch_period / 2 * (1 if ((seg + 1) // 2) % 2 == 0 else -1)
        samples.append(PlanarState(x, y, t))
    return Trajectory(tuple(samples))


def validate_teb(params: TrackerParams, teb: TrackingErrorBound, duration: float,
                 policy: str = "greedy", seed: int = 0, v_ref: float = 1.0,
                 switch_period: float = 1.5) -> TebReport:
    """Track a direction-switching reference and measure the worst position error."""
    if policy not in ("greedy", "random"):
        raise ValueError(f"unknown disturbance policy {policy!r}")
    rng = np.random.default_rng(seed)
    ref = switching_reference(v_ref, switch_period, duration)
    times = [s.t for s in ref.samples]
    vel = [((b.x - a.x) / (b.t - a.t), (b.y - a.y) / (b.t - a.t))
           for a, b in zip(ref.samples, ref.samples[1:])]
    steps = int(round(duration / params.dt_sim))
    h = params.dt_sim
    robot = RobotPhysicalState(0.0, 0.0, 0.0, 0.0)
    max_ex = max_ey = 0.0
    violations = 0
    seg = 0
    for n in range(steps):
        t = n * h
        while seg + 1 < len(times) - 1 and t >= times[seg + 1]:
            seg += 1
        a = ref.samples[seg]
        vx, vy = vel[seg]
        rel = RelativeState(robot.x - (a.x + vx * (t - a.t)), robot.y - (a.y + vy * (t - a.t)),
                            robot.vx - vx, robot.vy - vy)
        cmd = tracking_control(rel, params)
        if policy == "greedy":
            dist = greedy_disturbance(rel, params)
        else:
            dist = tuple(rng.uniform(-params.d_max, params.d_max, 2))
        robot = step_tracker(robot, cmd, dist, params)
        t1 = t + h
        i = min(bisect.bisect_right(times, t1) - 1, len(vel) - 1)
        b = ref.samples[i]
        ex = abs(robot.x - (b.x + vel[i][0] * (t1 - b.t)))
        ey = abs(robot.y - (b.y + vel[i][1] * (t1 - b.t)))
        max_ex = max(max_ex, ex)
        max_ey = max(max_ey, ey)
        if ex > teb.half_width_x or ey > teb.half_width_y:
            violations += 1
    return TebReport(max_ex, max_ey, violations == 0, violations, steps)


def derive_teb(params: TrackerParams, duration: float, v_ref: float = 1.0,
               switch_period: float = 1.5, tol: float = 1e-4) -> TrackingErrorBound:
    """Smallest box (per axis, within ``tol``) that contains greedy-disturbance tracking."""
    big = 1e6

    def contained(hx: float, hy: float, axis: int) -> bool:
        r = validate_teb(params, TrackingErrorBound(hx, hy), duration, "greedy",
                         v_ref=v_ref, switch_period=switch_period)
        return (r.max_error_x <= hx) if axis == 0 else (r.max_error_y <= hy)

    out = []
    for axis in (0, 1):
        lo, hi = 0.0, 0.1
        while not contained(*((hi, big) if axis == 0 else (big, hi)), axis):
            lo, hi = hi, hi * 2
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if contained(*((mid, big) if axis == 0 else (big, mid)), axis):
                hi = mid
            else:
                lo = mid
        out.append(hi)
    return TrackingErrorBound(*out)
