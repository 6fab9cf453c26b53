"""Scenario files: JSON in, validated ``ScenarioConfig`` out.

Validation collects every problem before raising so a user sees the whole
list at once.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import List, Optional, Tuple

from .core import Box, GridSpec, KeepOutSpec, TrackingErrorBound
from .pedestrians import PedestrianParams
from .prediction import DEFAULT_BETAS
from .tracking import TrackerParams

SCENARIO_DIR = Path(__file__).parent / "scenarios"


class ConfigError(ValueError):
    def __init__(self, errors: List[str]):
        self.errors = list(errors)
        super().__init__("invalid scenario:\n  " + "\n  ".join(self.errors))


@dataclass(frozen=True)
class WorldConfig:
    origin: Tuple[float, float] = (0.0, 0.0)
    width: float = 25.0
    height: float = 20.0


@dataclass(frozen=True)
class RobotSpec:
    start: Tuple[float, float]
    goal: Tuple[float, float]
    teb: TrackingErrorBound
    priority: int


@dataclass(frozen=True)
class HumanSpec:
    start: Tuple[float, float]
    true_goal: Tuple[float, float]
    candidate_goals: Tuple[Tuple[float, float], ...]
    unmodeled: bool = False


@dataclass(frozen=True)
class PredictionConfig:
    horizon_s: float = 2.0
    dt: float = 0.25
    resolution: float = 0.25
    beta_grid: Tuple[float, ...] = DEFAULT_BETAS

    @property
    def horizon_steps(self) -> int:
        return int(round(self.horizon_s / self.dt))


@dataclass(frozen=True)
class PlannerConfig:
    resolution: float = 1.5
    collision_check_step_m: float = 0.1
    v_max_plan: float = 1.0
    horizon_s: float = 60.0


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.25
    seed: int = 0
    max_duration_s: float = 300.0
    replan_period: Optional[float] = None  # defaults to the planner step
    goal_tolerance: float = 0.5
    disturbance: str = "random"


@dataclass(frozen=True)
class ScenarioConfig:
    robots: Tuple[RobotSpec, ...]
    humans: Tuple[HumanSpec, ...] = ()
    static_obstacles: Tuple[Box, ...] = ()
    p_th: float = 0.05
    prediction: PredictionConfig = PredictionConfig()
    planner: PlannerConfig = PlannerConfig()
    sim: SimConfig = SimConfig()
    world: WorldConfig = WorldConfig()
    keepout: KeepOutSpec = KeepOutSpec()
    tracker: TrackerParams = TrackerParams()
    pedestrians: PedestrianParams = PedestrianParams()
    name: str = "scenario"

    @property
    def planner_spec(self) -> GridSpec:
        res = self.planner.resolution
        return GridSpec(self.world.origin, res, max(1, int(self.world.width / res + 1e-9)),
                        max(1, int(self.world.height / res + 1e-9)))

    @property
    def prediction_spec(self) -> GridSpec:
        res = self.prediction.resolution
        return GridSpec(self.world.origin, res, max(1, int(math.ceil(self.world.width / res - 1e-9))),
                        max(1, int(math.ceil(self.world.height / res - 1e-9))))

    @property
    def replan_period(self) -> float:
        if self.sim.replan_period is not None:
            return self.sim.replan_period
        return self.planner.resolution / self.planner.v_max_plan

    def with_overrides(self, p_th: Optional[float] = None, replan_period: Optional[float] = None,
                       seed: Optional[int] = None) -> "ScenarioConfig":
        cfg = self
        if p_th is not None:
            cfg = replace(cfg, p_th=p_th)
        if replan_period is not None:
            cfg = replace(cfg, sim=replace(cfg.sim, replan_period=replan_period))
        if seed is not None:
            cfg = replace(cfg, sim=replace(cfg.sim, seed=seed))
        return cfg

    def validate(self) -> "ScenarioConfig":
        errs = validation_errors(self)
        if errs:
            raise ConfigError(errs)
        return self


def _pt(v) -> Tuple[float, float]:
    x, y = v
    return (float(x), float(y))


def _in_world(p, w: WorldConfig) -> bool:
    return (w.origin[0] <= p[0] < w.origin[0] + w.width
            and w.origin[1] <= p[1] < w.origin[1] + w.height)


def validation_errors(cfg: ScenarioConfig) -> List[str]:
    errs = []
    w = cfg.world
    if not (w.width > 0 and w.height > 0):
        errs.append("world: width and height must be positive")
    if not 0 < cfg.p_th < 1:
        errs.append(f"p_th: must lie in (0, 1), got {cfg.p_th}")
    if not cfg.robots:
        errs.append("robots: at least one robot is required")
    prios = sorted(r.priority for r in cfg.robots)
    if prios != list(range(1, len(cfg.robots) + 1)):
        errs.append(f"robots[].priority: must be a permutation of 1..{len(cfg.robots)}, got {prios}")
    for i, r in enumerate(cfg.robots):
        for nm in ("start", "goal"):
            if not _in_world(getattr(r, nm), w):
                errs.append(f"robots[{i}].{nm}: {getattr(r, nm)} is outside the world")
    for i, h in enumerate(cfg.humans):
        if not _in_world(h.start, w):
            errs.append(f"humans[{i}].start: {h.start} is outside the world")
        if not h.candidate_goals:
            errs.append(f"humans[{i}].candidate_goals: must be nonempty")
        if h.true_goal not in h.candidate_goals and not h.unmodeled:
            errs.append(f"humans[{i}].true_goal: not among candidate_goals and not flagged unmodeled")
    pr = cfg.prediction
    if not (pr.dt > 0 and pr.resolution > 0 and pr.horizon_s > 0):
        errs.append("prediction: horizon_s, dt and resolution must be positive")
    elif abs(pr.horizon_s / pr.dt - round(pr.horizon_s / pr.dt)) > 1e-9 or pr.horizon_steps < 1:
        errs.append("prediction.horizon_s: must be a positive multiple of prediction.dt")
    if not pr.beta_grid or any(b < 0 for b in pr.beta_grid):
        errs.append("prediction.beta_grid: must be a nonempty list of nonnegative values")
    pl = cfg.planner
    if not (pl.resolution > 0 and pl.collision_check_step_m > 0 and pl.v_max_plan > 0
            and pl.horizon_s > 0):
        errs.append("planner: resolution, collision_check_step_m, v_max_plan, horizon_s must be positive")
    elif pl.v_max_plan > cfg.tracker.v_max_track:
        errs.append("planner.v_max_plan: must not exceed tracker.v_max_track")
    s = cfg.sim
    if not (s.dt > 0 and s.max_duration_s > 0 and s.goal_tolerance > 0):
        errs.append("sim: dt, max_duration_s and goal_tolerance must be positive")
    if s.replan_period is not None and not s.replan_period > 0:
        errs.append("sim.replan_period: must be positive")
    if s.disturbance not in ("random", "greedy"):
        errs.append(f"sim.disturbance: must be 'random' or 'greedy', got {s.disturbance!r}")
    if s.seed < 0:
        errs.append("sim.seed: must be nonnegative")
    return errs


def _build(d: dict, errs: List[str], name: str) -> Optional[ScenarioConfig]:
    def section(key, cls, convert=None):
        raw = d.get(key, {})
        if not isinstance(raw, dict):
            errs.append(f"{key}: expected an object")
            return cls()
        known = set(cls.__dataclass_fields__)
        extra = set(raw) - known
        if extra:
            errs.append(f"{key}: unknown fields {sorted(extra)}")
        kw = {k: v for k, v in raw.items() if k in known}
        if convert:
            kw = convert(kw)
        try:
            return cls(**kw)
        except (TypeError, ValueError) as exc:
            errs.append(f"{key}: {exc}")
            return cls()

    robots = []
    for i, r in enumerate(d.get("robots", [])):
        try:
            robots.append(RobotSpec(_pt(r["start"]), _pt(r["goal"]),
                                    TrackingErrorBound(*map(float, r["teb"])), int(r["priority"])))
        except (KeyError, TypeError, ValueError) as exc:
            errs.append(f"robots[{i}]: {exc!r}")
    humans = []
    for i, h in enumerate(d.get("humans", [])):
        try:
            humans.append(HumanSpec(_pt(h["start"]), _pt(h["true_goal"]),
                                    tuple(_pt(g) for g in h["candidate_goals"]),
                                    bool(h.get("unmodeled", False))))
        except (KeyError, TypeError, ValueError) as exc:
            errs.append(f"humans[{i}]: {exc!r}")
    boxes = []
    for i, b in enumerate(d.get("static_obstacles", [])):
        try:
            boxes.append(Box(*map(float, b["min"]), *map(float, b["max"])))
        except (KeyError, TypeError, ValueError) as exc:
            errs.append(f"static_obstacles[{i}]: {exc!r}")

    def tuple_fields(kw):
        for k in ("origin", "beta_grid"):
            if k in kw:
                kw[k] = tuple(float(v) for v in kw[k])
        return kw

    p_th = d.get("p_th", 0.05)
    if not isinstance(p_th, (int, float)):
        errs.append("p_th: must be a number")
        p_th = 0.05
    return ScenarioConfig(
        robots=tuple(robots), humans=tuple(humans), static_obstacles=tuple(boxes),
        p_th=float(p_th),
        prediction=section("prediction", PredictionConfig, tuple_fields),
        planner=section("planner", PlannerConfig),
        sim=section("sim", SimConfig),
        world=section("world", WorldConfig, tuple_fields),
        keepout=section("keepout", KeepOutSpec),
        tracker=section("tracker", TrackerParams),
        pedestrians=section("pedestrians", PedestrianParams),
        name=str(d.get("name", name)),
    )


KNOWN_KEYS = {"name", "robots", "humans", "static_obstacles", "p_th", "prediction", "planner",
              "sim", "world", "keepout", "tracker", "pedestrians"}


def scenario_from_dict(d: dict, name: str = "scenario", overrides: Optional[dict] = None) -> ScenarioConfig:
    errs: List[str] = []
    extra = set(d) - KNOWN_KEYS
    if extra:
        errs.append(f"unknown top-level fields {sorted(extra)}")
    cfg = _build(d, errs, name)
    if overrides:
        cfg = cfg.with_overrides(**overrides)
    errs.extend(validation_errors(cfg))
    if errs:
        raise ConfigError(errs)
    return cfg


def resolve_scenario_path(name_or_path: str) -> Path:
    p = Path(name_or_path)
    if p.exists():
        return p
    shipped = SCENARIO_DIR / f"{name_or_path}.json"
    if shipped.exists():
        return shipped
    raise FileNotFoundError(f"no scenario file or shipped scenario named {name_or_path!r}")


def load_scenario(name_or_path: str, overrides: Optional[dict] = None) -> ScenarioConfig:
    path = resolve_scenario_path(name_or_path)
    with open(path) as f:
        d = json.load(f)
    return scenario_from_dict(d, name=path.stem, overrides=overrides)


def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    return {
        "name": cfg.name,
        "world": asdict(cfg.world),
        "static_obstacles": [{"min": [b.xmin, b.ymin], "max": [b.xmax, b.ymax]}
                             for b in cfg.static_obstacles],
        "robots": [{"start": list(r.start), "goal": list(r.goal),
                    "teb": [r.teb.half_width_x, r.teb.half_width_y], "priority": r.priority}
                   for r in cfg.robots],
        "humans": [{"start": list(h.start), "true_goal": list(h.true_goal),
                    "candidate_goals": [list(g) for g in h.candidate_goals],
                    "unmodeled": h.unmodeled} for h in cfg.humans],
        "p_th": cfg.p_th,
        "prediction": asdict(cfg.prediction),
        "planner": asdict(cfg.planner),
        "sim": asdict(cfg.sim),
        "keepout": asdict(cfg.keepout),
        "tracker": asdict(cfg.tracker),
        "pedestrians": asdict(cfg.pedestrians),
    }
