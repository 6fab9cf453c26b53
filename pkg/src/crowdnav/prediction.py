"""Confidence-aware human motion prediction.

Each human is modelled as a noisily-rational point that picks one of nine
planar moves with probability proportional to ``exp(beta * Q)``. Observed
moves update a joint posterior over the goal and the rationality
coefficient beta; the posterior-weighted action distribution is then rolled
forward on an occupancy grid.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, replace
from typing import Dict, Sequence, Tuple

import numpy as np

from .core import (Cell, GridSpec, OccupancyGrid, PlanarState, PredictionStack,
                   TrackingErrorBound, cell_center, teb_box_at, world_to_cell)

log = logging.getLogger(__name__)

ACTION_NAMES = ("stay", "east", "northeast", "north", "northwest",
                "west", "southwest", "south", "southeast")
ACTION_DIRS = np.array([[0, 0], [1, 0], [1, 1], [0, 1], [-1, 1],
                        [-1, 0], [-1, -1], [0, -1], [1, -1]], dtype=float)
ACTION_DIRS.setflags(write=False)
STAY = 0

DEFAULT_BETAS = (0.05, 0.5, 5.0, 50.0)


@dataclass(frozen=True)
class HumanActionSet:
    """The nine grid-aligned moves, scaled so one move covers one cell per dt."""

    speed: float

    @property
    def velocities(self) -> np.ndarray:
        return ACTION_DIRS * self.speed

    @property
    def names(self) -> Tuple[str, ...]:
        return ACTION_NAMES

    def index(self, name: str) -> int:
        return ACTION_NAMES.index(name)

    def nearest(self, v: Sequence[float]) -> int:
        d = np.hypot(self.velocities[:, 0] - v[0], self.velocities[:, 1] - v[1])
        # argmin returns the first minimum, i.e. ties follow list order
        return int(np.argmin(d))


@dataclass(frozen=True)
class QFunction:
    goal: Tuple[float, float]
    dt: float
    speed: float


def q_value(q: QFunction, state: Sequence[float], action: Sequence[float]) -> float:
    """Negative distance travelled plus negative remaining distance to the goal."""
    ax, ay = action
    nx = state[0] + ax * q.dt
    ny = state[1] + ay * q.dt
    return -(math.hypot(ax, ay) * q.dt + math.hypot(nx - q.goal[0], ny - q.goal[1]))


def q_values(q: QFunction, states: np.ndarray) -> np.ndarray:
    """Q for every action at every state; ``states`` is (n, 2), result is (n, 9)."""
    states = np.asarray(states, dtype=float).reshape(-1, 2)
    vel = ACTION_DIRS * q.speed
    step = np.hypot(vel[:, 0], vel[:, 1]) * q.dt
    nxt = states[:, None, :] + vel[None, :, :] * q.dt
    togo = np.hypot(nxt[..., 0] - q.goal[0], nxt[..., 1] - q.goal[1])
    return -(step[None, :] + togo)


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def boltzmann(state: Sequence[float], beta: float, q: QFunction) -> np.ndarray:
    """Distribution over the nine actions at ``state``."""
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    return softmax(beta * q_values(q, np.asarray(state, float))[0])


def infer_action(prev: PlanarState, curr: PlanarState, dt: float, speed: float) -> int:
    """Invert single-integrator dynamics and snap the velocity to the action set."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if abs((curr.t - prev.t) - dt) > 1e-9:
        raise ValueError(f"states are {curr.t - prev.t} s apart, expected {dt}")
    v = ((curr.x - prev.x) / dt, (curr.y - prev.y) / dt)
    return HumanActionSet(speed).nearest(v)


@dataclass(frozen=True, eq=False)
class IntentPosterior:
    """Joint belief over candidate goals (rows) and beta values (columns).

    ``dt`` and ``speed`` fix the action model used for likelihoods.
    ``mismatch`` is set when the last observation had zero likelihood under
    every hypothesis and the update was skipped.
    """

    thetas: np.ndarray
    betas: np.ndarray
    weights: np.ndarray
    dt: float = 0.25
    speed: float = 1.0
    mismatch: bool = False

    def __post_init__(self):
        th = np.array(self.thetas, dtype=float).reshape(-1, 2)
        be = np.array(self.betas, dtype=float).reshape(-1)
        w = np.array(self.weights, dtype=float).reshape(len(th), len(be))
        if np.any(be < 0):
            raise ValueError("betas must be nonnegative")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("posterior weights must be nonnegative and sum to 1")
        for name, a in (("thetas", th), ("betas", be), ("weights", w)):
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @classmethod
    def uniform(cls, thetas, betas=DEFAULT_BETAS, dt: float = 0.25,
                speed: float = 1.0) -> "IntentPosterior":
        n = len(thetas) * len(betas)
        return cls(thetas, betas, np.full((len(thetas), len(betas)), 1.0 / n), dt, speed)

    def goal_marginal(self) -> np.ndarray:
        return self.weights.sum(axis=1)

    def beta_marginal(self) -> np.ndarray:
        return self.weights.sum(axis=0)

    def summary(self) -> dict:
        g = self.goal_marginal()
        return {
            "goal_probs": [float(v) for v in g],
            "beta_probs": [float(v) for v in self.beta_marginal()],
            "map_goal": int(np.argmax(g)),
            "mismatch": self.mismatch,
        }


def action_likelihoods(post: IntentPosterior, state: Sequence[float], action: int) -> np.ndarray:
    """P(action | state; beta, theta) for every (theta, beta) pair."""
    like = np.empty(post.weights.shape)
    for i, g in enumerate(post.thetas):
        qv = q_values(QFunction(tuple(g), post.dt, post.speed), np.asarray(state, float))[0]
        for j, b in enumerate(post.betas):
            like[i, j] = softmax(b * qv)[action]
    return like


def update_posterior(post: IntentPosterior, state: Sequence[float], action: int) -> IntentPosterior:
    """Bayes update of the (goal, beta) belief after observing ``action`` at ``state``."""
    if not 0 <= action < len(ACTION_DIRS):
        raise ValueError(f"unknown action index {action}")
    w = post.weights * action_likelihoods(post, state, action)
    z = w.sum()
    if not (z > 0 and math.isfinite(z)):
        log.warning("observation has zero likelihood under every hypothesis; keeping prior")
        return replace(post, mismatch=True)
    return replace(post, weights=w / z, mismatch=False)


def action_mixture(post: IntentPosterior, states: np.ndarray, dt: float, speed: float) -> np.ndarray:
    """Posterior-predictive action distribution at each state, shape (n, 9)."""
    states = np.asarray(states, dtype=float).reshape(-1, 2)
    out = np.zeros((len(states), len(ACTION_DIRS)))
    for i, g in enumerate(post.thetas):
        row = post.weights[i]
        if not np.any(row > 0):
            continue
        qv = q_values(QFunction(tuple(g), dt, speed), states)
        for j, b in enumerate(post.betas):
            if row[j] > 0:
                out += row[j] * softmax(b * qv, axis=1)
    return out


def predict(post: IntentPosterior, curr: Sequence[float], horizon_steps: int, dt: float,
            spec: GridSpec, t0: float = 0.0) -> PredictionStack:
    """Roll the posterior-predictive policy forward from the cell of ``curr``.

    The returned grids live on a window of ``spec`` just large enough to hold
    every cell reachable within the horizon; mass leaving ``spec`` is counted
    as escaped.
    """
    start = world_to_cell(spec, curr)
    if start is None:
        raise ValueError(f"human position {tuple(curr)} is outside the prediction grid")
    if horizon_steps < 1:
        raise ValueError("horizon_steps must be at least 1")
    h = horizon_steps
    ix0, iy0 = max(0, start[0] - h), max(0, start[1] - h)
    ix1, iy1 = min(spec.width, start[0] + h + 1), min(spec.height, start[1] + h + 1)
    win = spec.window(ix0, iy0, ix1 - ix0, iy1 - iy0)
    w, hgt = win.shape

    policy = action_mixture(post, win.centers().reshape(-1, 2), dt,
                            spec.resolution / dt).reshape(w, hgt, len(ACTION_DIRS))
    mass = np.zeros((w, hgt))
    mass[start[0] - ix0, start[1] - iy0] = 1.0
    escaped = 0.0
    grids = []
    for _ in range(h):
        new = np.zeros_like(mass)
        for a, (dx, dy) in enumerate(ACTION_DIRS.astype(int)):
            flow = mass * policy[:, :, a]
            sx = slice(max(0, -dx), w - max(0, dx))
            sy = slice(max(0, -dy), hgt - max(0, dy))
            tx = slice(max(0, dx), w - max(0, -dx))
            ty = slice(max(0, dy), hgt - max(0, -dy))
            new[tx, ty] += flow[sx, sy]
            # mass in the rows/columns that shift off the window leaves the grid
            dropped = flow.copy()
            dropped[sx, sy] = 0.0
            escaped += float(dropped.sum())
        mass = new
        grids.append(OccupancyGrid(win, np.clip(mass, 0.0, 1.0), escaped))
    return PredictionStack(t0, dt, tuple(grids))


def collision_prob_marginal(s, teb: TrackingErrorBound, stacks: Sequence[PredictionStack],
                            step: int, margin: float = 0.0) -> float:
    """Probability of overlapping at least one human, treating humans as independent."""
    box = teb_box_at(s, teb, margin)
    p_free = 1.0
    for st in stacks:
        p_free *= 1.0 - st.grid(step).mass_in_box(box)
    return 1.0 - p_free


class OracleMisuse(ValueError):
    """Joint support too large for brute-force enumeration."""


def independent_joint(grids: Sequence[OccupancyGrid]) -> Dict[Tuple[Cell, ...], float]:
    """Product distribution over tuples of occupied cells (test-scale only)."""
    supports = []
    for g in grids:
        nz = np.argwhere(g.mass > 0)
        supports.append([((int(i), int(j)), float(g.mass[i, j])) for i, j in nz])
    joint = {}
    for combo in itertools.product(*supports):
        cells = tuple(c for c, _ in combo)
        joint[cells] = math.prod(p for _, p in combo)
    return joint


def collision_prob_joint_oracle(s, teb: TrackingErrorBound,
                                joint: Dict[Tuple[Cell, ...], float], spec: GridSpec,
                                margin: float = 0.0, cap: int = 2_000_000) -> float:
    """Exact probability that any human's cell center is inside the footprint.

    Enumerates the joint support directly, so it holds for correlated humans.
    """
    if len(joint) > cap:
        raise OracleMisuse(f"joint support of {len(joint)} exceeds enumeration cap {cap}")
    box = teb_box_at(s, teb, margin)
    hit_cache: Dict[Cell, bool] = {}
    total = 0.0
    for cells, p in joint.items():
        for c in cells:
            if c not in hit_cache:
                hit_cache[c] = box.contains(cell_center(spec, c))
            if hit_cache[c]:
                total += p
                break
    return total


def prediction_entropy(stack: PredictionStack, step: int) -> float:
    """Shannon entropy in nats, counting escaped mass as one extra outcome."""
    g = stack.grid(step)
    p = np.append(g.mass.ravel(), g.escaped)
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())
