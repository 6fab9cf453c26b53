"""Small reproducible experiments shared by scripts/ and the acceptance tests."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List

import numpy as np

from .core import GridSpec, PlanarState
from .prediction import (DEFAULT_BETAS, IntentPosterior, infer_action, predict,
                         prediction_entropy, update_posterior)


@dataclass(frozen=True)
class ConfidenceSetup:
    start: tuple = (10.0, 5.0)
    goals: tuple = ((18.0, 5.0), (2.0, 5.0))  # east and west of the start
    speed: float = 1.0
    heading_noise: float = 0.15  # rad, per tick
    ticks: int = 40
    dt: float = 0.25
    resolution: float = 0.25
    horizon_steps: int = 8
    world: float = 20.0


def scripted_walk(setup: ConfidenceSetup, heading: float, seed: int) -> np.ndarray:
    """Positions of a human walking at ``heading`` (rad) with seeded heading noise."""
    rng = np.random.default_rng(seed)
    pos = [np.array(setup.start, float)]
    for _ in range(setup.ticks):
        th = heading + rng.normal(0.0, setup.heading_noise)
        pos.append(pos[-1] + setup.speed * setup.dt * np.array([math.cos(th), math.sin(th)]))
    return np.array(pos)


def horizon_entropies(setup: ConfidenceSetup, path: np.ndarray) -> List[float]:
    """Posterior-predictive entropy at the last prediction step, one value per tick."""
    spec = GridSpec((0.0, 0.0), setup.resolution, int(setup.world / setup.resolution),
                    int(setup.world / setup.resolution))
    speed = setup.resolution / setup.dt
    post = IntentPosterior.uniform(setup.goals, DEFAULT_BETAS, setup.dt, speed)
    out = []
    for k in range(1, len(path)):
        prev = PlanarState(*path[k - 1], (k - 1) * setup.dt)
        curr = PlanarState(*path[k], k * setup.dt)
        post = update_posterior(post, path[k - 1], infer_action(prev, curr, setup.dt, speed))
        stack = predict(post, path[k], setup.horizon_steps, setup.dt, spec)
        out.append(prediction_entropy(stack, setup.horizon_steps))
    return out


def confidence_pair(seed: int, setup: ConfidenceSetup = ConfidenceSetup()) -> dict:
    """Mean horizon entropy for a goal-conforming walk and a walk 90 degrees off every goal."""
    conform = horizon_entropies(setup, scripted_walk(setup, 0.0, seed))
    deviate = horizon_entropies(setup, scripted_walk(setup, math.pi / 2, seed))
    return {"seed": seed, "conforming": float(np.mean(conform)),
            "deviating": float(np.mean(deviate)),
            "gap": float(np.mean(deviate) - np.mean(conform))}
