"""Potential-field pedestrians: pulled to their goal, pushed by nearby agents."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PedestrianParams:
    k_attract: float = 0.5
    k_repulse: float = 0.5
    repulse_radius: float = 2.0
    v_max_ped: float = 1.0
    jitter: float = 0.05  # std of velocity noise, m/s

    def __post_init__(self):
        if min(self.k_attract, self.k_repulse, self.repulse_radius, self.v_max_ped) <= 0:
            raise ValueError("pedestrian parameters must be positive")
        if self.jitter < 0:
            raise ValueError("jitter must be nonnegative")


COINCIDENT = 1e-6


def pedestrian_velocities(humans, robots, goals, params: PedestrianParams,
                          rng: np.random.Generator) -> np.ndarray:
    humans = np.asarray(humans, float).reshape(-1, 2)
    robots = np.asarray(robots, float).reshape(-1, 2)
    goals = np.asarray(goals, float).reshape(-1, 2)
    others = np.vstack([humans, robots])
    v = params.k_attract * (goals - humans)
    for i, p in enumerate(humans):
        for j, q in enumerate(others):
            if j == i:
                continue
            d = p - q
            r = float(np.hypot(*d))
            if r >= params.repulse_radius:
                continue
            if r < COINCIDENT:
                ang = rng.uniform(0.0, 2 * np.pi)
                v[i] += params.k_repulse / COINCIDENT ** 2 * np.array([np.cos(ang), np.sin(ang)])
            else:
                v[i] += params.k_repulse * d / r ** 3
    if params.jitter > 0:
        v += rng.normal(0.0, params.jitter, v.shape)
    speed = np.hypot(v[:, 0], v[:, 1])
    over = speed > params.v_max_ped
    v[over] *= (params.v_max_ped / speed[over])[:, None]
    return v


def pedestrian_step(humans, robots, goals, params: PedestrianParams, dt: float,
                    rng: np.random.Generator) -> np.ndarray:
    """Advance every pedestrian by one Euler step; returns new (n, 2) positions."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    humans = np.asarray(humans, float).reshape(-1, 2)
    return humans + dt * pedestrian_velocities(humans, robots, goals, params, rng)
