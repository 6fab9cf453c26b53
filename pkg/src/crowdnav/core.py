"""Planar geometry, occupancy grids and trajectories shared by every module.

All types are immutable once built. Arrays held by grids are marked
read-only so instances can be shared between threads.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence, Tuple

import numpy as np

Point = Tuple[float, float]
Cell = Tuple[int, int]


def _finite(*vals: float) -> bool:
    return all(math.isfinite(v) for v in vals)


@dataclass(frozen=True)
class PlanarState:
    """Planner reference state or human position at time ``t``."""

    x: float
    y: float
    t: float = 0.0

    def __post_init__(self):
        if not _finite(self.x, self.y, self.t) or self.t < 0:
            raise ValueError(f"invalid PlanarState ({self.x}, {self.y}, t={self.t})")

    @property
    def xy(self) -> Point:
        return (self.x, self.y)


@dataclass(frozen=True)
class RobotPhysicalState:
    x: float
    y: float
    vx: float = 0.0
    vy: float = 0.0

    def __post_init__(self):
        if not _finite(self.x, self.y, self.vx, self.vy):
            raise ValueError("RobotPhysicalState fields must be finite")

    @property
    def xy(self) -> Point:
        return (self.x, self.y)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``[xmin, xmax] x [ymin, ymax]``."""

    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        if self.xmin > self.xmax or self.ymin > self.ymax:
            raise ValueError(f"degenerate box {self}")

    def intersects(self, other: "Box") -> bool:
        # touching edges do not count as overlap
        return (self.xmin < other.xmax and other.xmin < self.xmax
                and self.ymin < other.ymax and other.ymin < self.ymax)

    def contains(self, p: Point) -> bool:
        return self.xmin <= p[0] <= self.xmax and self.ymin <= p[1] <= self.ymax

    def inflate(self, m: float) -> "Box":
        return Box(self.xmin - m, self.ymin - m, self.xmax + m, self.ymax + m)

    def hull(self, other: "Box") -> "Box":
        return Box(min(self.xmin, other.xmin), min(self.ymin, other.ymin),
                   max(self.xmax, other.xmax), max(self.ymax, other.ymax))

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return (self.xmin, self.ymin, self.xmax, self.ymax)


@dataclass(frozen=True)
class GridSpec:
    origin: Point
    resolution: float
    width: int
    height: int

    def __post_init__(self):
        if not self.resolution > 0:
            raise ValueError("grid resolution must be positive")
        if self.width < 1 or self.height < 1:
            raise ValueError("grid must have at least one cell per axis")

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.width, self.height)

    def in_bounds(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.width and 0 <= cell[1] < self.height

    def window(self, ix0: int, iy0: int, width: int, height: int) -> "GridSpec":
        """Sub-grid aligned with this one, starting at cell (ix0, iy0)."""
        ox = self.origin[0] + ix0 * self.resolution
        oy = self.origin[1] + iy0 * self.resolution
        return GridSpec((ox, oy), self.resolution, width, height)

    def centers(self) -> np.ndarray:
        """Cell centers as an array of shape (width, height, 2)."""
        xs = self.origin[0] + (np.arange(self.width) + 0.5) * self.resolution
        ys = self.origin[1] + (np.arange(self.height) + 0.5) * self.resolution
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        return np.stack([gx, gy], axis=-1)


def world_to_cell(spec: GridSpec, p: Sequence[float]) -> Optional[Cell]:
    """Cell containing ``p`` using half-open intervals; ``None`` when out of bounds."""
    ix = math.floor((p[0] - spec.origin[0]) / spec.resolution)
    iy = math.floor((p[1] - spec.origin[1]) / spec.resolution)
    if not spec.in_bounds((ix, iy)):
        return None
    return (ix, iy)


def cell_center(spec: GridSpec, cell: Cell) -> Point:
    return (spec.origin[0] + (cell[0] + 0.5) * spec.resolution,
            spec.origin[1] + (cell[1] + 0.5) * spec.resolution)


@dataclass(frozen=True)
class TrackingErrorBound:
    half_width_x: float
    half_width_y: float

    def __post_init__(self):
        if not (self.half_width_x > 0 and self.half_width_y > 0):
            raise ValueError("tracking error bound half-widths must be positive")

    def scaled(self, factor: float) -> "TrackingErrorBound":
        return TrackingErrorBound(self.half_width_x * factor, self.half_width_y * factor)


@dataclass(frozen=True)
class KeepOutSpec:
    robot_robot_margin: float = 0.2
    robot_human_margin: float = 0.25

    def __post_init__(self):
        if self.robot_robot_margin < 0 or self.robot_human_margin < 0:
            raise ValueError("keep-out margins must be nonnegative")


def teb_box_at(state, teb: TrackingErrorBound, margin: float = 0.0) -> Box:
    """Footprint of a robot tracking ``state``: the TEB box plus ``margin`` per side."""
    if margin < 0:
        raise ValueError("margin must be nonnegative")
    x, y = (state.x, state.y) if hasattr(state, "x") else state
    hx = teb.half_width_x + margin
    hy = teb.half_width_y + margin
    return Box(x - hx, y - hy, x + hx, y + hy)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class OccupancyGrid:
    """Probability mass per cell, indexed ``mass[ix, iy]``.

    ``escaped`` is the mass that left the grid through its boundary; it is
    kept separately instead of renormalizing.
    """

    spec: GridSpec
    mass: np.ndarray
    escaped: float = 0.0

    def __post_init__(self):
        m = _readonly(self.mass)
        if m.shape != self.spec.shape:
            raise ValueError(f"mass shape {m.shape} does not match grid {self.spec.shape}")
        if np.any(m < 0) or np.any(m > 1 + 1e-12):
            raise ValueError("cell mass must lie in [0, 1]")
        object.__setattr__(self, "mass", m)

    def total(self) -> float:
        return float(self.mass.sum())

    @cached_property
    def _sat(self) -> np.ndarray:
        s = np.zeros((self.spec.width + 1, self.spec.height + 1))
        s[1:, 1:] = self.mass.cumsum(0).cumsum(1)
        return s

    def _index_range(self, lo, hi, origin, n):
        res = self.spec.resolution
        kmin = np.ceil((lo - origin) / res - 0.5).astype(int)
        kmax = np.floor((hi - origin) / res - 0.5).astype(int)
        return np.clip(kmin, 0, n), np.clip(kmax + 1, 0, n)

    def box_mass_many(self, xmin, ymin, xmax, ymax) -> np.ndarray:
        """Mass of cells whose centers lie in each closed box (vectorized)."""
        ox, oy = self.spec.origin
        i0, i1 = self._index_range(np.asarray(xmin, float), np.asarray(xmax, float),
                                   ox, self.spec.width)
        j0, j1 = self._index_range(np.asarray(ymin, float), np.asarray(ymax, float),
                                   oy, self.spec.height)
        i1 = np.maximum(i1, i0)
        j1 = np.maximum(j1, j0)
        s = self._sat
        out = s[i1, j1] - s[i0, j1] - s[i1, j0] + s[i0, j0]
        return np.clip(out, 0.0, 1.0)

    def mass_in_box(self, box: Box) -> float:
        return float(self.box_mass_many(box.xmin, box.ymin, box.xmax, box.ymax))

    def to_dict(self) -> dict:
        nz = np.argwhere(self.mass > 0)
        return {
            "origin": list(self.spec.origin),
            "resolution": self.spec.resolution,
            "width": self.spec.width,
            "height": self.spec.height,
            "cells": [[int(i), int(j), float(self.mass[i, j])] for i, j in nz],
            "escaped": self.escaped,
        }


@dataclass(frozen=True, eq=False)
class PredictionStack:
    """Occupancy grids for steps 1..horizon_steps after time ``t0``."""

    t0: float
    dt: float
    grids: Tuple[OccupancyGrid, ...]

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("prediction dt must be positive")
        object.__setattr__(self, "grids", tuple(self.grids))
        if self.grids and any(g.spec != self.grids[0].spec for g in self.grids):
            raise ValueError("all grids in a prediction stack must share a GridSpec")

    @property
    def horizon_steps(self) -> int:
        return len(self.grids)

    @property
    def spec(self) -> GridSpec:
        return self.grids[0].spec

    def steps_for_times(self, ts) -> np.ndarray:
        """Nearest prediction step for each time, ties toward the later step.

        Times before the first step map to step 1; 0 marks "beyond horizon".
        """
        ts = np.asarray(ts, dtype=float)
        tau = np.floor((ts - self.t0) / self.dt + 0.5).astype(int)
        tau = np.maximum(tau, 1)
        tau[tau > self.horizon_steps] = 0
        return tau

    def grid(self, step: int) -> OccupancyGrid:
        if not 1 <= step <= self.horizon_steps:
            raise IndexError(f"step {step} outside horizon 1..{self.horizon_steps}")
        return self.grids[step - 1]

    def to_dict(self) -> dict:
        return {"t0": self.t0, "dt": self.dt, "grids": [g.to_dict() for g in self.grids]}


@dataclass(frozen=True)
class Trajectory:
    samples: Tuple[PlanarState, ...]

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        if not self.samples:
            raise ValueError("trajectory must be nonempty")
        for a, b in zip(self.samples, self.samples[1:]):
            if not b.t > a.t:
                raise ValueError("trajectory times must be strictly increasing")

    def __len__(self):
        return len(self.samples)

    @property
    def first(self) -> PlanarState:
        return self.samples[0]

    @property
    def last(self) -> PlanarState:
        return self.samples[-1]

    def max_axis_speed(self) -> float:
        """Largest per-axis speed over consecutive samples."""
        v = 0.0
        for a, b in zip(self.samples, self.samples[1:]):
            dt = b.t - a.t
            v = max(v, abs(b.x - a.x) / dt, abs(b.y - a.y) / dt)
        return v

    def as_list(self):
        return [[s.x, s.y, s.t] for s in self.samples]

    @classmethod
    def from_list(cls, rows) -> "Trajectory":
        return cls(tuple(PlanarState(float(x), float(y), float(t)) for x, y, t in rows))
