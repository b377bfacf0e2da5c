"""Planar primitives and the entity types shared by the whole simulator.

All types are immutable after construction and safe to share across
threads. Distances are Euclidean; the world is an axis-aligned rectangle,
the unit square by default.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Sequence, Union

import numpy as np

from .errors import NumericalError

# Sort rank used to break exact distance ties deterministically.
KIND_OBSTACLE = 0
KIND_AGENT = 1
KIND_TARGET = 2


@dataclass(frozen=True)
class Vec2:
    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise NumericalError(f"non-finite coordinates ({self.x}, {self.y})")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=np.float64)


def distance(a: Vec2, b: Vec2) -> float:
    """Euclidean distance between two points."""
    return math.hypot(a.x - b.x, a.y - b.y)


@dataclass(frozen=True)
class Rect:
    min_x: float = 0.0
    min_y: float = 0.0
    max_x: float = 1.0
    max_y: float = 1.0

    def __post_init__(self) -> None:
        if not (self.min_x < self.max_x and self.min_y < self.max_y):
            raise ValueError("degenerate bounds")

    @cached_property
    def width(self) -> float:
        return self.max_x - self.min_x

    @cached_property
    def height(self) -> float:
        return self.max_y - self.min_y

    @cached_property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)

    def contains(self, p: Vec2) -> bool:
        return self.min_x <= p.x <= self.max_x and self.min_y <= p.y <= self.max_y


UNIT_SQUARE = Rect(0.0, 0.0, 1.0, 1.0)


def clamp_to_bounds(p: Vec2, bounds: Rect) -> Vec2:
    """Clamp each coordinate into the closed bounds interval. Idempotent."""
    return Vec2(
        min(max(p.x, bounds.min_x), bounds.max_x),
        min(max(p.y, bounds.min_y), bounds.max_y),
    )


@dataclass(frozen=True)
class Static:
    pass


@dataclass(frozen=True)
class Pursuit:
    """Chases one agent, re-targeting its current position every step."""

    speed: float
    agent_id: int

    def __post_init__(self) -> None:
        if self.speed <= 0:
            raise ValueError("pursuit speed must be positive")


Behavior = Union[Static, Pursuit]
STATIC = Static()


@dataclass(frozen=True)
class AgentState:
    id: int
    position: Vec2
    speed: float
    radius: float
    target_sequence: tuple[int, ...]
    current_target_cursor: int = 0
    targets_reached: int = 0

    def __post_init__(self) -> None:
        if self.speed <= 0:
            raise ValueError(f"agent {self.id}: speed must be positive")
        if self.radius < 0:
            raise ValueError(f"agent {self.id}: radius must be non-negative")
        if not 0 <= self.current_target_cursor <= len(self.target_sequence):
            raise ValueError(f"agent {self.id}: cursor out of range")
        if self.targets_reached != self.current_target_cursor:
            raise ValueError(f"agent {self.id}: targets_reached must equal cursor")

    @property
    def exhausted(self) -> bool:
        return self.current_target_cursor >= len(self.target_sequence)

    @property
    def active_target_id(self) -> int | None:
        if self.exhausted:
            return None
        return self.target_sequence[self.current_target_cursor]


@dataclass(frozen=True)
class Target:
    id: int
    position: Vec2
    radius: float

    def __post_init__(self) -> None:
        if self.radius <= 0:
            raise ValueError(f"target {self.id}: radius must be positive")


@dataclass(frozen=True)
class Obstacle:
    id: int
    position: Vec2
    radius: float
    behavior: Behavior = STATIC

    def __post_init__(self) -> None:
        if self.radius <= 0:
            raise ValueError(f"obstacle {self.id}: radius must be positive")


@dataclass(frozen=True)
class WorldState:
    """Full joint simulation state at one time step."""

    time_step: int
    agents: tuple[AgentState, ...]
    targets: tuple[Target, ...]
    obstacles: tuple[Obstacle, ...]
    bounds: Rect = field(default_factory=lambda: UNIT_SQUARE)

    def __post_init__(self) -> None:
        if self.time_step < 0:
            raise ValueError("time_step must be non-negative")
        x0, y0 = self.bounds.min_x, self.bounds.min_y
        x1, y1 = self.bounds.max_x, self.bounds.max_y
        for kind, entities in (("agent", self.agents), ("target", self.targets),
                               ("obstacle", self.obstacles)):
            ids = {e.id for e in entities}
            if len(ids) != len(entities):
                raise ValueError(f"duplicate {kind} ids")
            for e in entities:
                p = e.position
                if not (x0 <= p.x <= x1 and y0 <= p.y <= y1):
                    raise ValueError(f"{kind} {e.id} outside bounds")

    def agent_index(self, agent_id: int) -> int:
        for i, a in enumerate(self.agents):
            if a.id == agent_id:
                return i
        raise KeyError(f"no agent with id {agent_id}")

    def target_by_id(self, target_id: int) -> Target:
        target = self._targets_by_id.get(target_id)
        if target is None:
            raise KeyError(f"no target with id {target_id}")
        return target

    @cached_property
    def _targets_by_id(self) -> dict[int, Target]:
        return {t.id: t for t in self.targets}

    @cached_property
    def has_pursuit(self) -> bool:
        return any(isinstance(o.behavior, Pursuit) for o in self.obstacles)

    # numpy mirrors of the entity lists, built lazily once per state

    @cached_property
    def agent_positions(self) -> np.ndarray:
        return np.array([(a.position.x, a.position.y) for a in self.agents],
                        dtype=np.float64).reshape(len(self.agents), 2)

    @cached_property
    def agent_radii(self) -> np.ndarray:
        return np.array([a.radius for a in self.agents], dtype=np.float64)

    @cached_property
    def obstacle_positions(self) -> np.ndarray:
        return np.array([(o.position.x, o.position.y) for o in self.obstacles],
                        dtype=np.float64).reshape(len(self.obstacles), 2)

    @cached_property
    def obstacle_radii(self) -> np.ndarray:
        return np.array([o.radius for o in self.obstacles], dtype=np.float64)

    @cached_property
    def target_positions(self) -> np.ndarray:
        return np.array([(t.position.x, t.position.y) for t in self.targets],
                        dtype=np.float64).reshape(len(self.targets), 2)

    @cached_property
    def target_radii(self) -> np.ndarray:
        return np.array([t.radius for t in self.targets], dtype=np.float64)

    @cached_property
    def agent_ids(self) -> np.ndarray:
        return np.array([a.id for a in self.agents], dtype=np.int64)

    @cached_property
    def obstacle_ids(self) -> np.ndarray:
        return np.array([o.id for o in self.obstacles], dtype=np.int64)

    @cached_property
    def target_ids(self) -> np.ndarray:
        return np.array([t.id for t in self.targets], dtype=np.int64)


@dataclass(frozen=True)
class PseudoObstacle:
    """A non-obstacle entity injected into an agent's observed obstacle set."""

    kind: int
    id: int
    position: Vec2
    radius: float


class NearestEntry(NamedTuple):
    position: Vec2
    radius: float
    distance: float


def nearest_order(origin_xy: np.ndarray, positions: np.ndarray,
                  kinds: np.ndarray, ids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Indices sorted by distance to origin, ties by (kind, id). Returns (order, dists)."""
    delta = positions - origin_xy
    dists = np.hypot(delta[:, 0], delta[:, 1])
    order = np.lexsort((ids, kinds, dists))
    return order, dists


def nearest_k_obstacles(world: WorldState, origin: Vec2, k: int,
                        extra: Sequence[PseudoObstacle] = ()) -> list[NearestEntry]:
    """The k nearest of world.obstacles plus `extra`, ascending by distance.

    Returns fewer than k entries when fewer candidates exist; the caller
    pads. Exact-distance ties break by kind (obstacle < agent < target)
    then id, so downstream observations are deterministic.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    n_obs = len(world.obstacles)
    n_extra = len(extra)
    if n_obs + n_extra == 0:
        return []
    positions = np.empty((n_obs + n_extra, 2), dtype=np.float64)
    radii = np.empty(n_obs + n_extra, dtype=np.float64)
    kinds = np.empty(n_obs + n_extra, dtype=np.int64)
    ids = np.empty(n_obs + n_extra, dtype=np.int64)
    if n_obs:
        positions[:n_obs] = world.obstacle_positions
        radii[:n_obs] = world.obstacle_radii
        kinds[:n_obs] = KIND_OBSTACLE
        ids[:n_obs] = world.obstacle_ids
    for j, p in enumerate(extra):
        positions[n_obs + j] = (p.position.x, p.position.y)
        radii[n_obs + j] = p.radius
        kinds[n_obs + j] = p.kind
        ids[n_obs + j] = p.id
    order, dists = nearest_order(origin.as_array(), positions, kinds, ids)
    take = order[: min(k, len(order))]
    return [NearestEntry(Vec2(positions[i, 0], positions[i, 1]), float(radii[i]),
                         float(dists[i])) for i in take]
