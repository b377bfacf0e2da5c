"""The MDP: transition, shaped reward, episode accounting, problem generators.

Three benchmark domains are generated here. Transitions are synchronous:
all agents displace at once, then pursuing obstacles advance toward their
assigned agent's new position, then collisions/targets/rewards are
accounted on the post-move state.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import GenerationError, NumericalError
from .geometry import (
    KIND_AGENT,
    KIND_TARGET,
    UNIT_SQUARE,
    AgentState,
    Obstacle,
    PseudoObstacle,
    Pursuit,
    Rect,
    Static,
    Target,
    Vec2,
    WorldState,
    distance,
    nearest_order,
)
from .rng import Stream

_MAX_PLACEMENT_ATTEMPTS = 1000


class DomainKind(enum.Enum):
    STATIC_SIMPLE = "static-simple"
    DYNAMIC = "dynamic"
    DYNAMIC_LARGE = "dynamic-large"


# (n_agents, n_targets) per domain; every domain has 10 obstacles.
_DOMAIN_SHAPE = {
    DomainKind.STATIC_SIMPLE: (1, 3),
    DomainKind.DYNAMIC: (3, 3),
    DomainKind.DYNAMIC_LARGE: (3, 10),
}
_N_OBSTACLES = 10


@dataclass(frozen=True)
class RewardConfig:
    """Weights of the shaped per-step reward."""

    alpha: float = 10.0   # weight on distance to the active target
    beta1: float = 1.0    # slope outside an obstacle's keep-out radius
    beta2: float = 100.0  # slope inside the keep-out radius

    def __post_init__(self) -> None:
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if not self.beta2 > self.beta1 >= 0:
            raise ValueError("need beta2 > beta1 >= 0")


@dataclass(frozen=True)
class EnvConfig:
    bounds: Rect = field(default_factory=lambda: UNIT_SQUARE)
    horizon: int = 600
    n_observed_obstacles: int = 10
    agent_speed_range: tuple[float, float] = (0.008, 0.012)
    agent_radius_range: tuple[float, float] = (0.015, 0.025)
    obstacle_radius_range: tuple[float, float] = (0.03, 0.08)
    target_radius: float = 0.02
    obstacle_pursuit: bool = False
    # In the large domain an agent's non-active targets are observed and
    # penalized as if they were obstacles.
    treat_inactive_targets_as_obstacles: bool = False
    far_sentinel_distance: float | None = None  # defaults to 2 * bounds diagonal

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        for name in ("agent_speed_range", "agent_radius_range", "obstacle_radius_range"):
            lo, hi = getattr(self, name)
            if not (0 < lo <= hi):
                raise ValueError(f"{name} must satisfy 0 < lo <= hi")
        if self.target_radius <= 0:
            raise ValueError("target_radius must be positive")
        if self.far_sentinel_distance is None:
            object.__setattr__(self, "far_sentinel_distance", 2.0 * self.bounds.diagonal)


def env_config_for(domain: DomainKind, base: EnvConfig | None = None) -> EnvConfig:
    """Domain preset: pursuit obstacles and target-as-obstacle pooling flags."""
    base = base if base is not None else EnvConfig()
    return replace(
        base,
        obstacle_pursuit=domain is not DomainKind.STATIC_SIMPLE,
        treat_inactive_targets_as_obstacles=domain is DomainKind.DYNAMIC_LARGE,
    )


@dataclass(frozen=True)
class Action:
    dx: float
    dy: float


@dataclass(frozen=True)
class StepEvents:
    rewards: tuple[float, ...]
    collisions_this_step: int
    targets_reached_this_step: int
    done: bool


@dataclass(frozen=True)
class ProblemInstance:
    initial_state: WorldState
    domain: DomainKind
    seed: int
    problem_index: int


def pseudo_obstacles_for(world: WorldState, agent_id: int,
                         config: EnvConfig) -> list[PseudoObstacle]:
    """Teammates always; the agent's non-active targets when configured."""
    agent = world.agents[world.agent_index(agent_id)]
    pool = [
        PseudoObstacle(KIND_AGENT, other.id, other.position, other.radius)
        for other in world.agents
        if other.id != agent_id
    ]
    if config.treat_inactive_targets_as_obstacles:
        active = agent.active_target_id
        pool.extend(
            PseudoObstacle(KIND_TARGET, t.id, t.position, t.radius)
            for t in world.targets
            if t.id != active
        )
    return pool


def candidate_arrays(world: WorldState, agent_index: int, config: EnvConfig
                     ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Obstacles plus pseudo-obstacles for one agent as flat (positions,
    radii, kinds, ids) arrays, memoized per world state.

    Candidates are listed obstacles-then-agents-then-targets, ids ascending
    within each kind, matching the distance tie-break order.
    """
    include_targets = config.treat_inactive_targets_as_obstacles
    cache = world.__dict__.setdefault("_candidate_cache", {})
    key = (agent_index, include_targets)
    hit = cache.get(key)
    if hit is not None:
        return hit
    if len(world.agents) == 1 and not include_targets:
        result = (world.obstacle_positions, world.obstacle_radii,
                  np.zeros(len(world.obstacles), dtype=np.int64), world.obstacle_ids)
        cache[key] = result
        return result
    parts_pos = [world.obstacle_positions]
    parts_rad = [world.obstacle_radii]
    parts_kind = [np.zeros(len(world.obstacles), dtype=np.int64)]
    parts_id = [world.obstacle_ids]
    if len(world.agents) > 1:
        mask = np.ones(len(world.agents), dtype=bool)
        mask[agent_index] = False
        parts_pos.append(world.agent_positions[mask])
        parts_rad.append(world.agent_radii[mask])
        parts_kind.append(np.full(int(mask.sum()), KIND_AGENT, dtype=np.int64))
        parts_id.append(world.agent_ids[mask])
    if include_targets and len(world.targets) > 0:
        active = world.agents[agent_index].active_target_id
        tids = world.target_ids
        tmask = tids != active if active is not None else np.ones(len(tids), dtype=bool)
        parts_pos.append(world.target_positions[tmask])
        parts_rad.append(world.target_radii[tmask])
        parts_kind.append(np.full(int(tmask.sum()), KIND_TARGET, dtype=np.int64))
        parts_id.append(tids[tmask])
    result = (np.concatenate(parts_pos), np.concatenate(parts_rad),
              np.concatenate(parts_kind), np.concatenate(parts_id))
    cache[key] = result
    return result


def nearest_candidates(world: WorldState, agent_index: int, config: EnvConfig
                       ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Candidate (positions, radii, sort order, distances) for one agent,
    memoized per world state; the reward and the observation encoder see
    the identical ranking by construction."""
    cache = world.__dict__.setdefault("_nearest_cache", {})
    key = (agent_index, config.treat_inactive_targets_as_obstacles)
    hit = cache.get(key)
    if hit is not None:
        return hit
    positions, radii, kinds, ids = candidate_arrays(world, agent_index, config)
    agent = world.agents[agent_index]
    if positions.shape[0] > 0:
        order, dists = nearest_order(
            np.array((agent.position.x, agent.position.y)), positions, kinds, ids)
    else:
        order = np.empty(0, dtype=np.int64)
        dists = np.empty(0, dtype=np.float64)
    result = (positions, radii, order, dists)
    cache[key] = result
    return result


def reward(world: WorldState, agent_id: int, reward_config: RewardConfig,
           env_config: EnvConfig) -> float:
    """Shaped reward: target-distance attraction plus keep-out penalties.

    The penalty sum runs over the N nearest observed obstacles (real plus
    pseudo); when fewer exist, the remaining slots contribute the constant
    outside-slope term at the far sentinel distance, which keeps the term
    count fixed without changing action preferences.
    """
    idx = world.agent_index(agent_id)
    agent = world.agents[idx]
    total = 0.0
    if not agent.exhausted:
        target = world.target_by_id(agent.active_target_id)
        total -= reward_config.alpha * distance(agent.position, target.position)
    n = env_config.n_observed_obstacles
    if n <= 0:
        return total
    positions, radii, order, dists = nearest_candidates(world, idx, env_config)
    taken = 0
    if order.shape[0] > 0:
        take = order[: min(n, len(order))]
        taken = len(take)
        margin = dists[take] - radii[take]
        slopes = np.where(margin >= 0.0, reward_config.beta1, reward_config.beta2)
        total += float((slopes * margin).sum())
    if taken < n:
        total += (n - taken) * reward_config.beta1 * env_config.far_sentinel_distance
    return total


def step(world: WorldState, actions: Sequence[Action], config: EnvConfig,
         reward_config: RewardConfig) -> tuple[WorldState, StepEvents]:
    """Advance the world by one synchronous time step.

    Actions longer than an agent's per-step speed are rescaled to that
    magnitude. Collisions do not displace or terminate; they are counted
    per overlapping pair per step.
    """
    if len(actions) != len(world.agents):
        raise ValueError(
            f"expected {len(world.agents)} actions, got {len(actions)}")

    bounds = world.bounds
    moved: list[Vec2] = []
    for agent, act in zip(world.agents, actions):
        if not (math.isfinite(act.dx) and math.isfinite(act.dy)):
            raise NumericalError(
                f"non-finite action for agent {agent.id} at time step {world.time_step}")
        dx, dy = act.dx, act.dy
        norm = math.hypot(dx, dy)
        if norm > agent.speed:
            scale = agent.speed / norm
            dx *= scale
            dy *= scale
        # clamp_to_bounds, inlined for the hot loop
        x = agent.position.x + dx
        y = agent.position.y + dy
        x = bounds.min_x if x < bounds.min_x else (bounds.max_x if x > bounds.max_x else x)
        y = bounds.min_y if y < bounds.min_y else (bounds.max_y if y > bounds.max_y else y)
        moved.append(Vec2(x, y))

    if world.has_pursuit:
        new_obstacles = []
        for o in world.obstacles:
            if isinstance(o.behavior, Pursuit):
                chased = moved[world.agent_index(o.behavior.agent_id)]
                gap = distance(o.position, chased)
                if gap > 0.0:
                    frac = min(o.behavior.speed, gap) / gap
                    pos = Vec2(o.position.x + frac * (chased.x - o.position.x),
                               o.position.y + frac * (chased.y - o.position.y))
                    o = replace(o, position=clamp_to_bounds(pos, world.bounds))
            new_obstacles.append(o)
        new_obstacles = tuple(new_obstacles)
    else:
        new_obstacles = world.obstacles

    reached = 0
    new_agents = []
    for agent, pos in zip(world.agents, moved):
        cursor = agent.current_target_cursor
        if cursor < len(agent.target_sequence):
            target = world.target_by_id(agent.target_sequence[cursor])
            if distance(pos, target.position) <= target.radius:
                cursor += 1
                reached += 1
        new_agents.append(AgentState(agent.id, pos, agent.speed, agent.radius,
                                     agent.target_sequence, cursor, cursor))

    new_world = WorldState(
        time_step=world.time_step + 1,
        agents=tuple(new_agents),
        targets=world.targets,
        obstacles=new_obstacles,
        bounds=world.bounds,
    )
    # Entity data that was carried over keeps its cached numpy mirrors.
    carry = new_world.__dict__
    carry["target_positions"] = world.target_positions
    carry["target_radii"] = world.target_radii
    carry["target_ids"] = world.target_ids
    carry["_targets_by_id"] = world._targets_by_id
    carry["agent_radii"] = world.agent_radii
    carry["agent_ids"] = world.agent_ids
    carry["has_pursuit"] = world.has_pursuit
    carry["obstacle_radii"] = world.obstacle_radii
    carry["obstacle_ids"] = world.obstacle_ids
    if new_obstacles is world.obstacles:
        carry["obstacle_positions"] = world.obstacle_positions

    # Collision counting on post-move positions, one per overlapping pair.
    collisions = 0
    if new_obstacles:
        delta = new_world.agent_positions[:, None, :] - new_world.obstacle_positions[None, :, :]
        dists = np.hypot(delta[..., 0], delta[..., 1])
        collisions += int(np.sum(
            dists < new_world.obstacle_radii[None, :] + new_world.agent_radii[:, None]))
    for i in range(len(moved)):
        for j in range(i + 1, len(moved)):
            if distance(moved[i], moved[j]) < world.agents[i].radius + world.agents[j].radius:
                collisions += 1

    rewards = tuple(reward(new_world, a.id, reward_config, config) for a in new_agents)
    done = new_world.time_step >= config.horizon or all(a.exhausted for a in new_agents)
    return new_world, StepEvents(rewards, collisions, reached, done)


# --- problem generators ---


def _sample_point(rng: Stream, bounds: Rect) -> Vec2:
    return Vec2(rng.uniform(bounds.min_x, bounds.max_x),
                rng.uniform(bounds.min_y, bounds.max_y))


def _generate(domain: DomainKind, seed: int, problem_index: int, config: EnvConfig,
              stream: str) -> ProblemInstance:
    rng = Stream.for_tag(f"{stream}/{domain.value}", seed, problem_index)
    n_agents, n_targets = _DOMAIN_SHAPE[domain]
    pursuit = domain is not DomainKind.STATIC_SIMPLE

    agents_raw = []
    for i in range(n_agents):
        pos = _sample_point(rng, config.bounds)
        speed = rng.uniform(*config.agent_speed_range)
        radius = rng.uniform(*config.agent_radius_range)
        agents_raw.append((i, pos, speed, radius))

    targets = tuple(
        Target(j, _sample_point(rng, config.bounds), config.target_radius)
        for j in range(n_targets)
    )

    agents = tuple(
        AgentState(i, pos, speed, radius, target_sequence=rng.permutation(n_targets))
        for i, pos, speed, radius in agents_raw
    )

    obstacles = []
    for o in range(_N_OBSTACLES):
        for _ in range(_MAX_PLACEMENT_ATTEMPTS):
            pos = _sample_point(rng, config.bounds)
            radius = rng.uniform(*config.obstacle_radius_range)
            clear = all(
                distance(pos, t.position) >= radius + t.radius for t in targets
            ) and all(
                distance(pos, a.position) >= radius + a.radius for a in agents
            )
            if clear:
                break
        else:
            raise GenerationError(
                f"could not place obstacle {o} after {_MAX_PLACEMENT_ATTEMPTS} attempts "
                f"(domain={domain.value}, seed={seed}, index={problem_index})")
        if pursuit:
            chased = rng.randrange(n_agents)
            behavior = Pursuit(speed=agents[chased].speed, agent_id=chased)
        else:
            behavior = Static()
        obstacles.append(Obstacle(o, pos, radius, behavior))

    world = WorldState(0, agents, targets, tuple(obstacles), config.bounds)
    return ProblemInstance(world, domain, seed, problem_index)


def gen_static_simple(seed: int, problem_index: int, config: EnvConfig | None = None,
                      stream: str = "problems") -> ProblemInstance:
    """1 agent, 3 targets in random order, 10 static obstacles."""
    return _generate(DomainKind.STATIC_SIMPLE, seed, problem_index,
                     config if config is not None else EnvConfig(), stream)


def gen_dynamic(seed: int, problem_index: int, config: EnvConfig | None = None,
                stream: str = "problems") -> ProblemInstance:
    """3 agents, 3 shared targets in per-agent random order, 10 pursuing obstacles.

    Each obstacle is bound to one agent at generation time and matches that
    agent's speed.
    """
    return _generate(DomainKind.DYNAMIC, seed, problem_index,
                     config if config is not None else EnvConfig(), stream)


def gen_dynamic_large(seed: int, problem_index: int, config: EnvConfig | None = None,
                      stream: str = "problems") -> ProblemInstance:
    """As gen_dynamic but with 10 targets per agent; run with the
    treat_inactive_targets_as_obstacles preset."""
    return _generate(DomainKind.DYNAMIC_LARGE, seed, problem_index,
                     config if config is not None else EnvConfig(), stream)


_GENERATORS = {
    DomainKind.STATIC_SIMPLE: gen_static_simple,
    DomainKind.DYNAMIC: gen_dynamic,
    DomainKind.DYNAMIC_LARGE: gen_dynamic_large,
}


def generate_problem(domain: DomainKind, seed: int, problem_index: int,
                     config: EnvConfig | None = None,
                     stream: str = "problems") -> ProblemInstance:
    return _GENERATORS[domain](seed, problem_index, config, stream)
