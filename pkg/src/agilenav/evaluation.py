"""Benchmark harness: per-episode metrics, planner comparison, learning curves.

Evaluation is fully deterministic: the policy planner uses mean actions,
the baseline has no parameters, and problem instances regenerate from
(domain, seed, index). Episodes are independent, so worker count never
changes results.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

from .baseline import target_to_target
from .env import (
    Action,
    DomainKind,
    EnvConfig,
    ProblemInstance,
    RewardConfig,
    env_config_for,
    generate_problem,
    step,
)
from .geometry import WorldState
from .policy import PolicyParams, encode_observation, mean_array
from .training import fmt17

SCORE_TARGET_WEIGHT = 10

# Maximum target arrivals available per episode, used for cross-domain
# score normalization: agents x targets.
AVAILABLE_TARGETS = {
    DomainKind.STATIC_SIMPLE: 3,
    DomainKind.DYNAMIC: 9,
    DomainKind.DYNAMIC_LARGE: 30,
}


def weighted_score(n_targets: int, n_collisions: int) -> int:
    """Episode quality: ten points per arrival minus one per collision."""
    if n_targets < 0 or n_collisions < 0:
        raise ValueError("counts must be non-negative")
    return SCORE_TARGET_WEIGHT * n_targets - n_collisions


@dataclass(frozen=True)
class EpisodeMetrics:
    n_collisions: int
    n_targets: int
    score: int
    steps_executed: int

    def __post_init__(self) -> None:
        if self.score != weighted_score(self.n_targets, self.n_collisions):
            raise ValueError("score inconsistent with counts")


class Planner(Protocol):
    name: str

    def actions(self, world: WorldState, config: EnvConfig) -> list[Action]: ...


class BaselinePlanner:
    """Straight to the active target, blind to obstacles."""

    name = "baseline"

    def actions(self, world: WorldState, config: EnvConfig) -> list[Action]:
        acts = []
        for agent in world.agents:
            if agent.exhausted:
                acts.append(Action(0.0, 0.0))
            else:
                target = world.target_by_id(agent.active_target_id)
                acts.append(target_to_target(agent.position, target.position,
                                             agent.speed))
        return acts


class PolicyPlanner:
    """Mean policy action per agent, scaled into that agent's speed units."""

    name = "policy"

    def __init__(self, params: PolicyParams) -> None:
        self.params = params

    def actions(self, world: WorldState, config: EnvConfig) -> list[Action]:
        acts = []
        for agent in world.agents:
            obs = encode_observation(world, agent.id, config)
            raw = mean_array(self.params, obs)
            acts.append(Action(raw[0] * agent.speed, raw[1] * agent.speed))
        return acts


def run_episode(planner: Planner, instance: ProblemInstance,
                env_config: EnvConfig | None = None,
                reward_config: RewardConfig | None = None) -> EpisodeMetrics:
    """Simulate one instance to completion and accumulate metrics."""
    env_config = env_config if env_config is not None else env_config_for(instance.domain)
    reward_config = reward_config if reward_config is not None else RewardConfig()
    world = instance.initial_state
    collisions = 0
    targets = 0
    steps = 0
    while True:
        world, events = step(world, planner.actions(world, env_config),
                             env_config, reward_config)
        collisions += events.collisions_this_step
        targets += events.targets_reached_this_step
        steps += 1
        if events.done:
            return EpisodeMetrics(collisions, targets,
                                  weighted_score(targets, collisions), steps)


@dataclass(frozen=True)
class CellStats:
    mean_collisions: float
    std_collisions: float
    mean_targets: float
    std_targets: float
    mean_score: float
    std_score: float


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    n = len(values)
    mean = sum(values) / n
    if n < 2:
        return mean, 0.0
    return mean, math.sqrt(sum((v - mean) ** 2 for v in values) / (n - 1))


@dataclass
class BenchmarkReport:
    """Per-(domain, seed, planner) episode lists plus derived statistics."""

    cells: dict[tuple[DomainKind, int, str], list[EpisodeMetrics]]

    def stats(self, domain: DomainKind, seed: int, planner: str) -> CellStats:
        episodes = self.cells[(domain, seed, planner)]
        mc, sc = _mean_std([e.n_collisions for e in episodes])
        mt, st = _mean_std([e.n_targets for e in episodes])
        ms, ss = _mean_std([e.score for e in episodes])
        return CellStats(mc, sc, mt, st, ms, ss)


def _episode_runner(planner, domain, seed, base_env, reward_config):
    env_cfg = env_config_for(domain, base_env)

    def run(index: int) -> EpisodeMetrics:
        instance = generate_problem(domain, seed, index, env_cfg)
        return run_episode(planner, instance, env_cfg, reward_config)

    return run


def run_benchmark(domains: Sequence[DomainKind], seeds: Sequence[int],
                  planners: Sequence[Planner], count: int = 100,
                  env_config: EnvConfig | None = None,
                  reward_config: RewardConfig | None = None,
                  threads: int = 1) -> BenchmarkReport:
    """Full cross product of domains x seeds x planners x problem indices."""
    base_env = env_config if env_config is not None else EnvConfig()
    reward_config = reward_config if reward_config is not None else RewardConfig()
    cells = {}
    for domain in domains:
        for seed in seeds:
            for planner in planners:
                run = _episode_runner(planner, domain, seed, base_env, reward_config)
                if threads > 1:
                    with ThreadPoolExecutor(max_workers=threads) as pool:
                        episodes = list(pool.map(run, range(count)))
                else:
                    episodes = [run(i) for i in range(count)]
                cells[(domain, seed, planner.name)] = episodes
    return BenchmarkReport(cells)


BENCHMARK_COLUMNS = ["domain", "seed", "planner", "problem_index", "n_collisions",
                     "n_targets", "score", "steps_executed"]


def write_benchmark_csv(report: BenchmarkReport, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(BENCHMARK_COLUMNS)
        for (domain, seed, planner) in sorted(
                report.cells, key=lambda k: (k[0].value, k[1], k[2])):
            for index, ep in enumerate(report.cells[(domain, seed, planner)]):
                writer.writerow([domain.value, seed, planner, index, ep.n_collisions,
                                 ep.n_targets, ep.score, ep.steps_executed])


CURVE_COLUMNS = ["training_update", "domain", "seed",
                 "mean_collisions", "std_collisions", "mean_targets", "std_targets",
                 "mean_score", "std_score",
                 "baseline_mean_collisions", "baseline_std_collisions",
                 "baseline_mean_targets", "baseline_std_targets",
                 "baseline_mean_score", "baseline_std_score"]


def evaluate_checkpoint_series(checkpoints: Sequence[tuple[int, PolicyParams]],
                               domain: DomainKind, seed: int, count: int,
                               env_config: EnvConfig | None = None,
                               reward_config: RewardConfig | None = None,
                               threads: int = 1) -> list[dict]:
    """Metric means/stds per checkpoint over one fixed problem set, with the
    (constant) baseline statistics alongside for reference."""
    base_env = env_config if env_config is not None else EnvConfig()
    reward_cfg = reward_config if reward_config is not None else RewardConfig()

    def cell(planner: Planner) -> CellStats:
        report = run_benchmark([domain], [seed], [planner], count, base_env,
                               reward_cfg, threads)
        return report.stats(domain, seed, planner.name)

    ref = cell(BaselinePlanner())
    rows = []
    for update, params in sorted(checkpoints, key=lambda cp: cp[0]):
        stats = cell(PolicyPlanner(params))
        rows.append({
            "training_update": update,
            "domain": domain.value,
            "seed": seed,
            "mean_collisions": stats.mean_collisions,
            "std_collisions": stats.std_collisions,
            "mean_targets": stats.mean_targets,
            "std_targets": stats.std_targets,
            "mean_score": stats.mean_score,
            "std_score": stats.std_score,
            "baseline_mean_collisions": ref.mean_collisions,
            "baseline_std_collisions": ref.std_collisions,
            "baseline_mean_targets": ref.mean_targets,
            "baseline_std_targets": ref.std_targets,
            "baseline_mean_score": ref.mean_score,
            "baseline_std_score": ref.std_score,
        })
    return rows


def write_curve_csv(rows: list[dict], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CURVE_COLUMNS)
        for row in rows:
            out = []
            for col in CURVE_COLUMNS:
                value = row[col]
                out.append(fmt17(value) if isinstance(value, float) else value)
            writer.writerow(out)
