"""REINFORCE training loop: stochastic rollouts, batch-mean advantages,
one Adam update per batch of fresh single-agent problems."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .autodiff import AdamState, Tape, adam_step, backward, grad_of
from .env import (
    Action,
    DomainKind,
    EnvConfig,
    ProblemInstance,
    RewardConfig,
    StepEvents,
    env_config_for,
    generate_problem,
    step,
)
from .errors import NumericalError
from .geometry import WorldState
from .policy import (
    PolicyParams,
    build_weighted_logprob,
    encode_observation,
    mean_array,
    observation_dim,
    sample_action,
)
from .rng import Stream

TRAIN_STREAM = "training"  # disjoint from the "problems" stream used for test sets


@dataclass
class TrainConfig:
    gamma: float = 0.99
    batch_size: int = 8
    total_updates: int = 4000
    learning_rate: float = 8e-3
    weight_decay: float = 1e-4
    checkpoint_every: int = 100
    train_domain: DomainKind = DomainKind.STATIC_SIMPLE
    master_seed: int = 10
    reward_to_go: bool = False       # per-step discounted tails instead of episode returns
    max_grad_norm: float | None = None

    def __post_init__(self) -> None:
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (advantages need a batch mean)")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if self.total_updates < 1:
            raise ValueError("total_updates must be >= 1")
        if self.checkpoint_every < 1:
            raise ValueError("checkpoint_every must be >= 1")


@dataclass
class Trajectory:
    """One agent's episode: per-step records plus the discounted return."""

    observations: list[np.ndarray] = field(default_factory=list)
    actions: list[np.ndarray] = field(default_factory=list)
    log_probs: list[float] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)
    episode_return: float = 0.0

    def __len__(self) -> int:
        return len(self.rewards)


@dataclass
class EpisodeRollout:
    trajectories: list[Trajectory]
    events: list[StepEvents]
    states: list[WorldState] | None
    steps_executed: int


def discounted_return(rewards: Sequence[float], gamma: float) -> float:
    if not 0.0 < gamma <= 1.0:
        raise ValueError("gamma must be in (0, 1]")
    total = 0.0
    weight = 1.0
    for r in rewards:
        total += weight * r
        weight *= gamma
    return total


def discounted_tails(rewards: Sequence[float], gamma: float) -> np.ndarray:
    """Reward-to-go from each step, discounted from that step onward."""
    out = np.empty(len(rewards))
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


def batch_advantages(returns: Sequence[float], batch_size: int) -> list[float]:
    """Per-episode return minus the batch mean."""
    if len(returns) != batch_size or batch_size < 2:
        raise ValueError("returns must hold exactly batch_size >= 2 entries")
    mean = sum(returns) / batch_size
    return [g - mean for g in returns]


def rollout(params: PolicyParams, instance: ProblemInstance, rng: Stream | None = None,
            mode: str = "stochastic", env_config: EnvConfig | None = None,
            reward_config: RewardConfig | None = None, gamma: float = 0.99,
            record_states: bool = False) -> EpisodeRollout:
    """Run one episode to completion, decentralized: every agent acts from
    its own observation with the shared parameters."""
    if mode not in ("stochastic", "deterministic"):
        raise ValueError(f"unknown rollout mode {mode!r}")
    if mode == "stochastic" and rng is None:
        raise ValueError("stochastic rollouts need an rng stream")
    env_config = env_config if env_config is not None else env_config_for(instance.domain)
    reward_config = reward_config if reward_config is not None else RewardConfig()

    world = instance.initial_state
    trajectories = [Trajectory() for _ in world.agents]
    events_log: list[StepEvents] = []
    states: list[WorldState] | None = [world] if record_states else None

    while True:
        actions = []
        for traj, agent in zip(trajectories, world.agents):
            obs = encode_observation(world, agent.id, env_config)
            if mode == "stochastic":
                sample = sample_action(params, obs, rng)
                raw = np.array([sample.action.dx, sample.action.dy])
                traj.log_probs.append(sample.log_prob)
            else:
                raw = mean_array(params, obs)
            traj.observations.append(obs)
            traj.actions.append(raw)
            actions.append(Action(raw[0] * agent.speed, raw[1] * agent.speed))
        world, events = step(world, actions, env_config, reward_config)
        for traj, r in zip(trajectories, events.rewards):
            traj.rewards.append(r)
        events_log.append(events)
        if record_states:
            states.append(world)
        if events.done:
            break

    for traj in trajectories:
        traj.episode_return = discounted_return(traj.rewards, gamma)
    return EpisodeRollout(trajectories, events_log, states, len(events_log))


@dataclass(frozen=True)
class UpdateStats:
    mean_return: float
    std_return: float
    grad_norm: float
    mean_advantage_abs: float


def policy_gradient_update(params: PolicyParams, batch: list[Trajectory],
                           adam: AdamState, config: TrainConfig
                           ) -> tuple[PolicyParams, AdamState, UpdateStats]:
    """One surrogate-loss gradient step over a batch of trajectories.

    The surrogate is -(1/B) * sum_episodes sum_t A * log_prob_t, with A the
    episode's centered return (or per-step discounted tails, centered by
    the batch-mean return, when reward_to_go is set).
    """
    if len(batch) != config.batch_size:
        raise ValueError("batch size mismatch")
    returns = [traj.episode_return for traj in batch]
    advantages = batch_advantages(returns, config.batch_size)

    obs_rows, act_rows, weight_rows = [], [], []
    for traj, adv in zip(batch, advantages):
        obs_rows.extend(traj.observations)
        act_rows.extend(traj.actions)
        if config.reward_to_go:
            mean_return = sum(returns) / len(returns)
            weight_rows.extend(discounted_tails(traj.rewards, config.gamma) - mean_return)
        else:
            weight_rows.extend([adv] * len(traj))
    obs_matrix = np.asarray(obs_rows)
    act_matrix = np.asarray(act_rows)
    weights = np.asarray(weight_rows) * (-1.0 / config.batch_size)

    tape = Tape()
    param_list = params.as_list()
    param_vars = [tape.leaf(p) for p in param_list]
    loss = build_weighted_logprob(tape, param_vars, obs_matrix, act_matrix, weights)
    if not math.isfinite(float(loss.value)):
        raise NumericalError("non-finite surrogate loss")
    grad_table = backward(loss)
    grads = [grad_of(grad_table, v) for v in param_vars]

    grad_norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if config.max_grad_norm is not None and grad_norm > config.max_grad_norm:
        scale = config.max_grad_norm / grad_norm
        grads = [g * scale for g in grads]

    new_params = PolicyParams.from_list(adam_step(param_list, grads, adam))
    n = len(batch)
    mean_ret = sum(returns) / n
    std_ret = math.sqrt(sum((g - mean_ret) ** 2 for g in returns) / (n - 1))
    stats = UpdateStats(mean_ret, std_ret, grad_norm,
                        sum(abs(a) for a in advantages) / n)
    return new_params, adam, stats


LOG_COLUMNS = ["update_index", "mean_return", "std_return", "grad_norm",
               "mean_advantage_abs"]


@dataclass
class TrainResult:
    params: PolicyParams
    log_rows: list[dict]
    checkpoint_updates: list[int]


def init_policy(master_seed: int, env_config: EnvConfig) -> PolicyParams:
    return PolicyParams.init(observation_dim(env_config),
                             Stream.for_tag("policy-init", master_seed))


def training_instance(config: TrainConfig, env_config: EnvConfig, update_index: int,
                      slot: int) -> ProblemInstance:
    """Fresh problem for one batch slot; the stream tag keeps training
    instances disjoint from every evaluation problem set."""
    problem_index = (update_index - 1) * config.batch_size + slot
    return generate_problem(config.train_domain, config.master_seed, problem_index,
                            env_config, stream=TRAIN_STREAM)


def train(config: TrainConfig, env_config: EnvConfig | None = None,
          reward_config: RewardConfig | None = None,
          save_checkpoint=None, on_update=None,
          start_params: PolicyParams | None = None,
          start_update: int = 0) -> TrainResult:
    """Run the full training loop.

    `save_checkpoint(params, update_index)` is called at update 0 (the
    untrained policy) and every `checkpoint_every` updates thereafter.
    `on_update(update_index, stats, wall_ms)` receives per-update timing,
    which is kept out of the deterministic log rows.
    """
    base = env_config if env_config is not None else EnvConfig()
    env_cfg = env_config_for(config.train_domain, base)
    reward_cfg = reward_config if reward_config is not None else RewardConfig()

    params = start_params if start_params is not None else init_policy(
        config.master_seed, env_cfg)
    adam = AdamState.init(params.as_list(), learning_rate=config.learning_rate,
                          weight_decay=config.weight_decay)
    checkpoint_updates = []
    if save_checkpoint is not None and start_update == 0:
        save_checkpoint(params, 0)
        checkpoint_updates.append(0)

    log_rows: list[dict] = []
    for update in range(start_update + 1, config.total_updates + 1):
        t0 = time.perf_counter()
        batch = []
        for slot in range(config.batch_size):
            instance = training_instance(config, env_cfg, update, slot)
            noise = Stream.for_tag("rollout-noise", config.master_seed, update, slot)
            ep = rollout(params, instance, noise, "stochastic", env_cfg, reward_cfg,
                         gamma=config.gamma)
            batch.append(ep.trajectories[0])
        try:
            params, adam, stats = policy_gradient_update(params, batch, adam, config)
        except NumericalError as err:
            raise NumericalError(f"update {update}: {err}") from err
        wall_ms = (time.perf_counter() - t0) * 1e3
        row = {
            "update_index": update,
            "mean_return": stats.mean_return,
            "std_return": stats.std_return,
            "grad_norm": stats.grad_norm,
            "mean_advantage_abs": stats.mean_advantage_abs,
        }
        log_rows.append(row)
        if on_update is not None:
            on_update(update, stats, wall_ms)
        if save_checkpoint is not None and update % config.checkpoint_every == 0:
            save_checkpoint(params, update)
            checkpoint_updates.append(update)
    return TrainResult(params, log_rows, checkpoint_updates)


def fmt17(x: float) -> str:
    return f"{float(x):.17g}"


def write_training_log(rows: list[dict], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LOG_COLUMNS)
        for row in rows:
            writer.writerow([row["update_index"]] +
                            [fmt17(row[c]) for c in LOG_COLUMNS[1:]])
