"""Observation encoding and the diagonal-Gaussian policy network.

The network maps a fixed-arity observation to a 2-D action mean through
two tanh hidden layers; a state-independent learnable log-std supplies
exploration noise. Raw samples live in units of the acting agent's
per-step speed and are scaled/clipped downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .autodiff import Tape, Var
from .env import Action, EnvConfig, nearest_candidates
from .errors import NumericalError
from .geometry import Vec2, WorldState
from .rng import Stream

LOG_2PI = math.log(2.0 * math.pi)
HIDDEN = (64, 64)
INIT_LOG_STD = math.log(0.5)


def observation_dim(config: EnvConfig) -> int:
    return 4 + 4 * config.n_observed_obstacles


def encode_observation(world: WorldState, agent_id: int, config: EnvConfig) -> np.ndarray:
    """Fixed-length observation: agent, active target, N nearest keep-outs.

    Positions normalize to [0, 1] by the bounds extent; radii and distances
    normalize by the bounds diagonal. Missing obstacle slots pad with
    (0, 0, 0, far sentinel). An agent with an exhausted sequence observes
    its final target as a loiter point.
    """
    idx = world.agent_index(agent_id)
    agent = world.agents[idx]
    bounds = world.bounds
    width, height, diag = bounds.width, bounds.height, bounds.diagonal
    n = config.n_observed_obstacles
    out = np.empty(4 + 4 * n, dtype=np.float64)

    if agent.target_sequence:
        cursor = min(agent.current_target_cursor, len(agent.target_sequence) - 1)
        target_pos = world.target_by_id(agent.target_sequence[cursor]).position
    else:
        target_pos = agent.position
    out[0] = (agent.position.x - bounds.min_x) / width
    out[1] = (agent.position.y - bounds.min_y) / height
    out[2] = (target_pos.x - bounds.min_x) / width
    out[3] = (target_pos.y - bounds.min_y) / height

    if n == 0:
        return out
    positions, radii, order, dists = nearest_candidates(world, idx, config)
    m = 0
    body = out[4:]
    if order.shape[0] > 0:
        take = order[: min(n, len(order))]
        m = len(take)
        body[0: 4 * m: 4] = (positions[take, 0] - bounds.min_x) / width
        body[1: 4 * m: 4] = (positions[take, 1] - bounds.min_y) / height
        body[2: 4 * m: 4] = radii[take] / diag
        body[3: 4 * m: 4] = dists[take] / diag
    if m < n:
        body[4 * m:: 4] = 0.0
        body[4 * m + 1:: 4] = 0.0
        body[4 * m + 2:: 4] = 0.0
        body[4 * m + 3:: 4] = config.far_sentinel_distance / diag
    return out


@dataclass
class PolicyParams:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray
    log_std: np.ndarray

    def __post_init__(self) -> None:
        if not np.all(np.isfinite(self.log_std)):
            raise NumericalError("non-finite log_std")

    @property
    def dims(self) -> list[int]:
        return [self.w1.shape[0], self.w1.shape[1], self.w2.shape[1], self.w3.shape[1]]

    def as_list(self) -> list[np.ndarray]:
        return [self.w1, self.b1, self.w2, self.b2, self.w3, self.b3, self.log_std]

    @classmethod
    def from_list(cls, arrays: list[np.ndarray]) -> "PolicyParams":
        return cls(*arrays)

    @classmethod
    def init(cls, n_inputs: int, rng: Stream, hidden: tuple[int, int] = HIDDEN
             ) -> "PolicyParams":
        """Uniform fan-balanced weights, zero biases, log_std at log(0.5)."""
        def layer(n_in: int, n_out: int) -> np.ndarray:
            lim = math.sqrt(6.0 / (n_in + n_out))
            return np.array([rng.uniform(-lim, lim) for _ in range(n_in * n_out)],
                            dtype=np.float64).reshape(n_in, n_out)

        h1, h2 = hidden
        return cls(
            w1=layer(n_inputs, h1), b1=np.zeros(h1),
            w2=layer(h1, h2), b2=np.zeros(h2),
            w3=layer(h2, 2), b3=np.zeros(2),
            log_std=np.full(2, INIT_LOG_STD),
        )


class ActionSample(NamedTuple):
    action: Action
    log_prob: float


def mean_array(params: PolicyParams, obs: np.ndarray) -> np.ndarray:
    h1 = np.tanh(obs @ params.w1 + params.b1)
    h2 = np.tanh(h1 @ params.w2 + params.b2)
    out = h2 @ params.w3 + params.b3
    if not (math.isfinite(out[0]) and math.isfinite(out[1])):
        raise NumericalError("non-finite policy output")
    return out


def policy_mean(params: PolicyParams, obs: np.ndarray) -> Vec2:
    m = mean_array(params, obs)
    return Vec2(float(m[0]), float(m[1]))


def _log_prob_of(raw0: float, raw1: float, mean0: float, mean1: float,
                 ls0: float, ls1: float) -> float:
    z0 = (raw0 - mean0) * math.exp(-ls0)
    z1 = (raw1 - mean1) * math.exp(-ls1)
    return ((-ls0 - 0.5 * LOG_2PI - 0.5 * z0 * z0)
            + (-ls1 - 0.5 * LOG_2PI - 0.5 * z1 * z1))


def sample_action(params: PolicyParams, obs: np.ndarray, rng: Stream) -> ActionSample:
    """Draw from the Gaussian; the log-probability is of the raw sample."""
    mean = mean_array(params, obs)
    z0, z1 = rng.normal_pair()
    ls0, ls1 = float(params.log_std[0]), float(params.log_std[1])
    raw0 = float(mean[0]) + math.exp(ls0) * z0
    raw1 = float(mean[1]) + math.exp(ls1) * z1
    logp = _log_prob_of(raw0, raw1, float(mean[0]), float(mean[1]), ls0, ls1)
    return ActionSample(Action(raw0, raw1), logp)


def log_prob(params: PolicyParams, obs: np.ndarray, action: Action) -> float:
    mean = mean_array(params, obs)
    return _log_prob_of(action.dx, action.dy, float(mean[0]), float(mean[1]),
                        float(params.log_std[0]), float(params.log_std[1]))


def deterministic_action(params: PolicyParams, obs: np.ndarray) -> Action:
    m = mean_array(params, obs)
    return Action(float(m[0]), float(m[1]))


def build_weighted_logprob(tape: Tape, param_vars: list[Var], obs_matrix: np.ndarray,
                           action_matrix: np.ndarray, row_weights: np.ndarray) -> Var:
    """Tape graph for sum_rows w_row * log N(action_row | mean(obs_row), std).

    param_vars follow PolicyParams.as_list order. Inputs are constants;
    only the parameters receive gradients.
    """
    w1, b1, w2, b2, w3, b3, log_std = param_vars
    x = tape.constant(obs_matrix)
    h1 = tape.tanh(tape.affine(x, w1, b1))
    h2 = tape.tanh(tape.affine(h1, w2, b2))
    mu = tape.affine(h2, w3, b3)
    diff = tape.sub(tape.constant(action_matrix), mu)
    inv_var = tape.exp(tape.scale(log_std, -2.0))
    quad = tape.scale(tape.mul(tape.square(diff), inv_var), -0.5)
    penalty = tape.add(log_std, tape.constant(np.full(2, 0.5 * LOG_2PI)))
    logp = tape.sub(quad, penalty)
    weights = np.repeat(np.asarray(row_weights, dtype=np.float64)[:, None], 2, axis=1)
    return tape.sum(tape.mul(logp, tape.constant(weights)))


def fd_logprob_gradients(params: PolicyParams, obs: np.ndarray, action: np.ndarray,
                         h: float = 1e-5) -> list[np.ndarray]:
    """Central-difference gradient of the single-sample log-probability.

    Equivalent to perturbing one coordinate at a time, but perturbations of
    a layer's weights reuse the unchanged upstream activations so a full
    sweep over every coordinate stays fast.
    """
    w1, b1, w2, b2, w3, b3, log_std = params.as_list()
    z1 = obs @ w1 + b1
    h1 = np.tanh(z1)
    z2 = h1 @ w2 + b2
    h2 = np.tanh(z2)
    mu = h2 @ w3 + b3

    def logp_rows(mu_rows: np.ndarray, ls: np.ndarray = log_std) -> np.ndarray:
        diff = action[None, :] - mu_rows
        return np.sum(-ls - 0.5 * LOG_2PI - 0.5 * diff * diff * np.exp(-2.0 * ls),
                      axis=1)

    def from_z1(z1_rows):
        return from_z2(np.tanh(z1_rows) @ w2 + b2)

    def from_z2(z2_rows):
        return logp_rows(np.tanh(z2_rows) @ w3 + b3)

    def central(base_row: np.ndarray, bump_rows: np.ndarray, bump_cols: np.ndarray,
                bump_vals: np.ndarray, tail) -> np.ndarray:
        m = len(bump_rows)
        plus = np.tile(base_row, (m, 1))
        plus[np.arange(m), bump_cols] += h * bump_vals
        minus = np.tile(base_row, (m, 1))
        minus[np.arange(m), bump_cols] -= h * bump_vals
        return (tail(plus) - tail(minus)) / (2.0 * h)

    grads: list[np.ndarray] = []
    for w, base, upstream, tail in ((w1, z1, obs, from_z1), (w2, z2, h1, from_z2),
                                    (w3, mu, h2, logp_rows)):
        n_in, n_out = w.shape
        rows = np.repeat(np.arange(n_in), n_out)
        cols = np.tile(np.arange(n_out), n_in)
        g_w = central(base, rows, cols, upstream[rows], tail).reshape(n_in, n_out)
        cols_b = np.arange(n_out)
        g_b = central(base, cols_b, cols_b, np.ones(n_out), tail)
        grads.extend([g_w, g_b])

    g_ls = np.empty(2)
    for j in range(2):
        bump = np.zeros(2)
        bump[j] = h
        f_plus = logp_rows(mu[None, :], log_std + bump)[0]
        f_minus = logp_rows(mu[None, :], log_std - bump)[0]
        g_ls[j] = (f_plus - f_minus) / (2.0 * h)
    grads.append(g_ls)
    return grads
