"""Continuous 2-D multi-agent motion planning: environment, policy-gradient
trainer, and benchmark harness."""

from .env import (
    Action,
    DomainKind,
    EnvConfig,
    ProblemInstance,
    RewardConfig,
    StepEvents,
    env_config_for,
    gen_dynamic,
    gen_dynamic_large,
    gen_static_simple,
    generate_problem,
    reward,
    step,
)
from .geometry import (
    AgentState,
    Obstacle,
    Pursuit,
    Rect,
    Static,
    Target,
    Vec2,
    WorldState,
    clamp_to_bounds,
    distance,
    nearest_k_obstacles,
)
from .policy import PolicyParams, encode_observation, observation_dim
from .training import TrainConfig, Trajectory, train

__version__ = "0.1.0"
