"""Run configuration and checkpoint persistence.

One JSON document fully determines a run; unknown keys are rejected so a
typo never silently falls back to a default. Checkpoints store tensors as
base64 little-endian float64, which round-trips bitwise and stays
diffable at this parameter count.
"""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .env import DomainKind, EnvConfig, RewardConfig
from .errors import ConfigError
from .geometry import Rect
from .policy import PolicyParams
from .training import TrainConfig

CHECKPOINT_VERSION = 1


def _check_keys(data: dict, allowed: set[str], context: str) -> None:
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown key '{sorted(unknown)[0]}' in {context}")


def _env_to_dict(cfg: EnvConfig) -> dict:
    return {
        "bounds": [cfg.bounds.min_x, cfg.bounds.min_y, cfg.bounds.max_x, cfg.bounds.max_y],
        "horizon": cfg.horizon,
        "n_observed_obstacles": cfg.n_observed_obstacles,
        "agent_speed_range": list(cfg.agent_speed_range),
        "agent_radius_range": list(cfg.agent_radius_range),
        "obstacle_radius_range": list(cfg.obstacle_radius_range),
        "target_radius": cfg.target_radius,
        "obstacle_pursuit": cfg.obstacle_pursuit,
        "treat_inactive_targets_as_obstacles": cfg.treat_inactive_targets_as_obstacles,
        "far_sentinel_distance": cfg.far_sentinel_distance,
    }


def _env_from_dict(data: dict) -> EnvConfig:
    allowed = {f.name for f in fields(EnvConfig)}
    _check_keys(data, allowed, "env config")
    kwargs = dict(data)
    if "bounds" in kwargs:
        kwargs["bounds"] = Rect(*kwargs["bounds"])
    for key in ("agent_speed_range", "agent_radius_range", "obstacle_radius_range"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    try:
        return EnvConfig(**kwargs)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"bad env config: {err}") from err


def _reward_from_dict(data: dict) -> RewardConfig:
    _check_keys(data, {f.name for f in fields(RewardConfig)}, "reward config")
    try:
        return RewardConfig(**data)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"bad reward config: {err}") from err


def _train_to_dict(cfg: TrainConfig) -> dict:
    out = {f.name: getattr(cfg, f.name) for f in fields(TrainConfig)}
    out["train_domain"] = cfg.train_domain.value
    return out


def parse_domain(name: str) -> DomainKind:
    try:
        return DomainKind(name)
    except ValueError:
        valid = ", ".join(d.value for d in DomainKind)
        raise ConfigError(f"unknown domain '{name}' (valid: {valid})") from None


def _train_from_dict(data: dict) -> TrainConfig:
    _check_keys(data, {f.name for f in fields(TrainConfig)}, "train config")
    kwargs = dict(data)
    if "train_domain" in kwargs:
        kwargs["train_domain"] = parse_domain(kwargs["train_domain"])
    try:
        return TrainConfig(**kwargs)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"bad train config: {err}") from err


@dataclass(frozen=True)
class EvalConfig:
    domains: tuple[DomainKind, ...] = (DomainKind.STATIC_SIMPLE, DomainKind.DYNAMIC,
                                       DomainKind.DYNAMIC_LARGE)
    seeds: tuple[int, ...] = (10, 11, 12)
    count: int = 100
    planners: tuple[str, ...] = ("baseline", "policy")

    def __post_init__(self) -> None:
        if self.count < 1:
            raise ValueError("count must be >= 1")
        for p in self.planners:
            if p not in ("baseline", "policy"):
                raise ValueError(f"unknown planner kind '{p}'")


def _eval_from_dict(data: dict) -> EvalConfig:
    _check_keys(data, {f.name for f in fields(EvalConfig)}, "eval config")
    kwargs = dict(data)
    if "domains" in kwargs:
        kwargs["domains"] = tuple(parse_domain(d) for d in kwargs["domains"])
    for key in ("seeds", "planners"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    try:
        return EvalConfig(**kwargs)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"bad eval config: {err}") from err


@dataclass(frozen=True)
class RunConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    out_dir: str = "runs/default"

    def to_dict(self) -> dict:
        return {
            "env": _env_to_dict(self.env),
            "reward": {f.name: getattr(self.reward, f.name) for f in fields(RewardConfig)},
            "train": _train_to_dict(self.train),
            "eval": {
                "domains": [d.value for d in self.eval.domains],
                "seeds": list(self.eval.seeds),
                "count": self.eval.count,
                "planners": list(self.eval.planners),
            },
            "paths": {"out_dir": self.out_dir},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        _check_keys(data, {"env", "reward", "train", "eval", "paths"}, "run config")
        paths = data.get("paths", {})
        _check_keys(paths, {"out_dir"}, "paths config")
        return cls(
            env=_env_from_dict(data.get("env", {})),
            reward=_reward_from_dict(data.get("reward", {})),
            train=_train_from_dict(data.get("train", {})),
            eval=_eval_from_dict(data.get("eval", {})),
            out_dir=paths.get("out_dir", "runs/default"),
        )

    def fingerprint(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def load_run_config(path: Path) -> RunConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as err:
        raise ConfigError(f"config {path} is not valid JSON: {err}") from err
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    return RunConfig.from_dict(data)


def save_run_config(config: RunConfig, path: Path) -> None:
    with open(path, "w") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


# --- checkpoints ---


@dataclass(frozen=True)
class Checkpoint:
    params: PolicyParams
    training_update: int
    master_seed: int
    config_fingerprint: str


def _encode_array(arr: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(arr, dtype="<f8").tobytes()).decode()


def _decode_array(text: str, shape: tuple[int, ...]) -> np.ndarray:
    data = np.frombuffer(base64.b64decode(text), dtype="<f8").astype(np.float64)
    expected = int(np.prod(shape))
    if data.size != expected:
        raise ConfigError(f"tensor has {data.size} values, expected {expected}")
    return data.reshape(shape)


_TENSOR_NAMES = ["w1", "b1", "w2", "b2", "w3", "b3"]


def save_checkpoint(ckpt: Checkpoint, path: Path) -> None:
    params = ckpt.params
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "dims": params.dims,
        "tensors": {name: _encode_array(arr)
                    for name, arr in zip(_TENSOR_NAMES, params.as_list()[:6])},
        "log_std": _encode_array(params.log_std),
        "training_update": ckpt.training_update,
        "master_seed": ckpt.master_seed,
        "config_fingerprint": ckpt.config_fingerprint,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path: Path) -> Checkpoint:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as err:
        raise ConfigError(f"checkpoint {path} is not valid JSON: {err}") from err
    version = doc.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ConfigError(
            f"checkpoint version {version} != supported version {CHECKPOINT_VERSION}")
    n_in, h1, h2, n_out = doc["dims"]
    shapes = [(n_in, h1), (h1,), (h1, h2), (h2,), (h2, n_out), (n_out,)]
    arrays = [_decode_array(doc["tensors"][name], shape)
              for name, shape in zip(_TENSOR_NAMES, shapes)]
    arrays.append(_decode_array(doc["log_std"], (n_out,)))
    return Checkpoint(
        params=PolicyParams.from_list(arrays),
        training_update=int(doc["training_update"]),
        master_seed=int(doc["master_seed"]),
        config_fingerprint=str(doc["config_fingerprint"]),
    )


# --- problem-set manifests ---


def save_manifest(domain: DomainKind, seed: int, count: int, env: EnvConfig,
                  path: Path) -> None:
    doc = {
        "domain_kind": domain.value,
        "seed": seed,
        "count": count,
        "env_config": _env_to_dict(env),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_manifest(path: Path) -> tuple[DomainKind, int, int, EnvConfig]:
    with open(path) as fh:
        doc = json.load(fh)
    _check_keys(doc, {"domain_kind", "seed", "count", "env_config"}, "manifest")
    return (parse_domain(doc["domain_kind"]), int(doc["seed"]), int(doc["count"]),
            _env_from_dict(doc["env_config"]))
