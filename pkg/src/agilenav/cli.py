"""Command-line entry point: train, eval, rollout, gradcheck, gen-problems.

Exit codes: 0 success, 1 usage/config error, 2 numerical hard error,
3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .autodiff import Tape, backward, grad_of, relative_error
from .config import (
    Checkpoint,
    RunConfig,
    load_checkpoint,
    load_run_config,
    parse_domain,
    save_checkpoint,
    save_manifest,
    save_run_config,
    _env_from_dict,
    _env_to_dict,
    _reward_from_dict,
)
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
from .errors import ConfigError, GenerationError, NumericalError
from .evaluation import (
    BaselinePlanner,
    Planner,
    PolicyPlanner,
    run_benchmark,
    write_benchmark_csv,
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
)
from .policy import (
    PolicyParams,
    build_weighted_logprob,
    fd_logprob_gradients,
    observation_dim,
)
from .rng import Stream
from .training import TrainConfig, fmt17, train

GRADCHECK_TOL = 1e-6


class _Parser(argparse.ArgumentParser):
    """argparse defaults to exit code 2 on usage errors; we reserve 2 for
    numerical failures, so remap to 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _load_run(args) -> RunConfig:
    run = load_run_config(Path(args.config)) if args.config else RunConfig()
    if getattr(args, "seed", None) is not None:
        run = replace(run, train=replace(run.train, master_seed=args.seed))
    if getattr(args, "out", None) is not None:
        run = replace(run, out_dir=args.out)
    return run


def _latest_checkpoint(ckpt_dir: Path) -> Path | None:
    candidates = sorted(ckpt_dir.glob("ckpt_*.json"))
    return candidates[-1] if candidates else None


def checkpoint_path(ckpt_dir: Path, update: int) -> Path:
    return ckpt_dir / f"ckpt_{update:06d}.json"


def cmd_train(args) -> int:
    run = _load_run(args)
    out = Path(run.out_dir)
    ckpt_dir = out / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    fingerprint = run.fingerprint()
    save_run_config(run, out / "config.json")

    start_params = None
    start_update = 0
    if args.resume:
        latest = _latest_checkpoint(ckpt_dir)
        if latest is not None:
            ck = load_checkpoint(latest)
            start_params = ck.params
            start_update = ck.training_update
            print(f"resuming from update {start_update} ({latest})")

    def save(params: PolicyParams, update: int) -> None:
        save_checkpoint(Checkpoint(params, update, run.train.master_seed, fingerprint),
                        checkpoint_path(ckpt_dir, update))

    log_path = out / "training_log.csv"
    timing_path = out / "timing.csv"
    fresh = start_update == 0 or not log_path.exists()
    log_fh = open(log_path, "w" if fresh else "a", newline="")
    timing_fh = open(timing_path, "w" if fresh else "a", newline="")
    log_writer = csv.writer(log_fh)
    timing_writer = csv.writer(timing_fh)
    if fresh:
        log_writer.writerow(["update_index", "mean_return", "std_return", "grad_norm",
                             "mean_advantage_abs"])
        timing_writer.writerow(["update_index", "wall_ms"])

    def on_update(update, stats, wall_ms) -> None:
        log_writer.writerow([update, fmt17(stats.mean_return), fmt17(stats.std_return),
                             fmt17(stats.grad_norm), fmt17(stats.mean_advantage_abs)])
        timing_writer.writerow([update, f"{wall_ms:.3f}"])
        if update % 100 == 0:
            log_fh.flush()
            print(f"update {update}/{run.train.total_updates} "
                  f"mean_return={stats.mean_return:.3f}")

    try:
        train(run.train, run.env, run.reward, save_checkpoint=save,
              on_update=on_update, start_params=start_params,
              start_update=start_update)
    finally:
        log_fh.close()
        timing_fh.close()
    print(f"training complete; artifacts under {out}")
    return 0


def _planner_from_args(args, env_cfg: EnvConfig) -> Planner:
    if args.checkpoint and args.planner:
        raise ConfigError("give either --checkpoint or --planner, not both")
    if args.checkpoint:
        ck = load_checkpoint(Path(args.checkpoint))
        expected = observation_dim(env_cfg)
        if ck.params.dims[0] != expected:
            raise ConfigError(
                f"checkpoint expects {ck.params.dims[0]} observation inputs, "
                f"config implies {expected}")
        return PolicyPlanner(ck.params)
    if args.planner != "baseline":
        raise ConfigError(f"unknown planner '{args.planner}' (valid: baseline)")
    return BaselinePlanner()


def cmd_eval(args) -> int:
    run = load_run_config(Path(args.config)) if args.config else RunConfig()
    domain = parse_domain(args.domain)
    env_cfg = env_config_for(domain, run.env)
    planner = _planner_from_args(args, env_cfg)
    report = run_benchmark([domain], [args.seed], [planner], args.count,
                           run.env, run.reward, threads=args.threads)
    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    write_benchmark_csv(report, out)
    stats = report.stats(domain, args.seed, planner.name)
    print(f"{domain.value} seed={args.seed} planner={planner.name}: "
          f"collisions={stats.mean_collisions:.2f} targets={stats.mean_targets:.2f} "
          f"score={stats.mean_score:.2f}")
    return 0


# --- trajectory dumps ---


def _behavior_doc(o: Obstacle) -> dict:
    if isinstance(o.behavior, Pursuit):
        return {"kind": "pursuit", "speed": o.behavior.speed,
                "agent_id": o.behavior.agent_id}
    return {"kind": "static"}


def dump_episode(planner: Planner, instance: ProblemInstance, env_cfg: EnvConfig,
                 reward_cfg: RewardConfig, path: Path) -> int:
    """Write one episode as JSON Lines: initial state, then one record per
    step with actions, post-move positions, rewards, and event counts."""
    world = instance.initial_state
    header = {
        "t": 0,
        "domain": instance.domain.value,
        "seed": instance.seed,
        "problem_index": instance.problem_index,
        "planner": planner.name,
        "env_config": _env_to_dict(env_cfg),
        "reward_config": {"alpha": reward_cfg.alpha, "beta1": reward_cfg.beta1,
                          "beta2": reward_cfg.beta2},
        "agents": [{"id": a.id, "x": a.position.x, "y": a.position.y,
                    "radius": a.radius, "speed": a.speed,
                    "target_sequence": list(a.target_sequence),
                    "cursor": a.current_target_cursor} for a in world.agents],
        "targets": [{"id": t.id, "x": t.position.x, "y": t.position.y,
                     "radius": t.radius} for t in world.targets],
        "obstacles": [{"id": o.id, "x": o.position.x, "y": o.position.y,
                       "radius": o.radius, "behavior": _behavior_doc(o)}
                      for o in world.obstacles],
    }
    steps = 0
    with open(path, "w") as fh:
        fh.write(json.dumps(header) + "\n")
        done = False
        while not done:
            actions = planner.actions(world, env_cfg)
            world, events = step(world, actions, env_cfg, reward_cfg)
            steps += 1
            record = {
                "t": world.time_step,
                "actions": [[a.dx, a.dy] for a in actions],
                "agents": [{"id": a.id, "x": a.position.x, "y": a.position.y,
                            "cursor": a.current_target_cursor} for a in world.agents],
                "obstacles": [{"id": o.id, "x": o.position.x, "y": o.position.y}
                              for o in world.obstacles],
                "rewards": list(events.rewards),
                "collisions": events.collisions_this_step,
                "targets_reached": events.targets_reached_this_step,
                "done": events.done,
            }
            fh.write(json.dumps(record) + "\n")
            done = events.done
    return steps


def _world_from_header(header: dict) -> tuple[WorldState, EnvConfig, RewardConfig]:
    env_cfg = _env_from_dict(header["env_config"])
    reward_cfg = _reward_from_dict(header["reward_config"])
    agents = tuple(
        AgentState(a["id"], Vec2(a["x"], a["y"]), a["speed"], a["radius"],
                   tuple(a["target_sequence"]), a["cursor"], a["cursor"])
        for a in header["agents"])
    targets = tuple(Target(t["id"], Vec2(t["x"], t["y"]), t["radius"])
                    for t in header["targets"])
    obstacles = []
    for o in header["obstacles"]:
        beh = o["behavior"]
        behavior = (Pursuit(beh["speed"], beh["agent_id"])
                    if beh["kind"] == "pursuit" else Static())
        obstacles.append(Obstacle(o["id"], Vec2(o["x"], o["y"]), o["radius"], behavior))
    world = WorldState(0, agents, targets, tuple(obstacles), env_cfg.bounds)
    return world, env_cfg, reward_cfg


def replay_dump(path: Path) -> float:
    """Re-execute a dump's actions through the transition; returns the max
    absolute position deviation (exact replays give 0.0)."""
    with open(path) as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    world, env_cfg, reward_cfg = _world_from_header(lines[0])
    max_dev = 0.0
    for record in lines[1:]:
        actions = [Action(dx, dy) for dx, dy in record["actions"]]
        world, events = step(world, actions, env_cfg, reward_cfg)
        for agent, logged in zip(world.agents, record["agents"]):
            max_dev = max(max_dev, abs(agent.position.x - logged["x"]),
                          abs(agent.position.y - logged["y"]))
        for obstacle, logged in zip(world.obstacles, record["obstacles"]):
            max_dev = max(max_dev, abs(obstacle.position.x - logged["x"]),
                          abs(obstacle.position.y - logged["y"]))
        if (events.collisions_this_step != record["collisions"]
                or events.targets_reached_this_step != record["targets_reached"]
                or events.done != record["done"]):
            raise NumericalError(f"replay event mismatch at t={record['t']}")
    return max_dev


def cmd_rollout(args) -> int:
    run = load_run_config(Path(args.config)) if args.config else RunConfig()
    domain = parse_domain(args.domain)
    env_cfg = env_config_for(domain, run.env)
    planner = _planner_from_args(args, env_cfg)
    instance = generate_problem(domain, args.seed, args.index, env_cfg)
    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    steps = dump_episode(planner, instance, env_cfg, run.reward, out)
    print(f"wrote {steps + 1} records to {out}")
    return 0


def gradcheck_trial(trial: int, n_inputs: int, h: float = 1e-5) -> float:
    """Max relative error between reverse-mode and central-difference
    gradients of the log-probability at one random (params, obs, action)."""
    rng = Stream.for_tag("gradcheck", trial)
    params = PolicyParams.init(n_inputs, rng)
    params.log_std = np.array([rng.uniform(-1.5, 0.5), rng.uniform(-1.5, 0.5)])
    obs = np.array([rng.uniform() for _ in range(n_inputs)])
    obs[3::4] *= 2.0  # distance channels extend past the unit range
    z = rng.normal_pair()
    action = np.array([1.5 * z[0], 1.5 * z[1]])

    tape = Tape()
    param_vars = [tape.leaf(p) for p in params.as_list()]
    loss = build_weighted_logprob(tape, param_vars, obs[None, :], action[None, :],
                                  np.ones(1))
    table = backward(loss)
    analytic = [grad_of(table, v) for v in param_vars]
    numeric = fd_logprob_gradients(params, obs, action, h)
    worst = 0.0
    for a, n in zip(analytic, numeric):
        for av, nv in zip(a.ravel(), n.ravel()):
            worst = max(worst, relative_error(float(av), float(nv)))
    return worst


def cmd_gradcheck(args) -> int:
    if args.trials == 0:
        print("warning: 0 trials requested; nothing checked")
        print("max relative error: 0")
        return 0
    n_inputs = observation_dim(EnvConfig())
    worst = 0.0
    for trial in range(args.trials):
        worst = max(worst, gradcheck_trial(trial, n_inputs))
    print(f"max relative error over {args.trials} trials: {worst:.3e}")
    if worst >= GRADCHECK_TOL:
        print(f"FAIL: exceeds tolerance {GRADCHECK_TOL:.1e}", file=sys.stderr)
        return 2
    return 0


def cmd_gen_problems(args) -> int:
    run = load_run_config(Path(args.config)) if args.config else RunConfig()
    domain = parse_domain(args.domain)
    env_cfg = env_config_for(domain, run.env)
    # Generate every instance up front so placement failures surface with
    # their index before the manifest is written.
    for index in range(args.count):
        generate_problem(domain, args.seed, index, env_cfg)
    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    save_manifest(domain, args.seed, args.count, env_cfg, out)
    print(f"manifest for {args.count} {domain.value} problems (seed {args.seed}) "
          f"written to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="agilenav",
                     description="2-D multi-agent motion planning: policy-gradient "
                                 "training and benchmark evaluation")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a policy")
    p_train.add_argument("--config", help="run config JSON")
    p_train.add_argument("--seed", type=int, help="override the master seed")
    p_train.add_argument("--out", help="output directory")
    p_train.add_argument("--resume", action="store_true",
                         help="continue from the latest checkpoint in --out")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a planner on one problem set")
    p_eval.add_argument("--config", help="run config JSON")
    p_eval.add_argument("--checkpoint", help="policy checkpoint to evaluate")
    p_eval.add_argument("--planner", help="built-in planner kind (baseline)")
    p_eval.add_argument("--domain", required=True)
    p_eval.add_argument("--seed", type=int, required=True)
    p_eval.add_argument("--count", type=int, default=100)
    p_eval.add_argument("--out", required=True, help="benchmark CSV path")
    p_eval.add_argument("--threads", type=int, default=1)
    p_eval.set_defaults(func=cmd_eval)

    p_roll = sub.add_parser("rollout", help="dump one episode as JSON Lines")
    p_roll.add_argument("--config", help="run config JSON")
    p_roll.add_argument("--checkpoint")
    p_roll.add_argument("--planner")
    p_roll.add_argument("--domain", required=True)
    p_roll.add_argument("--seed", type=int, required=True)
    p_roll.add_argument("--index", type=int, default=0)
    p_roll.add_argument("--out", required=True, help="JSONL path")
    p_roll.set_defaults(func=cmd_rollout)

    p_grad = sub.add_parser("gradcheck",
                            help="compare policy gradients against finite differences")
    p_grad.add_argument("--trials", type=int, default=100)
    p_grad.set_defaults(func=cmd_gradcheck)

    p_gen = sub.add_parser("gen-problems", help="write a problem-set manifest")
    p_gen.add_argument("--config", help="run config JSON")
    p_gen.add_argument("--domain", required=True)
    p_gen.add_argument("--seed", type=int, required=True)
    p_gen.add_argument("--count", type=int, default=100)
    p_gen.add_argument("--out", required=True, help="manifest JSON path")
    p_gen.set_defaults(func=cmd_gen_problems)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 1
    except (NumericalError, GenerationError) as err:
        print(f"numerical error: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
