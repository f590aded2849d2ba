"""Command-line front end for the whole pipeline.

Exit codes: 0 success, 1 usage, 2 data error, 3 executor error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, load_config, render_config
from .data.catalog import CatalogError, builtin_catalog, ingest_seed_catalog
from .data.dataset import DatasetError, load_dataset, write_dataset
from .data.filters import filter_corpus, filter_statistics
from .data.similarity import decontaminate
from .data.synth import SynthesisError, sample_corpus
from .env.policy import ScriptedPolicy
from .metrics import ResultFormatError, evaluate, read_results, render_report
from .rewards import episode_reward
from .rl import (
    ClipParams,
    GaeParams,
    TrajectoryError,
    gae,
    load_trajectories,
    ppo_surrogate,
    ppo_surrogate_batch,
    rft_filter,
    rft_loss_batch,
    value_loss,
)
from .runner import run_many
from .sim.protocol import ExecutorUnavailable, ProtocolError
from .store import StoreError, store_append, store_scan

USAGE_EXIT = 1
DATA_EXIT = 2
EXECUTOR_EXIT = 3


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage problems; the contract here is 1
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_EXIT)


def build_parser() -> _Parser:
    parser = _Parser(prog="kernelforge", description="operator-graph tuning harness")
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--seed", type=int, help="override config seed")
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--out", help="override config out_dir")
    parser.add_argument(
        "--print-config", action="store_true", help="print resolved config and exit"
    )
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("synth", help="sample a synthetic task corpus")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--catalog", help="seed catalog JSON (builtin if omitted)")
    p.add_argument("--split", default="train")

    p = sub.add_parser("filter", help="drop unmeasurable tasks from a dataset")
    p.add_argument("--dataset", required=True)

    p = sub.add_parser("decontaminate", help="remove train tasks too close to eval")
    p.add_argument("--train", required=True)
    p.add_argument("--eval", dest="eval_dir", required=True)
    p.add_argument("--threshold", type=float, default=0.9)

    p = sub.add_parser("run", help="run episodes over a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--policy", default="scripted", choices=["scripted"])

    p = sub.add_parser("score", help="recompute rewards from stored logs")
    p.add_argument("--logs", required=True)
    p.add_argument("--variant", default="robust", choices=["robust", "speedup"])

    p = sub.add_parser("eval", help="aggregate a results file into the report table")
    p.add_argument("--results", required=True)

    rl = sub.add_parser("rl", help="RL quantities over trajectory tensor files")
    rl_sub = rl.add_subparsers(dest="rl_command")
    for name in ("gae", "ppo", "value-loss", "rft-loss"):
        q = rl_sub.add_parser(name)
        q.add_argument("--trajectories", required=True)
        if name == "gae":
            q.add_argument("--gamma", type=float, default=1.0)
            q.add_argument("--lam", type=float, default=0.95)
        if name == "ppo":
            q.add_argument("--eps-lower", type=float, default=0.2)
            q.add_argument("--eps-higher", type=float, default=0.28)
    q = rl_sub.add_parser("rft-filter")
    q.add_argument("--logs", required=True)

    p = sub.add_parser("serve-executor", help="serve the simulated executor on a socket")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=0)

    return parser


def _resolve_config(args) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = args.out
    if overrides:
        from dataclasses import replace

        config = replace(config, **overrides)
    return config


def _out_dir(config: RunConfig) -> Path:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_synth(args, config: RunConfig) -> int:
    catalog = ingest_seed_catalog(args.catalog) if args.catalog else builtin_catalog()
    tasks = sample_corpus(catalog, count=args.count, seed=config.seed)
    directory = _out_dir(config) / args.split
    write_dataset(tasks, directory, extra_manifest={"split": args.split})
    print(f"wrote {len(tasks)} tasks to {directory}")
    return 0


def _cmd_filter(args, config: RunConfig) -> int:
    from .config import make_executor

    tasks, _ = load_dataset(args.dataset)
    executor = make_executor(config)
    kept, verdicts = filter_corpus(tasks, executor)
    stats = filter_statistics(verdicts)
    directory = _out_dir(config) / "filtered"
    write_dataset(kept, directory, extra_manifest={"filter_statistics": stats})
    print(json.dumps(stats, sort_keys=True))
    print(f"kept {len(kept)}/{len(tasks)} tasks in {directory}")
    return 0


def _cmd_decontaminate(args, config: RunConfig) -> int:
    train, _ = load_dataset(args.train)
    eval_tasks, _ = load_dataset(args.eval_dir)
    kept, removed, histogram = decontaminate(train, eval_tasks, args.threshold)
    directory = _out_dir(config) / "decontaminated"
    write_dataset(
        kept,
        directory,
        extra_manifest={"similarity_histogram": histogram, "removed": len(removed)},
    )
    print(json.dumps(histogram, sort_keys=True))
    print(f"removed {len(removed)} of {len(train)}; kept set in {directory}")
    return 0


def _cmd_run(args, config: RunConfig) -> int:
    tasks, _ = load_dataset(args.dataset)
    logs = run_many(tasks, ScriptedPolicy, config, workers=args.workers)
    store_path = _out_dir(config) / "episodes.jsonl"
    store_path.write_text("")  # a run replaces its own store, appends within it
    for log in logs:
        store_append(store_path, log)
    rewards = [log.final_reward for log in logs]
    print(f"ran {len(logs)} episodes -> {store_path}")
    print(f"rewards: {json.dumps(rewards)}")
    return 0


def _cmd_score(args, config: RunConfig) -> int:
    logs = store_scan(args.logs)
    mismatches = 0
    for log in logs:
        reward = episode_reward(log.measurements, args.variant)
        marker = ""
        if args.variant == config.reward_variant and reward != log.final_reward:
            mismatches += 1
            marker = f"  (stored {log.final_reward})"
        print(f"{log.task_id} {reward}{marker}")
    if mismatches:
        print(f"{mismatches} stored rewards disagree", file=sys.stderr)
        return DATA_EXIT
    return 0


def _cmd_eval(args, config: RunConfig) -> int:
    results = read_results(args.results)
    print(render_report(evaluate(results)))
    return 0


def _cmd_rl(args, config: RunConfig) -> int:
    if args.rl_command == "rft-filter":
        logs = store_scan(args.logs)
        kept_ids = []
        for log in logs:
            turns = [
                {
                    "tool": t.action.get("tool", t.action.get("type", "")),
                    "args": t.action.get("args", {}),
                    "observation_digest": t.observation_digest,
                    "schema_ok": t.schema_ok,
                }
                for t in log.turns
            ]
            verdict = rft_filter(turns, log.final_reward)
            if verdict.kept:
                kept_ids.append(log.task_id)
            else:
                print(f"dropped {log.task_id}: {','.join(verdict.reasons)}")
        for task_id in kept_ids:
            print(f"kept {task_id}")
        return 0

    trajectories = load_trajectories(args.trajectories)
    if args.rl_command == "gae":
        params = GaeParams(gamma=args.gamma, lam=args.lam)
        for traj in trajectories:
            advantages, targets = gae(traj, params)
            print(
                json.dumps(
                    {"advantages": list(advantages), "targets": list(targets)}
                )
            )
        return 0
    if args.rl_command == "value-loss":
        losses = []
        for traj in trajectories:
            _, targets = gae(traj)
            losses.append(value_loss(traj.values, targets, traj.loss_mask))
        for loss in losses:
            print(json.dumps({"value_loss": loss}))
        print(json.dumps({"mean_value_loss": sum(losses) / len(losses)}))
        return 0
    if args.rl_command == "ppo":
        params = ClipParams(eps_lower=args.eps_lower, eps_higher=args.eps_higher)
        advantages = [list(gae(traj)[0]) for traj in trajectories]
        for traj, adv in zip(trajectories, advantages):
            print(json.dumps({"objective": ppo_surrogate(traj, adv, params)}))
        print(
            json.dumps(
                {"batch_objective": ppo_surrogate_batch(trajectories, advantages, params)}
            )
        )
        return 0
    if args.rl_command == "rft-loss":
        print(json.dumps({"rft_loss": rft_loss_batch(trajectories)}))
        return 0
    print("usage: kernelforge rl {gae,ppo,value-loss,rft-filter,rft-loss}", file=sys.stderr)
    return USAGE_EXIT


def _cmd_serve_executor(args, config: RunConfig) -> int:
    from .sim.protocol import ExecutorServer

    try:
        server = ExecutorServer(config.cost_params(), host=args.host, port=args.port)
    except OSError as e:
        raise ExecutorUnavailable(f"cannot bind {args.host}:{args.port}: {e}") from None
    print(f"serving simulated executor on {server.address}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.stop()
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "filter": _cmd_filter,
    "decontaminate": _cmd_decontaminate,
    "run": _cmd_run,
    "score": _cmd_score,
    "eval": _cmd_eval,
    "rl": _cmd_rl,
    "serve-executor": _cmd_serve_executor,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _resolve_config(args)
        if args.print_config:
            print(render_config(config), end="")
            return 0
        if args.command is None:
            parser.print_usage(sys.stderr)
            return USAGE_EXIT
        return _COMMANDS[args.command](args, config)
    except (ExecutorUnavailable, ProtocolError, ConnectionError) as e:
        print(f"executor error: {e}", file=sys.stderr)
        return EXECUTOR_EXIT
    except (
        ConfigError,
        DatasetError,
        CatalogError,
        SynthesisError,
        StoreError,
        ResultFormatError,
        TrajectoryError,
        OSError,
        json.JSONDecodeError,
    ) as e:
        print(f"error: {e}", file=sys.stderr)
        return DATA_EXIT


if __name__ == "__main__":
    raise SystemExit(main())
