"""Roll the scripted policy over a dataset and render the level table.

Runs every task through the episode loop, converts the best correct
measurement per episode into a result row, and prints the aggregate
pass-rate / speedup table plus the reward distribution.

Example:
    python3 scripts/build_corpus.py --count 200 --seed 17 --out /tmp/corpus
    python3 scripts/scripted_rollouts.py --dataset /tmp/corpus/train
"""

import argparse
import collections
from pathlib import Path

from kernelforge.config import RunConfig
from kernelforge.data.dataset import load_dataset
from kernelforge.env.policy import ScriptedPolicy
from kernelforge.metrics import TaskResult, evaluate, render_report, write_results
from kernelforge.rewards import best_of_trajectory
from kernelforge.runner import run_many
from kernelforge.store import store_append


def result_row(log) -> TaskResult:
    best = best_of_trajectory(log.measurements)
    if best is None:
        return TaskResult(task_id=log.task_id, level=log.level_tag or "L1", passed=False)
    return TaskResult(
        task_id=log.task_id,
        level=log.level_tag or "L1",
        passed=True,
        speedup_vs_eager=best.eager_ms / best.candidate_ms,
        speedup_vs_compile=best.compile_ms / best.candidate_ms,
    )


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dataset", type=Path, required=True)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=4)
    ap.add_argument("--out", type=Path, default=Path("rollout-out"))
    args = ap.parse_args()

    tasks, _ = load_dataset(args.dataset)
    config = RunConfig(seed=args.seed)
    logs = run_many(tasks, ScriptedPolicy, config, workers=args.workers)

    args.out.mkdir(parents=True, exist_ok=True)
    store = args.out / "episodes.jsonl"
    store.unlink(missing_ok=True)
    for log in logs:
        store_append(store, log)

    rewards = collections.Counter(log.final_reward for log in logs)
    print("rewards:", dict(sorted(rewards.items())))

    results = [result_row(log) for log in logs]
    write_results(results, args.out / "results.jsonl")
    print(render_report(evaluate(results)))
    print(f"episodes -> {store}")


if __name__ == "__main__":
    main()
