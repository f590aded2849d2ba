"""Episode driving and parallel runs.

An episode is deterministic given (task, policy, config): the simulated
executor derives its noise from content digests and the scripted policy
is a pure function of state. Parallelism therefore cannot change any
individual log; runs are grouped into per-worker bins by task-id digest
so the assignment is stable too, and the combined output is sorted by
task_id before anything is written.
"""

from __future__ import annotations

import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Optional, Sequence

from .config import RunConfig, make_executor
from .env.episode import EpisodeState, Stop, Submit, step
from .env.tools import ToolCall
from .env.workspace import init_workspace
from .rewards import episode_reward
from .seeding import derive_seed, stable_digest
from .sim.protocol import ExecutorUnavailable
from .store import EpisodeLog, TurnRecord
from .task.graph import OperatorTask

Policy = Callable[[EpisodeState], object]


def encode_action(action) -> dict:
    if isinstance(action, ToolCall):
        return {"type": "tool_call", "tool": action.tool, "args": action.args}
    if isinstance(action, Submit):
        return {"type": "submit", "candidate": action.candidate.to_dict()}
    if isinstance(action, Stop):
        return {"type": "stop"}
    raise TypeError(f"cannot encode action {type(action).__name__}")


def _policy_id(policy: Policy) -> str:
    return getattr(policy, "policy_id", type(policy).__name__)


def run_episode(
    task: OperatorTask,
    policy: Policy,
    config: RunConfig,
    workspace_dir: Optional[Path] = None,
) -> EpisodeLog:
    seed = derive_seed(config.seed, "episode", task.task_id)
    executor = make_executor(config)
    cleanup = None
    if workspace_dir is None:
        cleanup = tempfile.TemporaryDirectory(prefix="kernelforge-ep-")
        workspace_dir = Path(cleanup.name) / "ws"
    try:
        state = EpisodeState(
            task=task,
            workspace=init_workspace(task, workspace_dir),
            executor=executor,
            budgets=config.budgets(),
            mode=config.mode,
        )
        turns: list[TurnRecord] = []
        try:
            while not state.done:
                action = policy(state)
                obs, _ = step(state, action)
                turns.append(
                    TurnRecord(
                        turn_index=state.turn,
                        action=encode_action(action),
                        observation_digest=stable_digest(obs.text),
                        observation_bytes=len(obs.text.encode("utf-8")),
                        schema_ok=obs.schema_ok,
                    )
                )
        except (ExecutorUnavailable, ConnectionError) as e:
            state.done = True
            state.done_reason = "env_error"
            turns.append(
                TurnRecord(
                    turn_index=state.turn,
                    action={"type": "env_error", "error": str(e)},
                    observation_digest=stable_digest(""),
                    observation_bytes=0,
                )
            )
        return EpisodeLog(
            task_id=task.task_id,
            policy_id=_policy_id(policy),
            seed=seed,
            turns=tuple(turns),
            measurements=tuple(state.measurements),
            final_reward=episode_reward(state.measurements, config.reward_variant),
            budgets_used={
                "turns": state.turn,
                "context_tokens": state.token_budget_used,
            },
            done_reason=state.done_reason,
            level_tag=task.level_tag,
        )
    finally:
        if cleanup is not None:
            cleanup.cleanup()


def _worker_bin(task_id: str, workers: int) -> int:
    return int(stable_digest(task_id)[:8], 16) % workers


def run_many(
    tasks: Sequence[OperatorTask],
    policy_factory: Callable[[], Policy],
    config: RunConfig,
    workers: int = 1,
) -> list[EpisodeLog]:
    if workers < 1:
        raise ValueError("workers must be >= 1")
    bins: list[list[OperatorTask]] = [[] for _ in range(workers)]
    for task in tasks:
        bins[_worker_bin(task.task_id, workers)].append(task)

    def run_bin(bin_tasks: list[OperatorTask]) -> list[EpisodeLog]:
        return [run_episode(task, policy_factory(), config) for task in bin_tasks]

    if workers == 1:
        logs = run_bin(list(tasks))
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(run_bin, bins))
        logs = [log for chunk in chunks for log in chunk]
    return sorted(logs, key=lambda log: log.task_id)
