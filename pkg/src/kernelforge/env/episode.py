"""Episode state machine: budgets, the step loop, and submissions.

One step = one action = one turn, whatever the action was. Observations
are token-counted with a flat 4-bytes-per-token estimate (no tokenizer in
scope; the constant is part of the budget contract). Submissions run the
anti-fallback scan before the executor sees the candidate, and the best
report tracks the highest compile-baseline speedup among correct ones.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Optional, Union

from ..sim.executor import MeasurementReport, failure_report
from ..sim.rewrites import KernelCandidate
from ..task.graph import OperatorTask
from .guards import scan_workspace_sources
from .tools import (
    BashSession,
    Observation,
    ToolCall,
    ToolContext,
    dispatch_tool,
    truncate_observation,
)
from .workspace import Workspace

BYTES_PER_TOKEN = 4
CANDIDATE_FILE = "kernels/candidate.json"


class EpisodeError(RuntimeError):
    pass


@dataclass(frozen=True)
class Budgets:
    max_turns_train: int = 150
    max_turns_eval: int = 200
    context_tokens: int = 131072

    def __post_init__(self):
        if min(self.max_turns_train, self.max_turns_eval, self.context_tokens) <= 0:
            raise ValueError("budgets must be positive")
        if self.max_turns_eval < self.max_turns_train:
            raise ValueError("eval turn budget must be >= train budget")

    def max_turns(self, mode: str) -> int:
        if mode == "train":
            return self.max_turns_train
        if mode == "eval":
            return self.max_turns_eval
        raise ValueError(f"unknown mode {mode!r}")


@dataclass(frozen=True)
class Submit:
    candidate: KernelCandidate


@dataclass(frozen=True)
class Stop:
    pass


Action = Union[ToolCall, Submit, Stop]


def count_tokens(text: str) -> int:
    return (len(text.encode("utf-8")) + BYTES_PER_TOKEN - 1) // BYTES_PER_TOKEN


class _MeasurementHarness:
    """Backs the utils.* entry points the mini-shell intercepts."""

    def __init__(self, state: "EpisodeState"):
        self.state = state

    def _load_candidate(self) -> tuple[Optional[KernelCandidate], Optional[str]]:
        path = self.state.workspace.path(CANDIDATE_FILE)
        if not path.is_file():
            return None, None
        try:
            return KernelCandidate.from_dict(json.loads(path.read_text())), None
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            return None, f"candidate spec is invalid: {e}"

    def profiling_text(self) -> str:
        state = self.state
        base = state.executor.baselines(state.task)
        lines = [
            f"eager baseline:    {base.eager_ms:.4f} ms",
            f"compiled baseline: {base.compile_ms:.4f} ms",
        ]
        candidate, problem = self._load_candidate()
        if problem:
            lines.append(problem)
        elif candidate is not None:
            report = state.executor.measure(state.task, candidate)
            if report.correct:
                lines.append(f"candidate:         {report.candidate_ms:.4f} ms")
                lines.append(
                    f"speedup vs eager {report.eager_ms / report.candidate_ms:.3f}x, "
                    f"vs compile {report.compile_ms / report.candidate_ms:.3f}x"
                )
            else:
                lines.append(f"candidate not timed: {report.failure_reason}")
        else:
            lines.append(f"no candidate at {CANDIDATE_FILE}")
        return "\n".join(lines)

    def verification_text(self) -> str:
        state = self.state
        candidate, problem = self._load_candidate()
        if problem:
            return problem
        if candidate is None:
            return f"no candidate at {CANDIDATE_FILE}"
        report = state.executor.measure(state.task, candidate)
        verdicts = " ".join(
            "pass" if ok else "FAIL" for ok in report.per_input_verdicts
        )
        if report.correct:
            return f"verification passed on all held-out inputs: {verdicts}"
        return f"verification failed ({report.failure_reason}): {verdicts}"


@dataclass
class EpisodeState:
    task: OperatorTask
    workspace: Workspace
    executor: object
    budgets: Budgets = Budgets()
    mode: str = "train"
    ctx: ToolContext = None
    turn: int = 0
    token_budget_used: int = 0
    history: list = field(default_factory=list)
    measurements: list = field(default_factory=list)
    best_report: Optional[MeasurementReport] = None
    done: bool = False
    done_reason: Optional[str] = None

    def __post_init__(self):
        if self.ctx is None:
            harness = _MeasurementHarness(self)
            self.ctx = ToolContext(
                ws=self.workspace,
                bash=BashSession(self.workspace, harness),
            )

    @property
    def max_turns(self) -> int:
        return self.budgets.max_turns(self.mode)

    def best_ratio(self) -> Optional[float]:
        if self.best_report is None:
            return None
        return self.best_report.compile_ms / self.best_report.candidate_ms


def _submit(state: EpisodeState, action: Submit) -> Observation:
    violations = scan_workspace_sources(state.workspace)
    if violations:
        v = violations[0]
        report = failure_report(f"fallback call detected: {v.path}:{v.line}: {v.text}")
        state.measurements.append(report)
        return Observation(f"submission rejected: {report.failure_reason}")

    try:
        report = state.executor.measure(state.task, action.candidate)
    except Exception as e:  # noqa: BLE001 - transport/infrastructure failure
        state.done = True
        state.done_reason = "env_error"
        return Observation(f"executor error: {e}")

    state.measurements.append(report)
    if report.correct:
        ratio = report.compile_ms / report.candidate_ms
        best = state.best_ratio()
        if best is None or ratio > best:
            state.best_report = report
        return Observation(
            f"submission correct: {report.candidate_ms:.4f} ms, "
            f"speedup vs eager {report.eager_ms / report.candidate_ms:.3f}x, "
            f"vs compile {ratio:.3f}x"
        )
    return Observation(f"submission failed: {report.failure_reason}")


def step(state: EpisodeState, action: Action) -> tuple[Observation, EpisodeState]:
    """Advance one turn. Permission denials and bad candidates come back as
    observations; only infrastructure failure ends the episode abnormally."""
    if state.done:
        raise EpisodeError("episode is already done")
    state.turn += 1

    if isinstance(action, Stop):
        obs = Observation("stopped")
        state.done = True
        state.done_reason = "policy_stop"
    elif isinstance(action, Submit):
        obs = _submit(state, action)
    elif isinstance(action, ToolCall):
        call = replace(action, turn_index=state.turn)
        obs = dispatch_tool(call, state.ctx)
    else:
        raise EpisodeError(f"unknown action type {type(action).__name__}")

    remaining = state.budgets.context_tokens - state.token_budget_used
    tokens = count_tokens(obs.text)
    if tokens >= remaining:
        capped = truncate_observation(obs.text, cap=max(remaining, 1) * BYTES_PER_TOKEN)
        obs = replace(obs, text=capped)
        state.token_budget_used = min(
            state.budgets.context_tokens,
            state.token_budget_used + count_tokens(obs.text),
        )
        if not state.done:
            state.done = True
            state.done_reason = "budget"
    else:
        state.token_budget_used += tokens

    if not state.done and state.turn >= state.max_turns:
        state.done = True
        state.done_reason = "budget"

    state.history.append((action, obs))
    return obs, state
