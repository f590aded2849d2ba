"""Simulated executor: verify-before-profile measurement of candidates.

Verification compares the candidate graph against the float64 reference on
five deterministic seeds derived from the task's base seed; a candidate is
correct only if every seed passes. Incorrect candidates are never timed.

Profiling applies multiplicative Gaussian noise to the modeled cost. Eager
and compiled baselines for one task share a noise draw (paired measurement),
so the modeled eager >= compiled ordering survives noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Protocol, runtime_checkable

import numpy as np

from ..seeding import derive_seed, stable_digest
from ..task.graph import GraphValidationError, OperatorTask, OpGraph
from ..task.interp import (
    NonFiniteError,
    evaluate_graph,
    generate_graph_inputs,
    outputs_allclose,
)
from ..task.serialize import task_digest
from .costmodel import (
    CostModelParams,
    cost_compiled,
    cost_eager,
    cost_of_partition,
    noisy_samples,
)
from .rewrites import CandidateError, KernelCandidate, apply_candidate

VERIFY_SEED_COUNT = 5
VERIFY_ATOL = 1e-2
VERIFY_RTOL = 1e-2
PROFILE_WARMUP = 5
PROFILE_REPEATS = 20


@dataclass(frozen=True)
class BaselineTimes:
    eager_ms: float
    compile_ms: float


@dataclass(frozen=True)
class MeasurementReport:
    correct: bool
    candidate_ms: Optional[float] = None
    eager_ms: Optional[float] = None
    compile_ms: Optional[float] = None
    per_input_verdicts: tuple[bool, ...] = field(default=(False,) * VERIFY_SEED_COUNT)
    failure_reason: Optional[str] = None

    def __post_init__(self):
        if len(self.per_input_verdicts) != VERIFY_SEED_COUNT:
            raise ValueError(f"expected {VERIFY_SEED_COUNT} verdicts")
        if self.correct != all(self.per_input_verdicts):
            raise ValueError("correct must equal the conjunction of verdicts")
        for name in ("candidate_ms", "eager_ms", "compile_ms"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ValueError(f"{name} must be positive when present")
        if not self.correct and self.candidate_ms is not None:
            raise ValueError("incorrect candidates are never timed")

    def to_dict(self) -> dict:
        return {
            "correct": self.correct,
            "candidate_ms": self.candidate_ms,
            "eager_ms": self.eager_ms,
            "compile_ms": self.compile_ms,
            "per_input_verdicts": list(self.per_input_verdicts),
            "failure_reason": self.failure_reason,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MeasurementReport":
        return cls(
            correct=bool(d["correct"]),
            candidate_ms=d.get("candidate_ms"),
            eager_ms=d.get("eager_ms"),
            compile_ms=d.get("compile_ms"),
            per_input_verdicts=tuple(bool(v) for v in d["per_input_verdicts"]),
            failure_reason=d.get("failure_reason"),
        )


def failure_report(reason: str) -> MeasurementReport:
    return MeasurementReport(correct=False, failure_reason=reason)


def verification_seeds(task: OperatorTask, count: int = VERIFY_SEED_COUNT) -> list[int]:
    return [derive_seed(task.base_seed, "verify", i) for i in range(count)]


def verify_graphs(
    reference: OpGraph,
    candidate: OpGraph,
    seeds: list[int],
    atol: float = VERIFY_ATOL,
    rtol: float = VERIFY_RTOL,
) -> list[bool]:
    """Per-seed verdicts; any evaluation failure counts as a miss."""
    verdicts = []
    for seed in seeds:
        inputs = generate_graph_inputs(reference.inputs, seed)
        want = evaluate_graph(reference, inputs)
        try:
            got = evaluate_graph(candidate, inputs)
            verdicts.append(outputs_allclose(got, want, atol, rtol))
        except (NonFiniteError, GraphValidationError, ValueError):
            verdicts.append(False)
    return verdicts


@runtime_checkable
class Executor(Protocol):
    """What the filter pipeline and the episode loop need from a backend."""

    def baselines(self, task: OperatorTask) -> BaselineTimes: ...

    def measure(self, task: OperatorTask, candidate: KernelCandidate) -> MeasurementReport: ...

    def run_eager(self, task: OperatorTask, seed: int) -> list[np.ndarray]: ...


class SimulatedExecutor:
    def __init__(self, params: CostModelParams | None = None):
        self.params = params or CostModelParams()
        # measurements are pure functions of content digests, so repeat
        # queries (verify turn, profile turn, submit) can share one result
        self._baseline_cache: dict[str, BaselineTimes] = {}
        self._measure_cache: dict[tuple[str, str], MeasurementReport] = {}

    def baselines(self, task: OperatorTask) -> BaselineTimes:
        key = task_digest(task)
        cached = self._baseline_cache.get(key)
        if cached is not None:
            return cached
        ce = cost_eager(task.graph, self.params)
        cc = cost_compiled(task.graph, self.params)
        # one epsilon vector for both modes: paired measurement; floor at the
        # same 1e-9 as noisy_samples so zero-node graphs stay timeable
        scale = noisy_samples(1.0, self.params, PROFILE_REPEATS, "baselines", key)
        result = BaselineTimes(
            eager_ms=max(float(ce * scale.mean()), 1e-9),
            compile_ms=max(float(cc * scale.mean()), 1e-9),
        )
        self._baseline_cache[key] = result
        return result

    def run_eager(self, task: OperatorTask, seed: int) -> list[np.ndarray]:
        inputs = generate_graph_inputs(task.graph.inputs, seed)
        return evaluate_graph(task.graph, inputs)

    def verify(self, task: OperatorTask, candidate: KernelCandidate) -> list[bool]:
        applied = apply_candidate(task.graph, candidate)
        return verify_graphs(task.graph, applied.graph, verification_seeds(task))

    def _apply(self, task: OperatorTask, candidate: KernelCandidate):
        # seam for tests that need to smuggle a semantically wrong graph
        # past the whitelist and watch verification refuse to time it
        return apply_candidate(task.graph, candidate)

    def measure(self, task: OperatorTask, candidate: KernelCandidate) -> MeasurementReport:
        cache_key = (task_digest(task), stable_digest(candidate.to_dict()))
        cached = self._measure_cache.get(cache_key)
        if cached is not None:
            return cached
        report = self._measure_uncached(task, candidate)
        self._measure_cache[cache_key] = report
        return report

    def _measure_uncached(
        self, task: OperatorTask, candidate: KernelCandidate
    ) -> MeasurementReport:
        try:
            applied = self._apply(task, candidate)
        except CandidateError as e:
            return failure_report(f"invalid candidate: {e}")

        verdicts = tuple(verify_graphs(task.graph, applied.graph, verification_seeds(task)))
        if not all(verdicts):
            first_bad = verdicts.index(False)
            return MeasurementReport(
                correct=False,
                per_input_verdicts=verdicts,
                failure_reason=f"verification failed on input seed {first_bad}",
            )

        cost = cost_of_partition(applied.graph, applied.partition, self.params)
        samples = noisy_samples(
            cost,
            self.params,
            PROFILE_REPEATS,
            "candidate",
            task_digest(task),
            stable_digest(candidate.to_dict()),
        )
        base = self.baselines(task)
        return MeasurementReport(
            correct=True,
            candidate_ms=float(samples.mean()),
            eager_ms=base.eager_ms,
            compile_ms=base.compile_ms,
            per_input_verdicts=verdicts,
        )
