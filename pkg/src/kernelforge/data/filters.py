"""Execution-based filtering of candidate tasks.

Four criteria, all of which must hold:
  runs_both_modes        eager and compiled baselines both measured
  deterministic          two eager runs on one seed agree bit-for-bit
  output_distinguishable outputs on two different seeds are neither
                         near-constant within a tensor nor close enough to
                         pass verification tolerance against each other
  workload_in_range      1 ms <= eager_ms <= 100 ms (closed interval)

"Indistinguishable" is decided at the verification tolerance (atol=rtol=
1e-2), or when any output tensor has max-min spread below 1e-6 on both
probes. Scalar outputs always count as constant under that rule, so tasks
whose only output is a full reduction get filtered; chains keep at least a
vector alive if they want to survive.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..seeding import derive_seed
from ..task.graph import OperatorTask
from ..task.interp import allclose

WORKLOAD_MIN_MS = 1.0
WORKLOAD_MAX_MS = 100.0
DISTINGUISH_ATOL = 1e-2
DISTINGUISH_RTOL = 1e-2
CONSTANT_SPREAD = 1e-6


@dataclass(frozen=True)
class FilterCriteria:
    runs_both_modes: bool = False
    deterministic: bool = False
    output_distinguishable: bool = False
    workload_in_range: bool = False

    def all_pass(self) -> bool:
        return (
            self.runs_both_modes
            and self.deterministic
            and self.output_distinguishable
            and self.workload_in_range
        )

    def to_dict(self) -> dict:
        return {
            "runs_both_modes": self.runs_both_modes,
            "deterministic": self.deterministic,
            "output_distinguishable": self.output_distinguishable,
            "workload_in_range": self.workload_in_range,
        }


@dataclass(frozen=True)
class FilterVerdict:
    accepted: bool
    criteria: FilterCriteria
    eager_ms: Optional[float] = None
    reject_reason: Optional[str] = None

    def __post_init__(self):
        if self.accepted != self.criteria.all_pass():
            raise ValueError("accepted must equal the conjunction of criteria")

    def to_dict(self) -> dict:
        return {
            "accepted": self.accepted,
            "criteria": self.criteria.to_dict(),
            "eager_ms": self.eager_ms,
            "reject_reason": self.reject_reason,
        }


def probe_seeds(task: OperatorTask) -> tuple[int, int]:
    return derive_seed(task.base_seed, "filter", 0), derive_seed(task.base_seed, "filter", 1)


def _near_constant(arr: np.ndarray) -> bool:
    if arr.size == 0:
        return True
    return float(np.max(arr) - np.min(arr)) < CONSTANT_SPREAD


def _indistinguishable(outs_a: list[np.ndarray], outs_b: list[np.ndarray]) -> bool:
    try:
        close = all(
            allclose(a, b, DISTINGUISH_ATOL, DISTINGUISH_RTOL)
            for a, b in zip(outs_a, outs_b)
        )
    except ValueError:
        close = False
    if close:
        return True
    return any(_near_constant(a) and _near_constant(b) for a, b in zip(outs_a, outs_b))


def filter_task(task: OperatorTask, executor) -> FilterVerdict:
    """Evaluate the four criteria; executor failures are reported, not raised."""
    seed_a, seed_b = probe_seeds(task)
    try:
        base = executor.baselines(task)
        outs_a1 = executor.run_eager(task, seed_a)
        outs_a2 = executor.run_eager(task, seed_a)
        outs_b = executor.run_eager(task, seed_b)
    except Exception as e:  # noqa: BLE001 - any backend failure means rejection
        return FilterVerdict(
            accepted=False,
            criteria=FilterCriteria(),
            reject_reason=f"baseline execution failed: {e}",
        )

    deterministic = len(outs_a1) == len(outs_a2) and all(
        np.array_equal(x, y) for x, y in zip(outs_a1, outs_a2)
    )
    distinguishable = not _indistinguishable(outs_a1, outs_b)
    in_range = WORKLOAD_MIN_MS <= base.eager_ms <= WORKLOAD_MAX_MS

    criteria = FilterCriteria(
        runs_both_modes=True,
        deterministic=deterministic,
        output_distinguishable=distinguishable,
        workload_in_range=in_range,
    )
    reason = None
    if not deterministic:
        reason = "nondeterministic outputs"
    elif not distinguishable:
        reason = "outputs constant or indistinguishable across seeds"
    elif not in_range:
        reason = (
            "workload below 1 ms"
            if base.eager_ms < WORKLOAD_MIN_MS
            else "workload above 100 ms"
        )
    return FilterVerdict(
        accepted=criteria.all_pass(),
        criteria=criteria,
        eager_ms=base.eager_ms,
        reject_reason=reason,
    )


def filter_corpus(
    tasks: list[OperatorTask], executor
) -> tuple[list[OperatorTask], dict[str, FilterVerdict]]:
    kept = []
    verdicts: dict[str, FilterVerdict] = {}
    for task in tasks:
        v = filter_task(task, executor)
        verdicts[task.task_id] = v
        if v.accepted:
            kept.append(task)
    return kept, verdicts


def filter_statistics(verdicts: dict[str, FilterVerdict]) -> dict:
    stats = {
        "total": len(verdicts),
        "accepted": sum(1 for v in verdicts.values() if v.accepted),
        "rejected_by": {
            "runs_both_modes": 0,
            "deterministic": 0,
            "output_distinguishable": 0,
            "workload_in_range": 0,
        },
    }
    for v in verdicts.values():
        c = v.criteria
        if not c.runs_both_modes:
            stats["rejected_by"]["runs_both_modes"] += 1
        elif not c.deterministic:
            stats["rejected_by"]["deterministic"] += 1
        elif not c.output_distinguishable:
            stats["rejected_by"]["output_distinguishable"] += 1
        elif not c.workload_in_range:
            stats["rejected_by"]["workload_in_range"] += 1
    return stats
