"""Per-level evaluation reports and their weighted overall row.

Rates are percentages over every task attempted at a level; geometric-mean
speedups are computed only over tasks that passed. The overall row weights
rates by a fixed per-level task budget (L1:100, L2:100, L3:50) and pools
passed tasks for the geomeans, which equals weighting each level's log
geomean by its passed count.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

LEVELS = ("L1", "L2", "L3")
DEFAULT_LEVEL_WEIGHTS = {"L1": 100.0, "L2": 100.0, "L3": 50.0}

RESULT_FIELDS = ("task_id", "level", "passed", "speedup_vs_eager", "speedup_vs_compile")


class ResultFormatError(ValueError):
    pass


@dataclass(frozen=True)
class TaskResult:
    task_id: str
    level: str
    passed: bool
    speedup_vs_eager: Optional[float] = None
    speedup_vs_compile: Optional[float] = None

    def __post_init__(self):
        if self.level not in LEVELS:
            raise ValueError(f"unknown level {self.level!r}")
        for name in ("speedup_vs_eager", "speedup_vs_compile"):
            v = getattr(self, name)
            if self.passed:
                if v is None or v <= 0:
                    raise ValueError(f"{name} must be positive on passed tasks")
            elif v is not None:
                raise ValueError(f"{name} must be absent on failed tasks")

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "level": self.level,
            "passed": self.passed,
            "speedup_vs_eager": self.speedup_vs_eager,
            "speedup_vs_compile": self.speedup_vs_compile,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TaskResult":
        missing = [k for k in RESULT_FIELDS if k not in d]
        if missing:
            raise ResultFormatError(f"result record missing fields {missing}")
        return cls(
            task_id=d["task_id"],
            level=d["level"],
            passed=bool(d["passed"]),
            speedup_vs_eager=d["speedup_vs_eager"],
            speedup_vs_compile=d["speedup_vs_compile"],
        )


@dataclass(frozen=True)
class LevelReport:
    n_tasks: int
    n_passed: int
    pass_rate: float
    faster_rate_eager: float
    faster_rate_compile: float
    geomean_eager: Optional[float]
    geomean_compile: Optional[float]

    def to_dict(self) -> dict:
        return {
            "n_tasks": self.n_tasks,
            "n_passed": self.n_passed,
            "pass_rate": self.pass_rate,
            "faster_rate_eager": self.faster_rate_eager,
            "faster_rate_compile": self.faster_rate_compile,
            "geomean_eager": self.geomean_eager,
            "geomean_compile": self.geomean_compile,
        }


def _geomean(values: Sequence[float]) -> Optional[float]:
    if not values:
        return None
    return math.exp(sum(math.log(v) for v in values) / len(values))


def level_report(results: Sequence[TaskResult]) -> LevelReport:
    n = len(results)
    passed = [r for r in results if r.passed]
    if n == 0:
        return LevelReport(0, 0, 0.0, 0.0, 0.0, None, None)
    faster_eager = sum(1 for r in passed if r.speedup_vs_eager > 1.0)
    faster_compile = sum(1 for r in passed if r.speedup_vs_compile > 1.0)
    return LevelReport(
        n_tasks=n,
        n_passed=len(passed),
        pass_rate=100.0 * len(passed) / n,
        faster_rate_eager=100.0 * faster_eager / n,
        faster_rate_compile=100.0 * faster_compile / n,
        geomean_eager=_geomean([r.speedup_vs_eager for r in passed]),
        geomean_compile=_geomean([r.speedup_vs_compile for r in passed]),
    )


def aggregate_overall(
    levels: dict[str, LevelReport],
    weights: Optional[dict[str, float]] = None,
) -> LevelReport:
    """Weight rates by the fixed level budgets; pool passed tasks for geomeans."""
    weights = dict(DEFAULT_LEVEL_WEIGHTS if weights is None else weights)
    for name, w in weights.items():
        if w <= 0:
            raise ValueError(f"weight for {name} must be positive")
    present = [name for name in weights if name in levels]
    if not present:
        return LevelReport(0, 0, 0.0, 0.0, 0.0, None, None)
    total_w = sum(weights[name] for name in present)

    def rate(attr: str) -> float:
        return sum(weights[name] * getattr(levels[name], attr) for name in present) / total_w

    def pooled(attr: str) -> Optional[float]:
        log_sum = 0.0
        count = 0
        for name in present:
            rep = levels[name]
            g = getattr(rep, attr)
            if g is not None and rep.n_passed > 0:
                log_sum += rep.n_passed * math.log(g)
                count += rep.n_passed
        return math.exp(log_sum / count) if count else None

    return LevelReport(
        n_tasks=sum(levels[name].n_tasks for name in present),
        n_passed=sum(levels[name].n_passed for name in present),
        pass_rate=rate("pass_rate"),
        faster_rate_eager=rate("faster_rate_eager"),
        faster_rate_compile=rate("faster_rate_compile"),
        geomean_eager=pooled("geomean_eager"),
        geomean_compile=pooled("geomean_compile"),
    )


def split_by_level(results: Iterable[TaskResult]) -> dict[str, list[TaskResult]]:
    buckets: dict[str, list[TaskResult]] = {name: [] for name in LEVELS}
    for r in results:
        buckets[r.level].append(r)
    return buckets


def evaluate(
    results: Sequence[TaskResult],
    weights: Optional[dict[str, float]] = None,
) -> dict[str, LevelReport]:
    """Per-level reports plus the weighted Overall row."""
    buckets = split_by_level(results)
    reports = {name: level_report(buckets[name]) for name in LEVELS}
    reports["Overall"] = aggregate_overall(
        {name: reports[name] for name in LEVELS if reports[name].n_tasks > 0},
        weights,
    )
    return reports


def round_half_up(x: float, decimals: int) -> float:
    scale = 10**decimals
    return math.floor(x * scale + 0.5) / scale


def _fmt_rate(x: float) -> str:
    return f"{round_half_up(x, 1):.1f}%"


def _fmt_geomean(x: Optional[float]) -> str:
    return "-" if x is None else f"{round_half_up(x, 2):.2f}x"


def render_report(reports: dict[str, LevelReport]) -> str:
    """Fixed-width table; rates half-up to one decimal, geomeans to two."""
    header = (
        "Level    Tasks  Pass Rate  Faster(Eager)  Faster(Compile)  "
        "Geomean(Eager)  Geomean(Compile)"
    )
    lines = [header, "-" * len(header)]
    rows = [name for name in (*LEVELS, "Overall") if name in reports]
    if not any(reports[name].n_tasks for name in rows):
        lines.append("(no results)")
        return "\n".join(lines) + "\n"
    for name in rows:
        rep = reports[name]
        lines.append(
            f"{name:<8} {rep.n_tasks:>5}  {_fmt_rate(rep.pass_rate):>9}  "
            f"{_fmt_rate(rep.faster_rate_eager):>13}  "
            f"{_fmt_rate(rep.faster_rate_compile):>15}  "
            f"{_fmt_geomean(rep.geomean_eager):>14}  "
            f"{_fmt_geomean(rep.geomean_compile):>16}"
        )
    return "\n".join(lines) + "\n"


def report_to_dict(reports: dict[str, LevelReport]) -> dict:
    """Machine-readable twin of the rendered table, same rounding."""
    out = {}
    for name, rep in reports.items():
        out[name] = {
            "n_tasks": rep.n_tasks,
            "n_passed": rep.n_passed,
            "pass_rate": round_half_up(rep.pass_rate, 1),
            "faster_rate_eager": round_half_up(rep.faster_rate_eager, 1),
            "faster_rate_compile": round_half_up(rep.faster_rate_compile, 1),
            "geomean_eager": None
            if rep.geomean_eager is None
            else round_half_up(rep.geomean_eager, 2),
            "geomean_compile": None
            if rep.geomean_compile is None
            else round_half_up(rep.geomean_compile, 2),
        }
    return out


def write_results(results: Sequence[TaskResult], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as f:
        for r in results:
            f.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")


def read_results(path: str | Path) -> list[TaskResult]:
    path = Path(path)
    results = []
    for i, line in enumerate(path.read_text(encoding="utf-8").splitlines()):
        if not line.strip():
            continue
        try:
            results.append(TaskResult.from_dict(json.loads(line)))
        except (json.JSONDecodeError, ValueError) as e:
            raise ResultFormatError(f"line {i + 1}: {e}") from e
    return results
