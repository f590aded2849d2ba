"""Reward assignment over verified measurements.

The integer schedule is deliberately coarse: a wrong kernel is punished, a
correct-but-slow one still earns something, and only beating the compiled
baseline by a real margin gets the top score. `speedup_reward` is the
continuous alternative kept around for ablations. Both consume the same
`RewardInput`, usually built from the best report of an episode.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .sim.executor import MeasurementReport

# Strictly-greater margin for b(t, t0): a 5.0% improvement does not count.
SPEEDUP_MARGIN = 0.05

REWARD_INCORRECT = -1
REWARD_CORRECT = 1
REWARD_FASTER_THAN_EAGER = 2
REWARD_FASTER_THAN_BOTH = 3


@dataclass(frozen=True)
class RewardInput:
    """What the schedule needs to know about one measured candidate."""

    correct: bool
    t: Optional[float] = None
    t_eager: Optional[float] = None
    t_compile: Optional[float] = None

    def __post_init__(self):
        if self.correct:
            for name in ("t", "t_eager", "t_compile"):
                v = getattr(self, name)
                if v is None or v <= 0:
                    raise ValueError(f"{name} must be a positive time when correct")

    @classmethod
    def from_report(cls, report: MeasurementReport) -> "RewardInput":
        if not report.correct:
            return cls(correct=False)
        return cls(
            correct=True,
            t=report.candidate_ms,
            t_eager=report.eager_ms,
            t_compile=report.compile_ms,
        )


def significant_speedup(t: float, t0: float) -> bool:
    """b(t, t0): true iff t undercuts t0 by strictly more than the margin.

    Written as t < t0*(1-margin) rather than (t0-t)/t0 > margin so the
    t=0.95, t0=1.00 boundary lands exactly on "not significant" instead of
    a few ulps above it.
    """
    if t <= 0 or t0 <= 0:
        raise ValueError("times must be positive")
    return t < t0 * (1.0 - SPEEDUP_MARGIN)


def schedule_reward(inp: RewardInput) -> int:
    if not inp.correct:
        return REWARD_INCORRECT
    beats_eager = significant_speedup(inp.t, inp.t_eager)
    beats_compile = significant_speedup(inp.t, inp.t_compile)
    if beats_eager and beats_compile:
        return REWARD_FASTER_THAN_BOTH
    if beats_eager:
        return REWARD_FASTER_THAN_EAGER
    return REWARD_CORRECT


def speedup_reward(inp: RewardInput) -> float:
    """Continuous variant: ratio to the compiled baseline, -1 when wrong."""
    if not inp.correct:
        return float(REWARD_INCORRECT)
    return inp.t_compile / inp.t


def best_of_trajectory(
    reports: Sequence[MeasurementReport],
) -> Optional[MeasurementReport]:
    """Correct report with the highest compile-baseline speedup.

    Ties go to the earliest report so reruns of a stored episode pick the
    same submission.
    """
    best = None
    best_ratio = None
    for report in reports:
        if not report.correct:
            continue
        ratio = report.compile_ms / report.candidate_ms
        if best_ratio is None or ratio > best_ratio:
            best = report
            best_ratio = ratio
    return best


def episode_reward(
    reports: Sequence[MeasurementReport], variant: str = "robust"
) -> int | float:
    """Score a whole episode by its best report; no correct report means -1."""
    best = best_of_trajectory(reports)
    if best is None:
        return REWARD_INCORRECT if variant == "robust" else float(REWARD_INCORRECT)
    inp = RewardInput.from_report(best)
    if variant == "robust":
        return schedule_reward(inp)
    if variant == "speedup":
        return speedup_reward(inp)
    raise ValueError(f"unknown reward variant {variant!r}")
