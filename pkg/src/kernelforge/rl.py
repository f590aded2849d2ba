"""Losses and estimators over recorded trajectories.

Everything here is measurement, not training: advantages, value targets,
the clipped surrogate, ratio precision diagnostics, and the filters and
loss for rejection fine-tuning. Log-probs arrive from outside (a policy
adapter or a test stub); this module never touches a model.

Masking convention: loss_mask marks action tokens. Every mean or sum below
runs over masked tokens only, per sequence first, then across a batch.
Advantages are not normalized unless explicitly requested.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .seeding import canonical_json

FLOOR_LOGP = math.log(1e-8)
REDUNDANT_LOOP_THRESHOLD = 3

RFT_REASONS = ("nonpositive_reward", "redundant_loop", "schema_violation")


class TrajectoryError(ValueError):
    pass


@dataclass(frozen=True)
class GaeParams:
    gamma: float = 1.0
    lam: float = 0.95

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must be in [0, 1]")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lam must be in [0, 1]")


@dataclass(frozen=True)
class ClipParams:
    eps_lower: float = 0.2
    eps_higher: float = 0.28

    def __post_init__(self):
        for name in ("eps_lower", "eps_higher"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must be in (0, 1)")


@dataclass(frozen=True)
class TrajectoryTensors:
    """One episode's per-token tensors; reward lands on the final step only."""

    rewards: tuple[float, ...]
    values: tuple[float, ...]
    logp_old: tuple[float, ...]
    logp_new: tuple[float, ...]
    loss_mask: tuple[bool, ...]

    def __post_init__(self):
        lengths = {
            len(self.rewards),
            len(self.values),
            len(self.logp_old),
            len(self.logp_new),
            len(self.loss_mask),
        }
        if len(lengths) != 1:
            raise TrajectoryError("all trajectory sequences must share one length")
        if self.T == 0:
            raise TrajectoryError("empty trajectory")
        if any(r != 0.0 for r in self.rewards[:-1]):
            raise TrajectoryError("reward must be zero before the final step")

    @property
    def T(self) -> int:
        return len(self.rewards)

    def to_dict(self) -> dict:
        return {
            "T": self.T,
            "rewards": list(self.rewards),
            "values": list(self.values),
            "logp_old": list(self.logp_old),
            "logp_new": list(self.logp_new),
            "loss_mask": [bool(m) for m in self.loss_mask],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrajectoryTensors":
        traj = cls(
            rewards=tuple(float(x) for x in d["rewards"]),
            values=tuple(float(x) for x in d["values"]),
            logp_old=tuple(float(x) for x in d["logp_old"]),
            logp_new=tuple(float(x) for x in d["logp_new"]),
            loss_mask=tuple(bool(x) for x in d["loss_mask"]),
        )
        if "T" in d and int(d["T"]) != traj.T:
            raise TrajectoryError(f"declared T={d['T']} but sequences have {traj.T}")
        return traj


def load_trajectories(path: str | Path) -> list[TrajectoryTensors]:
    out = []
    for i, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines()):
        if not line.strip():
            continue
        try:
            out.append(TrajectoryTensors.from_dict(json.loads(line)))
        except (json.JSONDecodeError, KeyError, ValueError) as e:
            raise TrajectoryError(f"line {i + 1}: {e}") from e
    return out


def save_trajectories(trajs: Sequence[TrajectoryTensors], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as f:
        for traj in trajs:
            f.write(json.dumps(traj.to_dict(), sort_keys=True) + "\n")


def gae_from_arrays(
    rewards: Sequence[float],
    values: Sequence[float],
    params: GaeParams = GaeParams(),
) -> tuple[np.ndarray, np.ndarray]:
    """Backward-recursion GAE with a zero terminal bootstrap.

    delta_t = r_t + gamma*V(s_{t+1}) - V(s_t), A_t = delta_t +
    gamma*lam*A_{t+1}; targets are V + A.
    """
    r = np.asarray(rewards, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    if r.shape != v.shape or r.ndim != 1:
        raise TrajectoryError("rewards and values must be equal-length vectors")
    T = r.shape[0]
    if T == 0:
        raise TrajectoryError("empty trajectory")
    adv = np.zeros(T, dtype=np.float64)
    running = 0.0
    for t in range(T - 1, -1, -1):
        next_value = v[t + 1] if t + 1 < T else 0.0
        delta = r[t] + params.gamma * next_value - v[t]
        running = delta + params.gamma * params.lam * running
        adv[t] = running
    return adv, v + adv


def gae(
    traj: TrajectoryTensors, params: GaeParams = GaeParams()
) -> tuple[np.ndarray, np.ndarray]:
    return gae_from_arrays(traj.rewards, traj.values, params)


def _masked_indices(mask: Sequence[bool]) -> np.ndarray:
    idx = np.flatnonzero(np.asarray(mask, dtype=bool))
    if idx.size == 0:
        raise TrajectoryError("loss mask selects no tokens")
    return idx


def value_loss(
    values: Sequence[float], targets: Sequence[float], mask: Sequence[bool]
) -> float:
    v = np.asarray(values, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if v.shape != t.shape or len(mask) != v.shape[0]:
        raise TrajectoryError("values, targets and mask must share one length")
    idx = _masked_indices(mask)
    resid = v[idx] - t[idx]
    return 0.5 * float(np.mean(resid * resid))


def importance_ratios(
    logp_old: Sequence[float], logp_new: Sequence[float]
) -> np.ndarray:
    old = np.asarray(logp_old, dtype=np.float64)
    new = np.asarray(logp_new, dtype=np.float64)
    if old.shape != new.shape:
        raise TrajectoryError("logp sequences must share one length")
    with np.errstate(over="ignore"):
        rho = np.exp(new - old)
    return rho


def ppo_surrogate(
    traj: TrajectoryTensors,
    advantages: Sequence[float],
    params: ClipParams = ClipParams(),
    normalize: bool = False,
) -> float:
    """Masked mean of min(rho*A, clip(rho)*A); larger is better."""
    adv = np.asarray(advantages, dtype=np.float64)
    if adv.shape[0] != traj.T:
        raise TrajectoryError("advantages must match trajectory length")
    rho = importance_ratios(traj.logp_old, traj.logp_new)
    bad = np.flatnonzero(~np.isfinite(rho))
    if bad.size:
        raise TrajectoryError(f"non-finite importance ratio at token {int(bad[0])}")
    idx = _masked_indices(traj.loss_mask)
    adv = adv[idx]
    rho = rho[idx]
    if normalize:
        spread = adv.std()
        adv = (adv - adv.mean()) / (spread if spread > 0 else 1.0)
    clipped = np.clip(rho, 1.0 - params.eps_lower, 1.0 + params.eps_higher)
    terms = np.minimum(rho * adv, clipped * adv)
    return float(np.mean(terms))


def ppo_surrogate_batch(
    trajs: Sequence[TrajectoryTensors],
    advantages: Sequence[Sequence[float]],
    params: ClipParams = ClipParams(),
    normalize: bool = False,
) -> float:
    if len(trajs) != len(advantages):
        raise TrajectoryError("one advantage vector per trajectory")
    if not trajs:
        raise TrajectoryError("empty batch")
    per_seq = [
        ppo_surrogate(traj, adv, params, normalize)
        for traj, adv in zip(trajs, advantages)
    ]
    return float(np.mean(per_seq))


@dataclass(frozen=True)
class RatioDiagnostics:
    n_floor_tokens: int
    max_ratio: float
    ratio_variance: float
    flagged: tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "n_floor_tokens": self.n_floor_tokens,
            "max_ratio": self.max_ratio,
            "ratio_variance": self.ratio_variance,
            "flagged": list(self.flagged),
        }


def ratio_diagnostics(
    logp_old: Sequence[float],
    logp_new: Sequence[float],
    floor_logp: float = FLOOR_LOGP,
) -> RatioDiagnostics:
    """Flag behavior-policy log-probs near the precision floor.

    Ratios blow up when logp_old sits at the representable edge, so the
    floor is set a decade above where the blow-ups start.
    """
    old = np.asarray(logp_old, dtype=np.float64)
    rho = importance_ratios(logp_old, logp_new)
    flagged = tuple(int(i) for i in np.flatnonzero(old < floor_logp))
    finite = rho[np.isfinite(rho)]
    max_ratio = float(finite.max()) if finite.size else float("inf")
    variance = float(finite.var()) if finite.size else float("inf")
    return RatioDiagnostics(
        n_floor_tokens=len(flagged),
        max_ratio=max_ratio,
        ratio_variance=variance,
        flagged=flagged,
    )


@dataclass(frozen=True)
class RftVerdict:
    kept: bool
    reasons: tuple[str, ...] = field(default=())

    def __post_init__(self):
        unknown = [r for r in self.reasons if r not in RFT_REASONS]
        if unknown:
            raise ValueError(f"unknown reasons {unknown}")
        if self.kept != (not self.reasons):
            raise ValueError("kept must mean no reasons")

    def to_dict(self) -> dict:
        return {"kept": self.kept, "reasons": list(self.reasons)}


def _turn_key(turn: Mapping) -> tuple[str, str, str]:
    return (
        str(turn.get("tool")),
        canonical_json(turn.get("args")),
        str(turn.get("observation_digest")),
    )


def rft_filter(
    turns: Sequence[Mapping],
    reward: float,
    loop_threshold: int = REDUNDANT_LOOP_THRESHOLD,
) -> RftVerdict:
    """Keep only clean, positively rewarded episodes.

    Turn records carry {tool, args, observation_digest, schema_ok}. A
    redundant loop is loop_threshold consecutive turns with the same tool,
    args, and observation; one schema violation anywhere taints the episode.
    """
    reasons = []
    if reward <= 0:
        reasons.append("nonpositive_reward")

    run = 0
    prev_key = None
    looped = False
    for turn in turns:
        key = _turn_key(turn)
        run = run + 1 if key == prev_key else 1
        prev_key = key
        if run >= loop_threshold:
            looped = True
    if looped:
        reasons.append("redundant_loop")

    if any(not turn.get("schema_ok", True) for turn in turns):
        reasons.append("schema_violation")

    return RftVerdict(kept=not reasons, reasons=tuple(reasons))


def rft_loss(logp_new: Sequence[float], loss_mask: Sequence[bool]) -> float:
    """Negative sum of masked log-probs for one trajectory."""
    logp = np.asarray(logp_new, dtype=np.float64)
    if len(loss_mask) != logp.shape[0]:
        raise TrajectoryError("logp and mask must share one length")
    idx = _masked_indices(loss_mask)
    return float(-np.sum(logp[idx]))


def rft_loss_batch(trajs: Sequence[TrajectoryTensors]) -> float:
    if not trajs:
        raise TrajectoryError("empty batch")
    return float(np.mean([rft_loss(t.logp_new, t.loss_mask) for t in trajs]))
