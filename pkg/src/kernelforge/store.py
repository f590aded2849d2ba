"""Append-only line-delimited episode log store.

Each record is one JSON object on one line, written with a single
os.write so a crashed writer can only ever leave a partial final line.
Scans tolerate exactly that failure mode (warn and drop the tail);
corruption anywhere else is a hard error with the byte offset.
"""

from __future__ import annotations

import json
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from .sim.executor import MeasurementReport


class StoreError(RuntimeError):
    pass


@dataclass(frozen=True)
class TurnRecord:
    turn_index: int
    action: dict
    observation_digest: str
    observation_bytes: int
    schema_ok: bool = True

    def to_dict(self) -> dict:
        return {
            "turn_index": self.turn_index,
            "action": self.action,
            "observation_digest": self.observation_digest,
            "observation_bytes": self.observation_bytes,
            "schema_ok": self.schema_ok,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TurnRecord":
        return cls(
            turn_index=int(d["turn_index"]),
            action=dict(d["action"]),
            observation_digest=str(d["observation_digest"]),
            observation_bytes=int(d["observation_bytes"]),
            schema_ok=bool(d.get("schema_ok", True)),
        )


@dataclass(frozen=True)
class EpisodeLog:
    task_id: str
    policy_id: str
    seed: int
    turns: tuple[TurnRecord, ...] = ()
    measurements: tuple[MeasurementReport, ...] = ()
    final_reward: float = -1
    budgets_used: dict = field(default_factory=dict)
    done_reason: Optional[str] = None
    level_tag: Optional[str] = None

    def __post_init__(self):
        indices = [t.turn_index for t in self.turns]
        if indices != sorted(indices):
            raise StoreError(f"turns out of order in {self.task_id}")

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "policy_id": self.policy_id,
            "seed": self.seed,
            "turns": [t.to_dict() for t in self.turns],
            "measurements": [m.to_dict() for m in self.measurements],
            "final_reward": self.final_reward,
            "budgets_used": self.budgets_used,
            "done_reason": self.done_reason,
            "level_tag": self.level_tag,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EpisodeLog":
        try:
            return cls(
                task_id=str(d["task_id"]),
                policy_id=str(d["policy_id"]),
                seed=int(d["seed"]),
                turns=tuple(TurnRecord.from_dict(t) for t in d["turns"]),
                measurements=tuple(
                    MeasurementReport.from_dict(m) for m in d["measurements"]
                ),
                final_reward=d["final_reward"],
                budgets_used=dict(d["budgets_used"]),
                done_reason=d.get("done_reason"),
                level_tag=d.get("level_tag"),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise StoreError(f"malformed episode record: {e}") from None


def store_append(path: str | Path, log: EpisodeLog) -> None:
    line = json.dumps(log.to_dict(), sort_keys=True) + "\n"
    data = line.encode("utf-8")
    fd = os.open(str(path), os.O_WRONLY | os.O_APPEND | os.O_CREAT, 0o644)
    try:
        os.write(fd, data)
    finally:
        os.close(fd)


def store_scan(
    path: str | Path,
    predicate: Optional[Callable[[EpisodeLog], bool]] = None,
) -> list[EpisodeLog]:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise StoreError(f"cannot read store {path}: {e}") from None
    logs: list[EpisodeLog] = []
    offset = 0
    while offset < len(blob):
        newline = blob.find(b"\n", offset)
        if newline == -1:
            warnings.warn(
                f"{path}: ignoring partial trailing record at byte {offset}",
                stacklevel=2,
            )
            break
        line = blob[offset:newline]
        if line.strip():
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise StoreError(
                    f"{path}: corrupt record at byte {offset}: {e}"
                ) from None
            log = EpisodeLog.from_dict(record)
            if predicate is None or predicate(log):
                logs.append(log)
        offset = newline + 1
    return logs
