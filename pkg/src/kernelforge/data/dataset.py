"""Dataset directories: one task file per task plus a manifest.

Layout:
    <dir>/manifest.json
    <dir>/tasks/<task_id>.json

The manifest records counts by provenance and whatever pipeline statistics
(filtering, decontamination) produced the dataset.
"""

from __future__ import annotations

import json
import re
from pathlib import Path
from typing import Any, Optional

from ..task.graph import OperatorTask
from ..task.serialize import TaskFormatError, load_task, save_task
from .synth import parse_provenance_category

_SAFE_ID = re.compile(r"^[A-Za-z0-9_\-.]+$")


class DatasetError(ValueError):
    pass


def composition_report(tasks: list[OperatorTask]) -> dict:
    """Counts and half-up two-decimal percentages by chain-length category."""
    if not tasks:
        raise DatasetError("composition report of an empty dataset")
    categories = ["x1", "x2", "x3", "x4", "x5", "transformer-like"]
    counts = {c: 0 for c in categories}
    for task in tasks:
        counts[parse_provenance_category(task.provenance)] += 1
    total = len(tasks)
    percent = {c: _round2(100.0 * counts[c] / total) for c in categories}
    return {"total": total, "counts": counts, "percent": percent}


def _round2(x: float) -> float:
    """Round half up to two decimals (3.405 -> 3.41, not banker's 3.40)."""
    return int(x * 100 + 0.5) / 100


def write_dataset(
    tasks: list[OperatorTask],
    directory: str | Path,
    extra_manifest: Optional[dict[str, Any]] = None,
) -> Path:
    directory = Path(directory)
    ids = [t.task_id for t in tasks]
    if len(set(ids)) != len(ids):
        raise DatasetError("duplicate task ids in dataset")
    for tid in ids:
        if not _SAFE_ID.match(tid):
            raise DatasetError(f"task id {tid!r} is not filesystem-safe")
    tasks_dir = directory / "tasks"
    tasks_dir.mkdir(parents=True, exist_ok=True)
    for task in tasks:
        save_task(task, tasks_dir / f"{task.task_id}.json")
    manifest = {
        "count": len(tasks),
        "composition": composition_report(tasks) if tasks else None,
    }
    if extra_manifest:
        manifest.update(extra_manifest)
    (directory / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return directory


def load_dataset(directory: str | Path) -> tuple[list[OperatorTask], dict]:
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    tasks_dir = directory / "tasks"
    if not manifest_path.is_file() or not tasks_dir.is_dir():
        raise DatasetError(f"{directory} is not a dataset directory")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise DatasetError(f"bad manifest: {e}") from e
    tasks = []
    for path in sorted(tasks_dir.glob("*.json")):
        try:
            tasks.append(load_task(path))
        except TaskFormatError as e:
            raise DatasetError(f"bad task file {path.name}: {e}") from e
    return tasks, manifest
