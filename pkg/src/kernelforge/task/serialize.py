"""Task JSON: the on-disk and on-wire shape of an OperatorTask.

Field names are a stable contract shared with external executors, so they
are spelled out here once and nowhere else:

    {
      "task_id": str,
      "inputs":  [{"shape": [int,...], "dtype": str, "seedable": bool}, ...],
      "nodes":   [{"id": str, "kind": str, "inputs": [str,...], "params": {}}, ...],
      "outputs": [str, ...],
      "provenance": str,
      "level_tag": str | null,
      "base_seed": int
    }

`seedable` defaults to true and is omitted when true, keeping seed-catalog
entries terse. Round-trip is bit-exact through canonical_json.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

from ..seeding import canonical_json, stable_digest
from .graph import (
    GraphValidationError,
    OperatorNode,
    OperatorTask,
    OpGraph,
    TensorSpec,
    infer_shapes,
)


class TaskFormatError(ValueError):
    pass


def graph_to_dict(graph: OpGraph) -> dict[str, Any]:
    inputs = []
    for spec in graph.inputs:
        d: dict[str, Any] = {"shape": list(spec.shape), "dtype": spec.dtype}
        if not spec.seedable:
            d["seedable"] = False
        inputs.append(d)
    return {
        "inputs": inputs,
        "nodes": [
            {
                "id": n.id,
                "kind": n.kind,
                "inputs": list(n.inputs),
                "params": n.params,
            }
            for n in graph.nodes
        ],
        "outputs": list(graph.outputs),
    }


def task_to_dict(task: OperatorTask) -> dict[str, Any]:
    d = graph_to_dict(task.graph)
    d["task_id"] = task.task_id
    d["provenance"] = task.provenance
    d["level_tag"] = task.level_tag
    d["base_seed"] = task.base_seed
    return d


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise TaskFormatError(msg)


def graph_from_dict(d: dict[str, Any]) -> OpGraph:
    _require(isinstance(d.get("inputs"), list), "inputs must be a list")
    _require(isinstance(d.get("nodes"), list), "nodes must be a list")
    _require(isinstance(d.get("outputs"), list), "outputs must be a list")
    specs = []
    for i, item in enumerate(d["inputs"]):
        _require(isinstance(item, dict), f"inputs[{i}] must be an object")
        shape = item.get("shape")
        _require(
            isinstance(shape, list) and all(isinstance(x, int) for x in shape),
            f"inputs[{i}].shape must be a list of ints",
        )
        specs.append(
            TensorSpec(
                shape=tuple(shape),
                dtype=item.get("dtype", "f32"),
                seedable=bool(item.get("seedable", True)),
            )
        )
    nodes = []
    for i, item in enumerate(d["nodes"]):
        _require(isinstance(item, dict), f"nodes[{i}] must be an object")
        for key in ("id", "kind", "inputs"):
            _require(key in item, f"nodes[{i}] missing {key!r}")
        params = item.get("params", {})
        _require(isinstance(params, dict), f"nodes[{i}].params must be an object")
        nodes.append(
            OperatorNode(
                id=str(item["id"]),
                kind=str(item["kind"]),
                inputs=tuple(str(r) for r in item["inputs"]),
                params=params,
            )
        )
    return OpGraph(
        inputs=tuple(specs),
        nodes=tuple(nodes),
        outputs=tuple(str(r) for r in d["outputs"]),
    )


def task_from_dict(d: dict[str, Any], validate: bool = True) -> OperatorTask:
    _require(isinstance(d, dict), "task must be a JSON object")
    _require("task_id" in d, "task missing task_id")
    graph = graph_from_dict(d)
    task = OperatorTask(
        task_id=str(d["task_id"]),
        graph=graph,
        provenance=str(d.get("provenance", "seed")),
        level_tag=d.get("level_tag"),
        base_seed=int(d.get("base_seed", 0)),
    )
    if validate:
        try:
            infer_shapes(graph)
        except GraphValidationError as e:
            raise TaskFormatError(f"task {task.task_id}: {e}") from e
    return task


def dumps_task(task: OperatorTask) -> str:
    return canonical_json(task_to_dict(task))


def loads_task(text: str) -> OperatorTask:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise TaskFormatError(f"invalid JSON: {e}") from e
    return task_from_dict(d)


def save_task(task: OperatorTask, path: str | Path) -> None:
    Path(path).write_text(dumps_task(task) + "\n", encoding="utf-8")


def load_task(path: str | Path) -> OperatorTask:
    return loads_task(Path(path).read_text(encoding="utf-8"))


def task_digest(task: OperatorTask) -> str:
    return stable_digest(task_to_dict(task))


def graph_digest(graph: OpGraph) -> str:
    return stable_digest(graph_to_dict(graph))
