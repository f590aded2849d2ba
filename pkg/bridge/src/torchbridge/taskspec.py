"""Task JSON parsing and validation.

The wire format is a stable contract:

    {
      "task_id": str,
      "inputs":  [{"shape": [int,...], "dtype": str, "seedable": bool}, ...],
      "nodes":   [{"id": str, "kind": str, "inputs": [str,...], "params": {}}, ...],
      "outputs": [str, ...],
      "provenance": str, "level_tag": str | null, "base_seed": int
    }

Node semantics (shared with the reference interpreter on the other side of
the wire; both ends must agree or verification verdicts drift):

    ew           add|mul binary (equal shapes, or a 1-D (n,) vector
                 broadcast along the other operand's leading axis of n);
                 relu|sigmoid unary; div_const unary with nonzero "const"
    matmul       (n,k)@(k,m) -> (n,m) or (n,k)@(k,) -> (n,)
    diag_matmul  (n,) x (n,m) -> (n,m), out[i,j] = A[i]*B[i,j]
    reduction    "op" sum|mean, "axis" int or null (null -> scalar)
    scale        "factor" float, out = factor * x
    conv         2-D valid cross-correlation, stride 1, "weight" nested list

Inputs are addressed in0, in1, ...; nodes must be topologically ordered and
no single tensor may exceed 2**20 elements.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Any, Optional

Shape = tuple[int, ...]

MAX_ELEMENTS = 1 << 20
EW_BINARY_OPS = ("add", "mul")
EW_UNARY_OPS = ("relu", "sigmoid", "div_const")
REDUCTION_OPS = ("sum", "mean")

_INPUT_REF = re.compile(r"^in(\d+)$")
_ID_OK = re.compile(r"^[A-Za-z_][A-Za-z0-9_\-]*$")


class TaskError(ValueError):
    pass


def is_input_ref(ref: str) -> bool:
    return _INPUT_REF.match(ref) is not None


@dataclass(frozen=True)
class TensorSpec:
    shape: Shape
    dtype: str = "f32"
    seedable: bool = True


@dataclass(frozen=True)
class Node:
    id: str
    kind: str
    inputs: tuple[str, ...]
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Graph:
    inputs: tuple[TensorSpec, ...]
    nodes: tuple[Node, ...]
    outputs: tuple[str, ...]

    def node_map(self) -> dict[str, Node]:
        return {n.id: n for n in self.nodes}


@dataclass(frozen=True)
class Task:
    task_id: str
    graph: Graph
    provenance: str = "seed"
    level_tag: Optional[str] = None
    base_seed: int = 0


def consumers(graph: Graph) -> dict[str, list[str]]:
    out: dict[str, list[str]] = {}
    for node in graph.nodes:
        for ref in node.inputs:
            out.setdefault(ref, []).append(node.id)
    return out


def _binary_shape(a: Shape, b: Shape) -> Optional[Shape]:
    if a == b:
        return a
    if len(a) == 1 and len(b) >= 2 and b[0] == a[0]:
        return b
    if len(b) == 1 and len(a) >= 2 and a[0] == b[0]:
        return a
    return None


def node_output_shape(node: Node, in_shapes: list[Shape]) -> Shape:
    kind, nid = node.kind, node.id
    if kind == "ew":
        op = node.params.get("op")
        if op in EW_BINARY_OPS:
            if len(in_shapes) != 2:
                raise TaskError(f"node {nid}: ew {op} takes 2 inputs")
            out = _binary_shape(in_shapes[0], in_shapes[1])
            if out is None:
                raise TaskError(
                    f"node {nid}: ew {op} cannot combine {in_shapes[0]} and {in_shapes[1]}"
                )
            return out
        if op in EW_UNARY_OPS:
            if len(in_shapes) != 1:
                raise TaskError(f"node {nid}: ew {op} takes 1 input")
            if op == "div_const":
                const = node.params.get("const")
                if not isinstance(const, (int, float)) or const == 0:
                    raise TaskError(f"node {nid}: div_const needs a nonzero const")
            return in_shapes[0]
        raise TaskError(f"node {nid}: unknown ew op {op!r}")

    if kind == "matmul":
        if len(in_shapes) != 2:
            raise TaskError(f"node {nid}: matmul takes 2 inputs")
        a, b = in_shapes
        if len(a) == 2 and len(b) == 2 and a[1] == b[0]:
            return (a[0], b[1])
        if len(a) == 2 and len(b) == 1 and a[1] == b[0]:
            return (a[0],)
        raise TaskError(f"node {nid}: matmul shapes {a} x {b} incompatible")

    if kind == "diag_matmul":
        if len(in_shapes) != 2:
            raise TaskError(f"node {nid}: diag_matmul takes 2 inputs")
        a, b = in_shapes
        if len(a) == 1 and len(b) == 2 and b[0] == a[0]:
            return b
        raise TaskError(f"node {nid}: diag_matmul expects (n,) and (n,m), got {a} x {b}")

    if kind == "reduction":
        if node.params.get("op") not in REDUCTION_OPS:
            raise TaskError(f"node {nid}: unknown reduction op")
        if len(in_shapes) != 1:
            raise TaskError(f"node {nid}: reduction takes 1 input")
        shape = in_shapes[0]
        axis = node.params.get("axis")
        if axis is None:
            return ()
        if not isinstance(axis, int) or not (0 <= axis < len(shape)):
            raise TaskError(f"node {nid}: reduction axis {axis!r} invalid for {shape}")
        return shape[:axis] + shape[axis + 1 :]

    if kind == "scale":
        if len(in_shapes) != 1:
            raise TaskError(f"node {nid}: scale takes 1 input")
        if not isinstance(node.params.get("factor"), (int, float)):
            raise TaskError(f"node {nid}: scale needs a numeric factor")
        return in_shapes[0]

    if kind == "conv":
        if len(in_shapes) != 1:
            raise TaskError(f"node {nid}: conv takes 1 input")
        shape = in_shapes[0]
        w = node.params.get("weight")
        if (
            not isinstance(w, list)
            or not w
            or not all(isinstance(r, list) and r and len(r) == len(w[0]) for r in w)
        ):
            raise TaskError(f"node {nid}: conv weight must be a 2-D nested list")
        kh, kw = len(w), len(w[0])
        if len(shape) != 2 or shape[0] < kh or shape[1] < kw:
            raise TaskError(f"node {nid}: conv window ({kh},{kw}) too big for {shape}")
        return (shape[0] - kh + 1, shape[1] - kw + 1)

    raise TaskError(f"node {nid}: unknown kind {kind!r}")


def infer_shapes(graph: Graph) -> dict[str, Shape]:
    """Shapes for every reference; TaskError on the first violation.

    Topological order is required, so one forward pass suffices.
    """
    shapes: dict[str, Shape] = {}
    for i, spec in enumerate(graph.inputs):
        if any(d <= 0 for d in spec.shape):
            raise TaskError(f"input in{i}: nonpositive dimension in {spec.shape}")
        if math.prod(spec.shape) > MAX_ELEMENTS:
            raise TaskError(f"input in{i}: {spec.shape} exceeds the element cap")
        shapes[f"in{i}"] = spec.shape

    for node in graph.nodes:
        if not _ID_OK.match(node.id) or is_input_ref(node.id):
            raise TaskError(f"node id {node.id!r} is not a legal identifier")
        if node.id in shapes:
            raise TaskError(f"duplicate node id {node.id!r}")
        in_shapes = []
        for ref in node.inputs:
            if ref not in shapes:
                raise TaskError(f"node {node.id}: reference {ref!r} undefined")
            in_shapes.append(shapes[ref])
        out = node_output_shape(node, in_shapes)
        if math.prod(out) > MAX_ELEMENTS:
            raise TaskError(f"node {node.id}: output {out} exceeds the element cap")
        shapes[node.id] = out

    if not graph.outputs:
        raise TaskError("graph has no outputs")
    for ref in graph.outputs:
        if ref not in shapes:
            raise TaskError(f"output reference {ref!r} undefined")
    return shapes


def parse_graph(d: dict[str, Any]) -> Graph:
    for key in ("inputs", "nodes", "outputs"):
        if not isinstance(d.get(key), list):
            raise TaskError(f"{key} must be a list")
    specs = []
    for i, item in enumerate(d["inputs"]):
        if not isinstance(item, dict):
            raise TaskError(f"inputs[{i}] must be an object")
        shape = item.get("shape")
        if not (isinstance(shape, list) and all(isinstance(x, int) for x in shape)):
            raise TaskError(f"inputs[{i}].shape must be a list of ints")
        specs.append(
            TensorSpec(
                shape=tuple(shape),
                dtype=item.get("dtype", "f32"),
                seedable=bool(item.get("seedable", True)),
            )
        )
    nodes = []
    for i, item in enumerate(d["nodes"]):
        if not isinstance(item, dict):
            raise TaskError(f"nodes[{i}] must be an object")
        for key in ("id", "kind", "inputs"):
            if key not in item:
                raise TaskError(f"nodes[{i}] missing {key!r}")
        params = item.get("params", {})
        if not isinstance(params, dict):
            raise TaskError(f"nodes[{i}].params must be an object")
        nodes.append(
            Node(
                id=str(item["id"]),
                kind=str(item["kind"]),
                inputs=tuple(str(r) for r in item["inputs"]),
                params=params,
            )
        )
    return Graph(
        inputs=tuple(specs), nodes=tuple(nodes), outputs=tuple(str(r) for r in d["outputs"])
    )


def parse_task(d: Any) -> Task:
    if not isinstance(d, dict):
        raise TaskError("task must be a JSON object")
    if "task_id" not in d:
        raise TaskError("task missing task_id")
    graph = parse_graph(d)
    task = Task(
        task_id=str(d["task_id"]),
        graph=graph,
        provenance=str(d.get("provenance", "seed")),
        level_tag=d.get("level_tag"),
        base_seed=int(d.get("base_seed", 0)),
    )
    infer_shapes(graph)
    return task
