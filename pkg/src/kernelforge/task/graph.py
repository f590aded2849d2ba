"""Operator graphs: the task representation everything else consumes.

This module is the single source of truth for node semantics. The catalog is
deliberately small but covers the shapes of behavior the optimization loop
cares about: cheap fusable pointwise work, matmul-style contractions, a
diagonal matmul written the wasteful way on purpose, reductions, and a small
stride-1 convolution.

Node catalog
------------
``ew``          params {"op": one of add|mul|relu|sigmoid|div_const,
                        "const": float (div_const only, != 0)}
                add/mul are binary, the rest unary. Binary operands must have
                equal shapes, or one operand may be 1-D ``(n,)`` while the
                other's leading axis is ``n``; the vector then broadcasts
                along axis 0 (row broadcast). Result shape is the
                higher-rank operand's shape.
``matmul``      binary. (n,k)@(k,m) -> (n,m), or (n,k)@(k,) -> (n,).
``diag_matmul`` binary. A ``(n,)``, B ``(n,m)`` -> ``(n,m)`` with
                out[i,j] = A[i]*B[i,j]. Semantically a row scaling; the cost
                model charges it as "materialize diag(A), then GEMM", which
                is exactly the inefficiency agents are supposed to notice.
``reduction``   unary. params {"op": sum|mean, "axis": int or null}.
                axis null collapses to a scalar ``()``.
``scale``       unary. params {"factor": float}. out = factor * x.
``conv``        unary. params {"weight": 2-D nested list, small window}.
                2-D valid cross-correlation, stride 1:
                (h,w) -> (h-kh+1, w-kw+1).

Reference strings: graph inputs are addressed ``in0``, ``in1``, ...; any
other reference names a node id. Node ids therefore must not look like
``in<digits>``. Graph outputs may reference inputs directly (identity-style
graphs with zero nodes are legal).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Optional

Shape = tuple[int, ...]

EW_OPS = ("add", "mul", "relu", "sigmoid", "div_const")
EW_BINARY_OPS = ("add", "mul")
REDUCTION_OPS = ("sum", "mean")
NODE_KINDS = ("ew", "matmul", "diag_matmul", "reduction", "scale", "conv")

# Hard cap on any single tensor in a task; keeps the reference interpreter
# and the simulated profiler desk-scale.
MAX_ELEMENTS = 1 << 20

_INPUT_REF = re.compile(r"^in(\d+)$")
_ID_OK = re.compile(r"^[A-Za-z_][A-Za-z0-9_\-]*$")


def is_input_ref(ref: str) -> bool:
    return _INPUT_REF.match(ref) is not None


def input_ref_index(ref: str) -> int:
    m = _INPUT_REF.match(ref)
    if m is None:
        raise ValueError(f"not an input reference: {ref!r}")
    return int(m.group(1))


@dataclass(frozen=True)
class TensorSpec:
    """Shape/dtype/seedability of one graph input."""

    shape: Shape
    dtype: str = "f32"
    seedable: bool = True


@dataclass(frozen=True)
class OperatorNode:
    id: str
    kind: str
    inputs: tuple[str, ...]
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class OpGraph:
    inputs: tuple[TensorSpec, ...]
    nodes: tuple[OperatorNode, ...]
    outputs: tuple[str, ...]

    def node_map(self) -> dict[str, OperatorNode]:
        return {n.id: n for n in self.nodes}


@dataclass(frozen=True)
class OperatorTask:
    """A graph plus the bookkeeping the pipeline and scoreboard need."""

    task_id: str
    graph: OpGraph
    provenance: str = "seed"
    level_tag: Optional[str] = None
    base_seed: int = 0


@dataclass
class ValidationResult:
    ok: bool
    violations: list[str]


class GraphValidationError(ValueError):
    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


def node_arity(node: OperatorNode) -> int:
    if node.kind == "ew":
        return 2 if node.params.get("op") in EW_BINARY_OPS else 1
    if node.kind in ("matmul", "diag_matmul"):
        return 2
    return 1


def _ew_binary_shape(a: Shape, b: Shape) -> Optional[Shape]:
    """Equal shapes, or 1-D vector broadcast along the other's leading axis."""
    if a == b:
        return a
    if len(a) == 1 and len(b) >= 2 and b[0] == a[0]:
        return b
    if len(b) == 1 and len(a) >= 2 and a[0] == b[0]:
        return a
    return None


def infer_node_shape(node: OperatorNode, in_shapes: list[Shape]) -> Shape:
    """Output shape of one node, or ValueError naming the problem."""
    kind = node.kind
    if kind == "ew":
        op = node.params.get("op")
        if op not in EW_OPS:
            raise ValueError(f"node {node.id}: unknown ew op {op!r}")
        if op in EW_BINARY_OPS:
            if len(in_shapes) != 2:
                raise ValueError(f"node {node.id}: ew {op} wants 2 inputs")
            out = _ew_binary_shape(in_shapes[0], in_shapes[1])
            if out is None:
                raise ValueError(
                    f"node {node.id}: ew {op} shapes {in_shapes[0]} and "
                    f"{in_shapes[1]} neither match nor row-broadcast"
                )
            return out
        if len(in_shapes) != 1:
            raise ValueError(f"node {node.id}: ew {op} wants 1 input")
        if op == "div_const":
            const = node.params.get("const")
            if not isinstance(const, (int, float)) or const == 0:
                raise ValueError(f"node {node.id}: div_const needs nonzero const")
        return in_shapes[0]

    if kind == "matmul":
        if len(in_shapes) != 2:
            raise ValueError(f"node {node.id}: matmul wants 2 inputs")
        a, b = in_shapes
        if len(a) == 2 and len(b) == 2 and a[1] == b[0]:
            return (a[0], b[1])
        if len(a) == 2 and len(b) == 1 and a[1] == b[0]:
            return (a[0],)
        raise ValueError(f"node {node.id}: matmul shapes {a} x {b} incompatible")

    if kind == "diag_matmul":
        if len(in_shapes) != 2:
            raise ValueError(f"node {node.id}: diag_matmul wants 2 inputs")
        a, b = in_shapes
        if len(a) == 1 and len(b) == 2 and b[0] == a[0]:
            return b
        raise ValueError(
            f"node {node.id}: diag_matmul wants (n,) and (n,m), got {a} x {b}"
        )

    if kind == "reduction":
        op = node.params.get("op")
        if op not in REDUCTION_OPS:
            raise ValueError(f"node {node.id}: unknown reduction op {op!r}")
        if len(in_shapes) != 1:
            raise ValueError(f"node {node.id}: reduction wants 1 input")
        shape = in_shapes[0]
        axis = node.params.get("axis")
        if axis is None:
            return ()
        if not isinstance(axis, int) or not (0 <= axis < len(shape)):
            raise ValueError(
                f"node {node.id}: reduction axis {axis!r} invalid for {shape}"
            )
        return shape[:axis] + shape[axis + 1 :]

    if kind == "scale":
        if len(in_shapes) != 1:
            raise ValueError(f"node {node.id}: scale wants 1 input")
        factor = node.params.get("factor")
        if not isinstance(factor, (int, float)):
            raise ValueError(f"node {node.id}: scale needs numeric factor")
        return in_shapes[0]

    if kind == "conv":
        if len(in_shapes) != 1:
            raise ValueError(f"node {node.id}: conv wants 1 input")
        shape = in_shapes[0]
        weight = node.params.get("weight")
        if (
            not isinstance(weight, list)
            or not weight
            or not all(isinstance(r, list) and r and len(r) == len(weight[0]) for r in weight)
        ):
            raise ValueError(f"node {node.id}: conv weight must be a 2-D nested list")
        kh, kw = len(weight), len(weight[0])
        if len(shape) != 2 or shape[0] < kh or shape[1] < kw:
            raise ValueError(
                f"node {node.id}: conv window ({kh},{kw}) too big for input {shape}"
            )
        return (shape[0] - kh + 1, shape[1] - kw + 1)

    raise ValueError(f"node {node.id}: unknown kind {kind!r}")


def infer_shapes(graph: OpGraph) -> dict[str, Shape]:
    """Shapes for every reference (inputs and nodes), in topological order.

    Raises GraphValidationError collecting every violation it can find
    rather than stopping at the first.
    """
    violations: list[str] = []
    shapes: dict[str, Shape] = {}
    for i, spec in enumerate(graph.inputs):
        if any(d <= 0 for d in spec.shape):
            violations.append(f"input in{i}: nonpositive dimension in {spec.shape}")
        if math.prod(spec.shape) > MAX_ELEMENTS:
            violations.append(f"input in{i}: {spec.shape} exceeds element cap")
        shapes[f"in{i}"] = spec.shape

    seen: set[str] = set()
    for node in graph.nodes:
        if not _ID_OK.match(node.id) or is_input_ref(node.id):
            violations.append(f"node id {node.id!r} is not a legal identifier")
        if node.id in seen or node.id in shapes:
            violations.append(f"duplicate node id {node.id!r}")
        seen.add(node.id)

    # Nodes must already be listed in topological order: an input reference
    # may only name a graph input or an earlier node.
    for node in graph.nodes:
        in_shapes: list[Shape] = []
        ok = True
        for ref in node.inputs:
            if ref not in shapes:
                violations.append(f"node {node.id}: reference {ref!r} undefined")
                ok = False
            else:
                in_shapes.append(shapes[ref])
        if not ok:
            continue
        try:
            out = infer_node_shape(node, in_shapes)
        except ValueError as e:
            violations.append(str(e))
            continue
        if math.prod(out) > MAX_ELEMENTS:
            violations.append(f"node {node.id}: output {out} exceeds element cap")
        shapes[node.id] = out

    if not graph.outputs:
        violations.append("graph has no outputs")
    for ref in graph.outputs:
        if ref not in shapes:
            violations.append(f"output reference {ref!r} undefined")

    if violations:
        raise GraphValidationError(violations)
    return shapes


def validate_graph(graph: OpGraph) -> ValidationResult:
    try:
        infer_shapes(graph)
    except GraphValidationError as e:
        return ValidationResult(ok=False, violations=e.violations)
    return ValidationResult(ok=True, violations=[])


def output_shapes(graph: OpGraph) -> list[Shape]:
    shapes = infer_shapes(graph)
    return [shapes[ref] for ref in graph.outputs]


def consumers(graph: OpGraph) -> dict[str, list[str]]:
    """Map reference -> ids of nodes consuming it (outputs not included)."""
    out: dict[str, list[str]] = {}
    for node in graph.nodes:
        for ref in node.inputs:
            out.setdefault(ref, []).append(node.id)
    return out
