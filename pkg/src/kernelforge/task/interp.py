"""Reference interpreter: the correctness oracle for every executor.

All arithmetic runs in float64 regardless of the declared tensor dtype, so
candidate implementations are judged against a higher-precision ground truth.
Evaluation is pure: same graph + same inputs -> identical bits.
"""

from __future__ import annotations

import numpy as np

from ..seeding import input_rng
from .graph import OperatorTask, OpGraph, TensorSpec, infer_shapes


class NonFiniteError(ValueError):
    """Raised when a node produces NaN or inf; names the offending node."""

    def __init__(self, node_id: str):
        super().__init__(f"node {node_id} produced a non-finite value")
        self.node_id = node_id


def generate_graph_inputs(
    specs: tuple[TensorSpec, ...] | list[TensorSpec], seed: int
) -> list[np.ndarray]:
    """Standard-normal inputs, one independent stream per input index.

    Stream k depends only on (seed, k): reordering or removing other inputs
    never perturbs it. Non-seedable inputs are all-zeros.
    """
    values = []
    for k, spec in enumerate(specs):
        if spec.seedable:
            values.append(input_rng(seed, k).standard_normal(spec.shape))
        else:
            values.append(np.zeros(spec.shape, dtype=np.float64))
    return values


def generate_inputs(task: OperatorTask, seed: int) -> list[np.ndarray]:
    return generate_graph_inputs(task.graph.inputs, seed)


def _eval_node(kind: str, params: dict, args: list[np.ndarray]) -> np.ndarray:
    if kind == "ew":
        op = params["op"]
        if op == "add":
            a, b = _row_broadcast(args[0], args[1])
            return a + b
        if op == "mul":
            a, b = _row_broadcast(args[0], args[1])
            return a * b
        if op == "relu":
            return np.maximum(args[0], 0.0)
        if op == "sigmoid":
            return 1.0 / (1.0 + np.exp(-args[0]))
        if op == "div_const":
            return args[0] / float(params["const"])
        raise ValueError(f"unknown ew op {op!r}")
    if kind == "matmul":
        return args[0] @ args[1]
    if kind == "diag_matmul":
        # Row scaling, not an actual diag(A) @ B materialization: the
        # reference defines the math, the cost model charges the waste.
        return args[0][:, None] * args[1]
    if kind == "reduction":
        fn = np.sum if params["op"] == "sum" else np.mean
        axis = params.get("axis")
        out = fn(args[0], axis=axis)
        return np.asarray(out, dtype=np.float64)
    if kind == "scale":
        return args[0] * float(params["factor"])
    if kind == "conv":
        return _conv2d_valid(args[0], np.asarray(params["weight"], dtype=np.float64))
    raise ValueError(f"unknown node kind {kind!r}")


def _row_broadcast(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Lift a 1-D operand onto the other's leading axis (catalog rule)."""
    if a.shape == b.shape:
        return a, b
    if a.ndim == 1 and b.ndim >= 2:
        return a.reshape((a.shape[0],) + (1,) * (b.ndim - 1)), b
    if b.ndim == 1 and a.ndim >= 2:
        return a, b.reshape((b.shape[0],) + (1,) * (a.ndim - 1))
    raise ValueError(f"shapes {a.shape} and {b.shape} do not broadcast")


def _conv2d_valid(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    kh, kw = w.shape
    oh, ow = x.shape[0] - kh + 1, x.shape[1] - kw + 1
    # Desk-scale windows; sliding_window_view keeps this O(oh*ow*kh*kw)
    # without hand-written loops.
    windows = np.lib.stride_tricks.sliding_window_view(x, (kh, kw))
    return np.einsum("ijkl,kl->ij", windows[:oh, :ow], w)


def evaluate_graph(graph: OpGraph, inputs: list[np.ndarray]) -> list[np.ndarray]:
    """Evaluate in float64; raises NonFiniteError on the first bad node."""
    infer_shapes(graph)  # fail fast on malformed graphs
    env: dict[str, np.ndarray] = {
        f"in{k}": np.asarray(v, dtype=np.float64) for k, v in enumerate(inputs)
    }
    # Overflow is reported through NonFiniteError, not numpy warnings.
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for node in graph.nodes:
            args = [env[ref] for ref in node.inputs]
            out = _eval_node(node.kind, node.params, args)
            if not np.all(np.isfinite(out)):
                raise NonFiniteError(node.id)
            env[node.id] = out
    return [env[ref] for ref in graph.outputs]


def evaluate_reference(task: OperatorTask, inputs: list[np.ndarray]) -> list[np.ndarray]:
    return evaluate_graph(task.graph, inputs)


def allclose(a: np.ndarray, b: np.ndarray, atol: float, rtol: float) -> bool:
    """Elementwise |a-b| <= atol + rtol*|b|, all elements; shapes must match."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return bool(np.all(np.abs(a - b) <= atol + rtol * np.abs(b)))


def outputs_allclose(
    got: list[np.ndarray], want: list[np.ndarray], atol: float, rtol: float
) -> bool:
    if len(got) != len(want):
        raise ValueError(f"output count mismatch: {len(got)} vs {len(want)}")
    return all(allclose(g, w, atol, rtol) for g, w in zip(got, want))
