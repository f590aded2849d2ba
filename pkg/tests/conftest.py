"""Shared fixture builders. Oracle values in tests are computed by hand or
by an independent method before the implementation is trusted with them."""

from __future__ import annotations

import pytest

from kernelforge.task import OperatorNode, OperatorTask, OpGraph, TensorSpec


def make_graph(inputs, nodes, outputs) -> OpGraph:
    return OpGraph(
        inputs=tuple(TensorSpec(shape=tuple(s)) if isinstance(s, (tuple, list)) else s for s in inputs),
        nodes=tuple(nodes),
        outputs=tuple(outputs),
    )


def node(id, kind, inputs, **params) -> OperatorNode:
    return OperatorNode(id=id, kind=kind, inputs=tuple(inputs), params=params)


def make_task(graph: OpGraph, task_id="t-fixture", base_seed=7, **kw) -> OperatorTask:
    return OperatorTask(task_id=task_id, graph=graph, base_seed=base_seed, **kw)


@pytest.fixture
def diag_graph() -> OpGraph:
    """diag_matmul on (n,) x (n,m): the canonical rewrite bait."""
    return make_graph(
        inputs=[(64,), (64, 48)],
        nodes=[node("d0", "diag_matmul", ["in0", "in1"])],
        outputs=["d0"],
    )


@pytest.fixture
def diag_task(diag_graph) -> OperatorTask:
    return make_task(diag_graph, task_id="diag-fixture")


@pytest.fixture
def add_relu_graph() -> OpGraph:
    return make_graph(
        inputs=[(256, 256), (256, 256)],
        nodes=[
            node("a0", "ew", ["in0", "in1"], op="add"),
            node("r0", "ew", ["a0"], op="relu"),
        ],
        outputs=["r0"],
    )


@pytest.fixture
def matmul_sum_graph() -> OpGraph:
    """matmul -> div_const -> sum over the last axis (contraction bait)."""
    return make_graph(
        inputs=[(32, 96), (96, 80)],
        nodes=[
            node("m0", "matmul", ["in0", "in1"]),
            node("h0", "ew", ["m0"], op="div_const", const=2.0),
            node("s0", "reduction", ["h0"], op="sum", axis=1),
        ],
        outputs=["s0"],
    )
