"""Three-term analytic cost model for the simulated device.

Each kernel launch costs a fixed overhead, plus memory traffic at a fixed
bandwidth, plus arithmetic at a fixed throughput:

    cost(group) = launch_overhead + bytes_moved / bytes_per_second
                  + flops / flops_per_second

A partition of the graph into groups models a compiled schedule: values
internal to a group never touch memory, values crossing a group boundary are
read/written once each. Merging two groups therefore never increases cost
(one launch saved, boundary traffic can only shrink, flops unchanged), which
is what makes "compiled" a sound lower bound on "eager" here.

diag_matmul is deliberately charged as materialize-diag-then-GEMM
(2*n*n*m flops plus 2*n*n extra traffic): the reference math is a cheap row
scaling, and noticing that gap is the whole optimization opportunity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..seeding import rng_for
from ..task.graph import OpGraph, Shape, consumers, infer_shapes, is_input_ref

BYTES_PER_ELEMENT = 4  # device tensors are f32
FUSIBLE_KINDS = frozenset({"ew", "scale"})

# Config key names are a file-format contract; keep them boring and exact.
PARAM_KEYS = (
    "launch_overhead_us",
    "bytes_per_second",
    "flops_per_second",
    "noise_relative_sigma",
    "rng_seed",
)


@dataclass(frozen=True)
class CostModelParams:
    launch_overhead_us: float = 10.0
    bytes_per_second: float = 2.0e9
    flops_per_second: float = 1.0e11
    noise_relative_sigma: float = 0.01
    rng_seed: int = 0

    def __post_init__(self):
        if self.launch_overhead_us < 0:
            raise ValueError("launch_overhead_us must be >= 0")
        if self.bytes_per_second <= 0 or self.flops_per_second <= 0:
            raise ValueError("throughput parameters must be positive")
        if not (0.0 <= self.noise_relative_sigma < 0.1):
            raise ValueError("noise_relative_sigma must be in [0, 0.1)")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in PARAM_KEYS}

    @classmethod
    def from_dict(cls, d: dict) -> "CostModelParams":
        unknown = set(d) - set(PARAM_KEYS)
        if unknown:
            raise ValueError(f"unknown cost model keys: {sorted(unknown)}")
        merged = {**cls().to_dict(), **d}
        merged["rng_seed"] = int(merged["rng_seed"])
        for k in PARAM_KEYS[:-1]:
            merged[k] = float(merged[k])
        return cls(**merged)


@dataclass(frozen=True)
class NodeWork:
    """Arithmetic and implementation-private traffic of a single node."""

    flops: int
    extra_traffic_elems: int = 0  # survives fusion (e.g. diag materialization)
    param_read_elems: int = 0  # constants read from memory (conv weights)


def node_work(kind: str, params: dict, in_shapes: list[Shape], out_shape: Shape) -> NodeWork:
    n_out = math.prod(out_shape)
    if kind == "ew":
        op = params["op"]
        flops = {"add": 1, "mul": 1, "relu": 1, "div_const": 1, "sigmoid": 4}[op]
        return NodeWork(flops=flops * n_out)
    if kind == "matmul":
        a, b = in_shapes
        if len(b) == 2:
            return NodeWork(flops=2 * a[0] * a[1] * b[1])
        return NodeWork(flops=2 * a[0] * a[1])
    if kind == "diag_matmul":
        n = in_shapes[0][0]
        m = in_shapes[1][1]
        # diag(A) is written out then read back by the GEMM
        return NodeWork(flops=2 * n * n * m, extra_traffic_elems=2 * n * n)
    if kind == "reduction":
        n_in = math.prod(in_shapes[0])
        extra = n_out if params["op"] == "mean" else 0
        return NodeWork(flops=n_in + extra)
    if kind == "scale":
        return NodeWork(flops=n_out)
    if kind == "conv":
        kh = len(params["weight"])
        kw = len(params["weight"][0])
        return NodeWork(flops=2 * n_out * kh * kw, param_read_elems=kh * kw)
    raise ValueError(f"no cost rule for kind {kind!r}")


Partition = tuple[tuple[str, ...], ...]


class PartitionError(ValueError):
    pass


def singleton_partition(graph: OpGraph) -> Partition:
    return tuple((n.id,) for n in graph.nodes)


def _edges(graph: OpGraph) -> list[tuple[str, str]]:
    return [
        (ref, n.id)
        for n in graph.nodes
        for ref in n.inputs
        if not is_input_ref(ref)
    ]


def _reachable(adj: dict[str, set[str]], start: set[str]) -> set[str]:
    seen = set(start)
    stack = list(start)
    while stack:
        u = stack.pop()
        for v in adj.get(u, ()):
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return seen


def validate_partition(graph: OpGraph, groups: Partition) -> None:
    """Exact cover by connected, convex groups, or PartitionError."""
    all_ids = {n.id for n in graph.nodes}
    seen: set[str] = set()
    for group in groups:
        if not group:
            raise PartitionError("empty group")
        for nid in group:
            if nid not in all_ids:
                raise PartitionError(f"unknown node id {nid!r} in partition")
            if nid in seen:
                raise PartitionError(f"node {nid!r} appears in two groups")
            seen.add(nid)
    if seen != all_ids:
        missing = sorted(all_ids - seen)
        raise PartitionError(f"partition does not cover nodes: {missing}")

    edges = _edges(graph)
    fwd: dict[str, set[str]] = {}
    und: dict[str, set[str]] = {}
    for u, v in edges:
        fwd.setdefault(u, set()).add(v)
        und.setdefault(u, set()).add(v)
        und.setdefault(v, set()).add(u)

    for group in groups:
        g = set(group)
        if len(g) == 1:
            continue
        # weak connectivity inside the group
        inside = {k: und.get(k, set()) & g for k in g}
        if _reachable(inside, {group[0]}) != g:
            raise PartitionError(f"group {sorted(g)} is not connected")
        # convexity: no path from the group back into it through outsiders
        outside_reach = _reachable(fwd, g) - g
        reenter = _reachable(fwd, outside_reach) & g
        if reenter:
            raise PartitionError(
                f"group {sorted(g)} is not convex (re-entered via {sorted(reenter)})"
            )


def group_cost_terms(
    graph: OpGraph, group: tuple[str, ...], shapes: dict[str, Shape]
) -> tuple[int, int]:
    """(flops, traffic_elems) for one fused group."""
    node_map = graph.node_map()
    g = set(group)
    cons = consumers(graph)
    flops = 0
    traffic = 0
    external_reads: set[str] = set()
    for nid in group:
        node = node_map[nid]
        in_shapes = [shapes[r] for r in node.inputs]
        work = node_work(node.kind, node.params, in_shapes, shapes[nid])
        flops += work.flops
        traffic += work.extra_traffic_elems + work.param_read_elems
        for ref in node.inputs:
            if is_input_ref(ref) or ref not in g:
                external_reads.add(ref)
    for ref in external_reads:
        traffic += math.prod(shapes[ref])
    for nid in group:
        escapes = nid in graph.outputs or any(c not in g for c in cons.get(nid, ()))
        if escapes:
            traffic += math.prod(shapes[nid])
    return flops, traffic


def cost_of_partition(graph: OpGraph, groups: Partition, params: CostModelParams) -> float:
    """Noiseless modeled runtime in milliseconds."""
    validate_partition(graph, groups)
    shapes = infer_shapes(graph)
    seconds = 0.0
    for group in groups:
        flops, traffic_elems = group_cost_terms(graph, group, shapes)
        seconds += (
            params.launch_overhead_us * 1e-6
            + traffic_elems * BYTES_PER_ELEMENT / params.bytes_per_second
            + flops / params.flops_per_second
        )
    return seconds * 1e3


def cost_eager(graph: OpGraph, params: CostModelParams) -> float:
    return cost_of_partition(graph, singleton_partition(graph), params)


def greedy_fuse(
    graph: OpGraph, fusible: frozenset[str] = FUSIBLE_KINDS
) -> Partition:
    """Deterministic maximal fusion of adjacent fusible nodes.

    Walks producer->consumer edges in topological order and merges whenever
    both endpoints are fusible and the merged group stays convex. With
    fusible=all kinds this yields the most aggressive legal schedule.
    """
    node_map = graph.node_map()
    parent: dict[str, str] = {n.id: n.id for n in graph.nodes}

    def find(x: str) -> str:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def current_groups() -> dict[str, list[str]]:
        groups: dict[str, list[str]] = {}
        for n in graph.nodes:  # keeps topological order inside groups
            groups.setdefault(find(n.id), []).append(n.id)
        return groups

    for node in graph.nodes:
        if node.kind not in fusible:
            continue
        for ref in node.inputs:
            if is_input_ref(ref):
                continue
            prod = node_map[ref]
            if prod.kind not in fusible or find(prod.id) == find(node.id):
                continue
            merged_root = {find(prod.id), find(node.id)}
            trial = tuple(
                tuple(members)
                for root, members in current_groups().items()
                if root not in merged_root
            ) + (
                tuple(
                    n.id
                    for n in graph.nodes
                    if find(n.id) in merged_root
                ),
            )
            try:
                validate_partition(graph, trial)
            except PartitionError:
                continue
            parent[find(prod.id)] = find(node.id)

    ordered = current_groups()
    return tuple(tuple(members) for members in ordered.values())


def compiled_partition(graph: OpGraph) -> Partition:
    return greedy_fuse(graph, FUSIBLE_KINDS)


def cost_compiled(graph: OpGraph, params: CostModelParams) -> float:
    return cost_of_partition(graph, compiled_partition(graph), params)


def noisy_samples(
    cost_ms: float, params: CostModelParams, repeats: int, *stream: int | str
) -> np.ndarray:
    """Multiplicative Gaussian noise around the modeled cost.

    The stream is keyed by (rng_seed, *stream); warmup runs are modeled as
    free and draw nothing, so measured means do not depend on warmup count.
    """
    if params.noise_relative_sigma == 0.0:
        return np.full(repeats, cost_ms)
    rng = rng_for(params.rng_seed, *stream)
    eps = rng.normal(0.0, params.noise_relative_sigma, size=repeats)
    return np.maximum(cost_ms * (1.0 + eps), 1e-9)
