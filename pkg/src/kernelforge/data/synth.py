"""Combinatorial chain synthesis over the seed catalog.

A composite task is a chain of k sampled composable templates, each stage
consuming the previous stage's output through its chain port (the template's
in0). Stages are re-instantiated at the incoming shape where the operator is
shape-polymorphic; when the port needs a lower rank (a 2-D value flowing
into a diag-style matmul's vector port, say), a mean-preserving
Reduction(sum)/Scale(1/extent) adapter pair is inserted per dropped axis.
A chain attempt that still cannot reconcile shapes is resampled, at most
three retries, then synthesis fails.

Everything is deterministic in (catalog, seed, k): sampling uses a stream
keyed by those alone. Level tags are a harness convention by chain length
(x1-x2 -> L1, x3-x4 -> L2, x5 and opaque attention-style entries -> L3).
"""

from __future__ import annotations

import dataclasses
import math

from ..seeding import derive_seed, rng_for
from ..task.graph import (
    GraphValidationError,
    OperatorNode,
    OperatorTask,
    OpGraph,
    Shape,
    TensorSpec,
    infer_node_shape,
    infer_shapes,
)
from .catalog import CatalogEntry, SeedCatalog

MAX_K = 5
RETRY_LIMIT = 3

# Corpus mix by category; weights mirror the composition reported for the
# reference corpus so desk-scale runs produce familiar-looking tables.
DEFAULT_MIX = {
    "x1": 3.40,
    "x2": 83.77,
    "x3": 7.62,
    "x4": 2.80,
    "x5": 1.23,
    "transformer-like": 1.18,
}


class SynthesisError(ValueError):
    pass


class _StageIncompatible(Exception):
    pass


def level_for_k(k: int) -> str:
    return "L1" if k <= 2 else ("L2" if k <= 4 else "L3")


def _instantiate_first_stage(entry: CatalogEntry, builder: "_ChainBuilder") -> str:
    node = entry.graph.nodes[0]
    mapped = []
    for ref in node.inputs:
        spec = entry.graph.inputs[int(ref[2:])]
        mapped.append(builder.new_input(spec.shape))
    return builder.add_node(f"s0_{node.id}", node.kind, tuple(mapped), dict(node.params))


class _ChainBuilder:
    def __init__(self):
        self.inputs: list[TensorSpec] = []
        self.nodes: list[OperatorNode] = []
        self.shapes: dict[str, Shape] = {}

    def new_input(self, shape: Shape) -> str:
        ref = f"in{len(self.inputs)}"
        self.inputs.append(TensorSpec(shape=tuple(shape)))
        self.shapes[ref] = tuple(shape)
        return ref

    def add_node(self, nid: str, kind: str, inputs: tuple[str, ...], params: dict) -> str:
        node = OperatorNode(id=nid, kind=kind, inputs=inputs, params=params)
        in_shapes = [self.shapes[r] for r in inputs]
        try:
            self.shapes[nid] = infer_node_shape(node, in_shapes)
        except ValueError as e:
            raise _StageIncompatible(str(e)) from e
        self.nodes.append(node)
        return nid

    def snapshot(self) -> tuple[int, int]:
        return len(self.inputs), len(self.nodes)

    def rollback(self, snap: tuple[int, int]) -> None:
        n_in, n_nodes = snap
        for spec_idx in range(n_in, len(self.inputs)):
            self.shapes.pop(f"in{spec_idx}", None)
        for node in self.nodes[n_nodes:]:
            self.shapes.pop(node.id, None)
        del self.inputs[n_in:]
        del self.nodes[n_nodes:]


def _lower_rank(builder: _ChainBuilder, ref: str, stage: int, target_rank: int) -> str:
    """Reduction/Scale adapter pairs until ref's rank matches target_rank."""
    j = 0
    while len(builder.shapes[ref]) > target_rank:
        shape = builder.shapes[ref]
        axis = len(shape) - 1
        extent = shape[axis]
        rid = builder.add_node(
            f"s{stage}_adapt{j}", "reduction", (ref,), {"op": "sum", "axis": axis}
        )
        ref = builder.add_node(
            f"s{stage}_adapt{j}s", "scale", (rid,), {"factor": 1.0 / extent}
        )
        j += 1
    return ref


def _attach_stage(
    builder: _ChainBuilder, entry: CatalogEntry, stage: int, chain_ref: str
) -> str:
    node = entry.graph.nodes[0]
    kind = node.kind
    params = dict(node.params)
    port = node.inputs.index("in0")
    shape = builder.shapes[chain_ref]
    rank = len(shape)
    nid = f"s{stage}_{node.id}"

    if kind in ("ew", "scale"):
        op = params.get("op")
        if kind == "ew" and op in ("add", "mul"):
            partner = builder.new_input(shape)
            args = (chain_ref, partner) if port == 0 else (partner, chain_ref)
            return builder.add_node(nid, kind, args, params)
        return builder.add_node(nid, kind, (chain_ref,), params)

    if kind == "reduction":
        if rank == 0:
            raise _StageIncompatible("reduction needs a non-scalar input")
        axis = params.get("axis")
        if axis is not None:
            params["axis"] = min(axis, rank - 1)
        return builder.add_node(nid, kind, (chain_ref,), params)

    if kind == "matmul":
        if port == 0:
            if rank != 2:
                raise _StageIncompatible("matmul lhs needs a 2-D chain value")
            pshape = entry.graph.inputs[int(node.inputs[1][2:])].shape
            partner = builder.new_input(
                (shape[1],) if len(pshape) == 1 else (shape[1], pshape[1])
            )
            return builder.add_node(nid, kind, (chain_ref, partner), params)
        if rank not in (1, 2):
            raise _StageIncompatible("matmul rhs needs a 1-D or 2-D chain value")
        lhs_shape = entry.graph.inputs[int(node.inputs[0][2:])].shape
        partner = builder.new_input((lhs_shape[0], shape[0]))
        return builder.add_node(nid, kind, (partner, chain_ref), params)

    if kind == "diag_matmul":
        if port == 0:
            chain_ref = _lower_rank(builder, chain_ref, stage, 1)
            if len(builder.shapes[chain_ref]) != 1:
                raise _StageIncompatible("diag vector port needs a 1-D value")
            n = builder.shapes[chain_ref][0]
            m = entry.graph.inputs[int(node.inputs[1][2:])].shape[1]
            partner = builder.new_input((n, m))
            return builder.add_node(nid, kind, (chain_ref, partner), params)
        if rank != 2:
            raise _StageIncompatible("diag matrix port needs a 2-D value")
        partner = builder.new_input((shape[0],))
        return builder.add_node(nid, kind, (partner, chain_ref), params)

    if kind == "conv":
        chain_ref = _lower_rank(builder, chain_ref, stage, 2)
        shape = builder.shapes[chain_ref]
        if len(shape) != 2:
            raise _StageIncompatible("conv needs a 2-D value")
        kh, kw = len(params["weight"]), len(params["weight"][0])
        if shape[0] < kh or shape[1] < kw:
            raise _StageIncompatible("conv window larger than chain value")
        return builder.add_node(nid, kind, (chain_ref,), params)

    raise _StageIncompatible(f"no attachment rule for kind {kind!r}")


def synthesize_composite(catalog: SeedCatalog, seed: int, k: int) -> OperatorTask:
    if not (1 <= k <= MAX_K):
        raise SynthesisError(f"k must be between 1 and {MAX_K}, got {k}")
    composable = catalog.composable_entries()
    if len(composable) < k:
        raise SynthesisError(
            f"catalog has {len(composable)} composable entries, need at least {k}"
        )
    rng = rng_for(seed, "synth", k)
    last_reason = ""
    for _attempt in range(1 + RETRY_LIMIT):
        # A shuffled queue gives distinct templates per chain; each stage may
        # skip up to RETRY_LIMIT incompatible candidates before the whole
        # attempt is abandoned.
        queue = [composable[i] for i in rng.permutation(len(composable))]
        builder = _ChainBuilder()
        entries: list[CatalogEntry] = [queue.pop(0)]
        ref = _instantiate_first_stage(entries[0], builder)
        failed = False
        for stage in range(1, k):
            attached = False
            for _skip in range(RETRY_LIMIT + 1):
                if not queue:
                    break
                entry = queue.pop(0)
                snap = builder.snapshot()
                try:
                    ref = _attach_stage(builder, entry, stage, ref)
                except _StageIncompatible as e:
                    last_reason = str(e)
                    builder.rollback(snap)
                    continue
                entries.append(entry)
                attached = True
                break
            if not attached:
                failed = True
                break
        if failed:
            continue
        graph = OpGraph(
            inputs=tuple(builder.inputs), nodes=tuple(builder.nodes), outputs=(ref,)
        )
        try:
            infer_shapes(graph)
        except GraphValidationError as e:
            last_reason = str(e)
            continue
        names = "+".join(e.name for e in entries)
        return OperatorTask(
            task_id=f"comp-x{k}-{seed & 0xFFFFFFFF:08x}",
            graph=graph,
            provenance=f"composite({k})",
            level_tag=level_for_k(k),
            base_seed=derive_seed(seed, "io", names),
        )
    raise SynthesisError(
        f"no shape-compatible chain found after {RETRY_LIMIT} retries"
        + (f" (last: {last_reason})" if last_reason else "")
    )


def sample_corpus(
    catalog: SeedCatalog,
    count: int,
    seed: int,
    mix: dict[str, float] | None = None,
) -> list[OperatorTask]:
    """Draw a corpus whose category proportions follow the mix weights."""
    if count <= 0:
        raise SynthesisError("count must be positive")
    mix = dict(DEFAULT_MIX if mix is None else mix)
    if any(w < 0 for w in mix.values()) or sum(mix.values()) <= 0:
        raise SynthesisError("mix weights must be nonnegative and not all zero")
    transformers = [e for e in catalog.entries if not e.composable]
    if not transformers:
        mix["x2"] = mix.get("x2", 0.0) + mix.pop("transformer-like", 0.0)

    categories = sorted(mix)
    weights = [mix[c] for c in categories]
    total = sum(weights)
    probs = [w / total for w in weights]
    rng = rng_for(seed, "corpus")
    draws = rng.choice(len(categories), size=count, p=probs)

    tasks: list[OperatorTask] = []
    for idx, ci in enumerate(draws):
        category = categories[int(ci)]
        if category == "transformer-like":
            entry = transformers[int(rng.integers(len(transformers)))]
            tasks.append(
                OperatorTask(
                    task_id=f"t{idx:05d}-tf-{entry.name}",
                    graph=entry.graph,
                    provenance="transformer-like",
                    level_tag="L3",
                    base_seed=derive_seed(seed, "io", idx),
                )
            )
            continue
        k = int(category[1:])
        task = synthesize_composite(catalog, derive_seed(seed, "chain", idx), k)
        tasks.append(dataclasses.replace(task, task_id=f"t{idx:05d}-x{k}"))
    return tasks


def parse_provenance_category(provenance: str) -> str:
    """Map a provenance string to a composition category.

    Plain seed tasks are single-operator, so they count toward x1.
    """
    if provenance == "seed":
        return "x1"
    if provenance == "transformer-like":
        return "transformer-like"
    if provenance.startswith("composite(") and provenance.endswith(")"):
        k = provenance[len("composite(") : -1]
        if k.isdigit() and 1 <= int(k) <= MAX_K:
            return f"x{k}"
    raise ValueError(f"unrecognized provenance {provenance!r}")


def chain_length(task: OperatorTask) -> int:
    category = parse_provenance_category(task.provenance)
    if category == "transformer-like":
        return len(task.graph.nodes)
    return int(category[1:])


def expected_elements(task: OperatorTask) -> int:
    return sum(math.prod(s.shape) for s in task.graph.inputs)
