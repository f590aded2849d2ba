"""Whitelisted algebraic rewrites and the kernel-candidate container.

A candidate is what an agent submits: a list of rewrite applications plus a
partition of the rewritten graph into fused kernels. Rewrites are applied in
order; each must match the graph as it stands at application time. Anything
outside the whitelist is rejected, which keeps the search space honest.

Rules:
  diag_matmul_to_row_scale   diag-style matmul becomes an elementwise row
                             scaling (bit-identical math, far cheaper cost).
  matmul_sum_to_sum_dot      matmul whose (optionally rescaled) result is
                             only ever summed over its last axis becomes a
                             reduction of the right operand followed by a
                             matrix-vector product.
  fold_scale_chain           adjacent Scale nodes collapse into one.
  fuse_add_relu              add feeding only a relu is scheduled into one
                             kernel; the graph is unchanged, the pair must
                             end up co-grouped in the partition.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..task.graph import OperatorNode, OpGraph, consumers
from .costmodel import Partition, PartitionError, singleton_partition, validate_partition


class CandidateError(ValueError):
    pass


@dataclass(frozen=True)
class RewriteApplication:
    rule: str
    nodes: tuple[str, ...]


@dataclass(frozen=True)
class KernelCandidate:
    """rewrites applied in order; partition of the resulting graph.

    partition=None means "no fusion beyond what rewrite rules demand":
    singleton groups, then any fuse-rule pairs merged.
    """

    rewrites: tuple[RewriteApplication, ...] = ()
    partition: Optional[Partition] = None
    source_digest: str = ""

    def to_dict(self) -> dict:
        return {
            "rewrites": [{"rule": r.rule, "nodes": list(r.nodes)} for r in self.rewrites],
            "partition": None
            if self.partition is None
            else [list(g) for g in self.partition],
            "source_digest": self.source_digest,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KernelCandidate":
        if not isinstance(d, dict):
            raise CandidateError("candidate must be an object")
        rewrites = []
        for item in d.get("rewrites", []):
            if not isinstance(item, dict) or "rule" not in item or "nodes" not in item:
                raise CandidateError(f"malformed rewrite entry: {item!r}")
            rewrites.append(
                RewriteApplication(rule=str(item["rule"]), nodes=tuple(item["nodes"]))
            )
        part = d.get("partition")
        partition = None if part is None else tuple(tuple(g) for g in part)
        return cls(
            rewrites=tuple(rewrites),
            partition=partition,
            source_digest=str(d.get("source_digest", "")),
        )


@dataclass
class AppliedCandidate:
    graph: OpGraph
    partition: Partition
    fused_pairs: list[tuple[str, ...]] = field(default_factory=list)


def _single_consumer(graph: OpGraph, nid: str) -> Optional[str]:
    cons = consumers(graph).get(nid, [])
    if len(cons) == 1 and nid not in graph.outputs:
        return cons[0]
    return None


def _fresh_id(taken: set[str], base: str) -> str:
    nid = base
    while nid in taken:
        nid += "x"
    return nid


class _Rule:
    name: str = ""
    fuses: bool = False

    def find(self, graph: OpGraph) -> list[tuple[str, ...]]:
        raise NotImplementedError

    def apply(self, graph: OpGraph, nodes: tuple[str, ...]) -> OpGraph:
        raise NotImplementedError

    def _check_bound(self, graph: OpGraph, nodes: tuple[str, ...]) -> None:
        if nodes not in self.find(graph):
            raise CandidateError(
                f"rule {self.name} does not match nodes {list(nodes)}"
            )


class DiagMatmulToRowScale(_Rule):
    name = "diag_matmul_to_row_scale"

    def find(self, graph: OpGraph) -> list[tuple[str, ...]]:
        return [(n.id,) for n in graph.nodes if n.kind == "diag_matmul"]

    def apply(self, graph: OpGraph, nodes: tuple[str, ...]) -> OpGraph:
        self._check_bound(graph, nodes)
        (target,) = nodes
        new_nodes = tuple(
            OperatorNode(id=n.id, kind="ew", inputs=n.inputs, params={"op": "mul"})
            if n.id == target
            else n
            for n in graph.nodes
        )
        return OpGraph(inputs=graph.inputs, nodes=new_nodes, outputs=graph.outputs)


class MatmulSumToSumDot(_Rule):
    name = "matmul_sum_to_sum_dot"
    _MID_KINDS = ("scale", "div_const")

    def _is_mid(self, node: OperatorNode) -> bool:
        if node.kind == "scale":
            return True
        return node.kind == "ew" and node.params.get("op") == "div_const"

    def find(self, graph: OpGraph) -> list[tuple[str, ...]]:
        node_map = graph.node_map()
        out = []
        for m in graph.nodes:
            if m.kind != "matmul":
                continue
            chain = [m.id]
            cur = m.id
            while True:
                nxt = _single_consumer(graph, cur)
                if nxt is None:
                    break
                node = node_map[nxt]
                if self._is_mid(node):
                    chain.append(nxt)
                    cur = nxt
                    continue
                if node.kind == "reduction" and node.params.get("axis") == 1:
                    out.append(tuple(chain) + (nxt,))
                break
        return out

    def apply(self, graph: OpGraph, nodes: tuple[str, ...]) -> OpGraph:
        self._check_bound(graph, nodes)
        node_map = graph.node_map()
        m = node_map[nodes[0]]
        red = node_map[nodes[-1]]
        mids = [node_map[i] for i in nodes[1:-1]]
        taken = set(node_map)
        w_id = _fresh_id(taken, f"{red.id}_w")
        taken.add(w_id)

        # w = reduce(B, axis=1); y0 = A @ w; then the linear mid chain,
        # with the final node inheriting the reduction's id so downstream
        # references stay valid.
        sub: list[OperatorNode] = [
            OperatorNode(
                id=w_id,
                kind="reduction",
                inputs=(m.inputs[1],),
                params={"op": red.params["op"], "axis": 1},
            )
        ]
        chain_ids = []
        for i in range(len(mids) + 1):
            last = i == len(mids)
            chain_ids.append(red.id if last else _fresh_id(taken, f"{red.id}_t{i}"))
            taken.add(chain_ids[-1])
        sub.append(
            OperatorNode(id=chain_ids[0], kind="matmul", inputs=(m.inputs[0], w_id), params={})
        )
        for i, mid in enumerate(mids):
            sub.append(
                OperatorNode(
                    id=chain_ids[i + 1], kind=mid.kind, inputs=(chain_ids[i],), params=mid.params
                )
            )

        removed = set(nodes)
        new_nodes: list[OperatorNode] = []
        for n in graph.nodes:
            if n.id == m.id:
                new_nodes.extend(sub)
            elif n.id not in removed:
                new_nodes.append(n)
        return OpGraph(inputs=graph.inputs, nodes=tuple(new_nodes), outputs=graph.outputs)


class FoldScaleChain(_Rule):
    name = "fold_scale_chain"

    def find(self, graph: OpGraph) -> list[tuple[str, ...]]:
        node_map = graph.node_map()
        out = []
        for first in graph.nodes:
            if first.kind != "scale":
                continue
            nxt = _single_consumer(graph, first.id)
            if nxt is not None and node_map[nxt].kind == "scale":
                out.append((first.id, nxt))
        return out

    def apply(self, graph: OpGraph, nodes: tuple[str, ...]) -> OpGraph:
        self._check_bound(graph, nodes)
        node_map = graph.node_map()
        first, second = (node_map[i] for i in nodes)
        folded = OperatorNode(
            id=second.id,
            kind="scale",
            inputs=first.inputs,
            params={"factor": float(first.params["factor"]) * float(second.params["factor"])},
        )
        new_nodes = tuple(
            folded if n.id == second.id else n for n in graph.nodes if n.id != first.id
        )
        return OpGraph(inputs=graph.inputs, nodes=new_nodes, outputs=graph.outputs)


class FuseAddRelu(_Rule):
    name = "fuse_add_relu"
    fuses = True

    def find(self, graph: OpGraph) -> list[tuple[str, ...]]:
        node_map = graph.node_map()
        out = []
        for add in graph.nodes:
            if add.kind != "ew" or add.params.get("op") != "add":
                continue
            nxt = _single_consumer(graph, add.id)
            if nxt is None:
                continue
            relu = node_map[nxt]
            if relu.kind == "ew" and relu.params.get("op") == "relu":
                out.append((add.id, relu.id))
        return out

    def apply(self, graph: OpGraph, nodes: tuple[str, ...]) -> OpGraph:
        # Scheduling-only rule: semantics untouched, the pair just has to be
        # co-grouped, which apply_candidate enforces.
        self._check_bound(graph, nodes)
        return graph


RULES: dict[str, _Rule] = {
    r.name: r
    for r in (DiagMatmulToRowScale(), MatmulSumToSumDot(), FoldScaleChain(), FuseAddRelu())
}


def apply_candidate(graph: OpGraph, candidate: KernelCandidate) -> AppliedCandidate:
    """Rewrites in order, then partition validation. CandidateError on any lie."""
    g = graph
    fused_pairs: list[tuple[str, ...]] = []
    for app in candidate.rewrites:
        rule = RULES.get(app.rule)
        if rule is None:
            raise CandidateError(f"unknown rewrite rule {app.rule!r}")
        g = rule.apply(g, app.nodes)
        if rule.fuses:
            fused_pairs.append(app.nodes)

    if candidate.partition is None:
        groups = {nid: [nid] for (nid,) in singleton_partition(g)}
        owner = {nid: nid for nid in groups}
        for pair in fused_pairs:
            roots = sorted({owner[n] for n in pair})
            head = roots[0]
            for other in roots[1:]:
                groups[head].extend(groups.pop(other))
                for nid, root in owner.items():
                    if root == other:
                        owner[nid] = head
        order = {n.id: i for i, n in enumerate(g.nodes)}
        partition = tuple(
            tuple(sorted(members, key=order.__getitem__))
            for members in groups.values()
        )
    else:
        partition = candidate.partition
        group_of = {nid: i for i, grp in enumerate(partition) for nid in grp}
        for pair in fused_pairs:
            ids = {group_of.get(n) for n in pair}
            if len(ids) != 1 or None in ids:
                raise CandidateError(
                    f"fuse rule nodes {list(pair)} are not scheduled together"
                )

    try:
        validate_partition(g, partition)
    except PartitionError as e:
        raise CandidateError(str(e)) from e
    return AppliedCandidate(graph=g, partition=partition, fused_pairs=fused_pairs)
