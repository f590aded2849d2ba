"""Candidate JSON and the rewrite whitelist, bridge-side.

A candidate names rewrites from a closed whitelist plus a partition of the
rewritten graph. Both endpoints of the wire must agree on what each rule
matches and produces, otherwise a candidate accepted by one executor would
be rejected by the other; the conformance suite pins that agreement.

Structure errors in the candidate JSON raise CandidateError before any
graph work; rule mismatches and partition lies also raise CandidateError
and are reported as failed verification, never as protocol errors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .taskspec import Graph, Node, consumers, is_input_ref

Partition = tuple[tuple[str, ...], ...]


class CandidateError(ValueError):
    pass


@dataclass(frozen=True)
class Candidate:
    rewrites: tuple[tuple[str, tuple[str, ...]], ...] = ()
    partition: Optional[Partition] = None
    source_digest: str = ""


def parse_candidate(d) -> Candidate:
    if not isinstance(d, dict):
        raise CandidateError("candidate must be an object")
    rewrites = []
    for item in d.get("rewrites", []):
        if not isinstance(item, dict) or "rule" not in item or "nodes" not in item:
            raise CandidateError(f"malformed rewrite entry: {item!r}")
        rewrites.append((str(item["rule"]), tuple(item["nodes"])))
    part = d.get("partition")
    partition = None if part is None else tuple(tuple(g) for g in part)
    return Candidate(
        rewrites=tuple(rewrites),
        partition=partition,
        source_digest=str(d.get("source_digest", "")),
    )


def _single_consumer(graph: Graph, nid: str) -> Optional[str]:
    cons = consumers(graph).get(nid, [])
    if len(cons) == 1 and nid not in graph.outputs:
        return cons[0]
    return None


def _fresh_id(taken: set, base: str) -> str:
    nid = base
    while nid in taken:
        nid += "x"
    return nid


def _is_mid(node: Node) -> bool:
    # linear single-tensor ops that commute with the sum-dot rewrite
    if node.kind == "scale":
        return True
    return node.kind == "ew" and node.params.get("op") == "div_const"


def _find_diag(graph: Graph) -> list[tuple[str, ...]]:
    return [(n.id,) for n in graph.nodes if n.kind == "diag_matmul"]


def _apply_diag(graph: Graph, nodes: tuple[str, ...]) -> Graph:
    (target,) = nodes
    new_nodes = tuple(
        Node(id=n.id, kind="ew", inputs=n.inputs, params={"op": "mul"})
        if n.id == target
        else n
        for n in graph.nodes
    )
    return Graph(inputs=graph.inputs, nodes=new_nodes, outputs=graph.outputs)


def _find_sum_dot(graph: Graph) -> list[tuple[str, ...]]:
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
            if _is_mid(node):
                chain.append(nxt)
                cur = nxt
                continue
            if node.kind == "reduction" and node.params.get("axis") == 1:
                out.append(tuple(chain) + (nxt,))
            break
    return out


def _apply_sum_dot(graph: Graph, nodes: tuple[str, ...]) -> Graph:
    node_map = graph.node_map()
    m = node_map[nodes[0]]
    red = node_map[nodes[-1]]
    mids = [node_map[i] for i in nodes[1:-1]]
    taken = set(node_map)
    w_id = _fresh_id(taken, f"{red.id}_w")
    taken.add(w_id)

    # reduce the right operand first, then a matrix-vector product, then the
    # mid chain; the last node keeps the reduction's id for downstream refs
    sub = [
        Node(
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
    sub.append(Node(id=chain_ids[0], kind="matmul", inputs=(m.inputs[0], w_id), params={}))
    for i, mid in enumerate(mids):
        sub.append(Node(id=chain_ids[i + 1], kind=mid.kind, inputs=(chain_ids[i],), params=mid.params))

    removed = set(nodes)
    new_nodes: list[Node] = []
    for n in graph.nodes:
        if n.id == m.id:
            new_nodes.extend(sub)
        elif n.id not in removed:
            new_nodes.append(n)
    return Graph(inputs=graph.inputs, nodes=tuple(new_nodes), outputs=graph.outputs)


def _find_fold_scale(graph: Graph) -> list[tuple[str, ...]]:
    node_map = graph.node_map()
    out = []
    for first in graph.nodes:
        if first.kind != "scale":
            continue
        nxt = _single_consumer(graph, first.id)
        if nxt is not None and node_map[nxt].kind == "scale":
            out.append((first.id, nxt))
    return out


def _apply_fold_scale(graph: Graph, nodes: tuple[str, ...]) -> Graph:
    node_map = graph.node_map()
    first, second = (node_map[i] for i in nodes)
    folded = Node(
        id=second.id,
        kind="scale",
        inputs=first.inputs,
        params={"factor": float(first.params["factor"]) * float(second.params["factor"])},
    )
    new_nodes = tuple(
        folded if n.id == second.id else n for n in graph.nodes if n.id != first.id
    )
    return Graph(inputs=graph.inputs, nodes=new_nodes, outputs=graph.outputs)


def _find_fuse_add_relu(graph: Graph) -> list[tuple[str, ...]]:
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


def _apply_identity(graph: Graph, nodes: tuple[str, ...]) -> Graph:
    return graph


# rule name -> (find, apply, is scheduling-only)
RULES = {
    "diag_matmul_to_row_scale": (_find_diag, _apply_diag, False),
    "matmul_sum_to_sum_dot": (_find_sum_dot, _apply_sum_dot, False),
    "fold_scale_chain": (_find_fold_scale, _apply_fold_scale, False),
    "fuse_add_relu": (_find_fuse_add_relu, _apply_identity, True),
}


def _reachable(adj: dict[str, set], start: set) -> set:
    seen = set(start)
    stack = list(start)
    while stack:
        u = stack.pop()
        for v in adj.get(u, ()):
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return seen


def validate_partition(graph: Graph, groups: Partition) -> None:
    """Exact cover by connected, convex groups, or CandidateError."""
    all_ids = {n.id for n in graph.nodes}
    seen: set = set()
    for group in groups:
        if not group:
            raise CandidateError("empty group")
        for nid in group:
            if nid not in all_ids:
                raise CandidateError(f"unknown node id {nid!r} in partition")
            if nid in seen:
                raise CandidateError(f"node {nid!r} appears in two groups")
            seen.add(nid)
    if seen != all_ids:
        raise CandidateError(f"partition does not cover nodes: {sorted(all_ids - seen)}")

    edges = [
        (ref, n.id) for n in graph.nodes for ref in n.inputs if not is_input_ref(ref)
    ]
    fwd: dict[str, set] = {}
    und: dict[str, set] = {}
    for u, v in edges:
        fwd.setdefault(u, set()).add(v)
        und.setdefault(u, set()).add(v)
        und.setdefault(v, set()).add(u)

    for group in groups:
        g = set(group)
        if len(g) == 1:
            continue
        inside = {k: und.get(k, set()) & g for k in g}
        if _reachable(inside, {group[0]}) != g:
            raise CandidateError(f"group {sorted(g)} is not connected")
        # a data path may not leave the group and come back in
        outside = _reachable(fwd, g) - g
        if _reachable(fwd, outside) & g:
            raise CandidateError(f"group {sorted(g)} is not convex")


def apply_candidate(graph: Graph, candidate: Candidate) -> tuple[Graph, Partition]:
    """Rewrites in order, then partition validation."""
    g = graph
    fused_pairs: list[tuple[str, ...]] = []
    for rule_name, nodes in candidate.rewrites:
        entry = RULES.get(rule_name)
        if entry is None:
            raise CandidateError(f"unknown rewrite rule {rule_name!r}")
        find, apply, fuses = entry
        if nodes not in find(g):
            raise CandidateError(f"rule {rule_name} does not match nodes {list(nodes)}")
        g = apply(g, nodes)
        if fuses:
            fused_pairs.append(nodes)

    if candidate.partition is None:
        groups = {n.id: [n.id] for n in g.nodes}
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
        partition: Partition = tuple(
            tuple(sorted(members, key=order.__getitem__)) for members in groups.values()
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

    validate_partition(g, partition)
    return g, partition
