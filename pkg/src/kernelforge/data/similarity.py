"""Structural similarity and train/eval decontamination.

Graphs are compared as labeled ordered trees rooted at their outputs, with
labels (kind, arity, params rounded to 6 decimals) and node ids ignored, so
isomorphic graphs score 1.0. The metric is

    sim(a, b) = max(0, 1 - TED(a, b) / max(|a|, |b|))

with unit-cost Zhang-Shasha tree edit distance. A value shared by several
consumers is expanded into each consumer's subtree; graphs here are chains
or nearly so, which keeps the expansion tame.

Decontamination removes a training task when its maximum similarity to any
eval task strictly exceeds the threshold (a tie at the threshold survives).
"""

from __future__ import annotations

from dataclasses import dataclass

from ..task.graph import OperatorTask, OpGraph, is_input_ref, node_arity

HISTOGRAM_BINS = 20


@dataclass(frozen=True)
class _Tree:
    label: tuple
    children: tuple["_Tree", ...] = ()

    def size(self) -> int:
        return 1 + sum(c.size() for c in self.children)


def _canon_value(v):
    if isinstance(v, bool):
        return v
    if isinstance(v, (int, float)):
        return round(float(v), 6)
    if isinstance(v, list):
        return tuple(_canon_value(x) for x in v)
    return v


def _label(kind: str, arity: int, params: dict) -> tuple:
    canon = tuple(sorted((k, _canon_value(v)) for k, v in params.items()))
    return (kind, arity, canon)


def graph_tree(graph: OpGraph) -> _Tree | None:
    """Tree of operator nodes; graph-input leaves are not represented."""
    node_map = graph.node_map()

    def build(ref: str) -> _Tree | None:
        if is_input_ref(ref):
            return None
        node = node_map[ref]
        children = tuple(c for c in (build(r) for r in node.inputs) if c is not None)
        return _Tree(_label(node.kind, node_arity(node), node.params), children)

    roots = [t for t in (build(ref) for ref in graph.outputs) if t is not None]
    if not roots:
        return None
    if len(roots) == 1:
        return roots[0]
    return _Tree(("__root__", len(roots), ()), tuple(roots))


def _postorder(tree: _Tree) -> tuple[list[tuple], list[int]]:
    """(labels, leftmost-leaf-descendant index) in postorder."""
    labels: list[tuple] = []
    lmld: list[int] = []

    def walk(t: _Tree) -> int:
        child_indices = [walk(c) for c in t.children]
        idx = len(labels)
        labels.append(t.label)
        lmld.append(lmld[child_indices[0]] if child_indices else idx)
        return idx

    walk(tree)
    return labels, lmld


def _keyroots(lmld: list[int]) -> list[int]:
    last: dict[int, int] = {}
    for i, l in enumerate(lmld):
        last[l] = i
    return sorted(last.values())


def tree_edit_distance(a: _Tree | None, b: _Tree | None) -> int:
    """Unit-cost ordered tree edit distance (Zhang-Shasha)."""
    if a is None and b is None:
        return 0
    if a is None:
        return b.size()
    if b is None:
        return a.size()

    la, lla = _postorder(a)
    lb, llb = _postorder(b)
    n, m = len(la), len(lb)
    td = [[0] * m for _ in range(n)]

    for i1 in _keyroots(lla):
        for j1 in _keyroots(llb):
            li, lj = lla[i1], llb[j1]
            rows, cols = i1 - li + 2, j1 - lj + 2
            fd = [[0] * cols for _ in range(rows)]
            for i in range(1, rows):
                fd[i][0] = fd[i - 1][0] + 1
            for j in range(1, cols):
                fd[0][j] = fd[0][j - 1] + 1
            for i in range(li, i1 + 1):
                for j in range(lj, j1 + 1):
                    ri, rj = i - li + 1, j - lj + 1
                    if lla[i] == li and llb[j] == lj:
                        relabel = 0 if la[i] == lb[j] else 1
                        fd[ri][rj] = min(
                            fd[ri - 1][rj] + 1,
                            fd[ri][rj - 1] + 1,
                            fd[ri - 1][rj - 1] + relabel,
                        )
                        td[i][j] = fd[ri][rj]
                    else:
                        fd[ri][rj] = min(
                            fd[ri - 1][rj] + 1,
                            fd[ri][rj - 1] + 1,
                            fd[lla[i] - li][llb[j] - lj] + td[i][j],
                        )
    return td[n - 1][m - 1]


def structural_similarity(a: OpGraph, b: OpGraph) -> float:
    ta, tb = graph_tree(a), graph_tree(b)
    size_a = ta.size() if ta is not None else 0
    size_b = tb.size() if tb is not None else 0
    if size_a == 0 and size_b == 0:
        return 1.0
    dist = tree_edit_distance(ta, tb)
    return max(0.0, 1.0 - dist / max(size_a, size_b))


def max_similarity(task: OperatorTask, pool: list[OperatorTask]) -> float:
    if not pool:
        return 0.0
    return max(structural_similarity(task.graph, other.graph) for other in pool)


def similarity_histogram(values: list[float], bins: int = HISTOGRAM_BINS) -> dict:
    """Fixed [0,1] binning; the top edge is inclusive so 1.0 lands in the
    last bin."""
    counts = [0] * bins
    for v in values:
        idx = min(int(v * bins), bins - 1)
        counts[idx] += 1
    edges = [i / bins for i in range(bins + 1)]
    return {"bin_edges": edges, "counts": counts}


def decontaminate(
    train: list[OperatorTask],
    eval_tasks: list[OperatorTask],
    threshold: float = 0.9,
) -> tuple[list[OperatorTask], list[OperatorTask], dict]:
    """(kept, removed, histogram of max similarities over all of train)."""
    if not (0.0 < threshold <= 1.0):
        raise ValueError(f"threshold must be in (0, 1], got {threshold}")
    kept: list[OperatorTask] = []
    removed: list[OperatorTask] = []
    max_sims: list[float] = []
    for task in train:
        s = max_similarity(task, eval_tasks)
        max_sims.append(s)
        (removed if s > threshold else kept).append(task)
    return kept, removed, similarity_histogram(max_sims)
