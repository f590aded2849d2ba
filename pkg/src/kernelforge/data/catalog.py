"""Seed catalog: the library of operator templates synthesis draws from.

A catalog file is JSON: {"entries": [{"name", "source_tag", "inputs",
"nodes", "outputs"}, ...]} where the graph fields use the task format.
Entries tagged "torch-like" are composable; "transformers-like" entries are
ingested (they show up in corpora and composition stats) but are never
sampled as chain stages, and their internals are treated as opaque.

Composable templates must be single-node graphs whose chain port is in0;
that is what lets the synthesizer re-instantiate them at an incoming shape.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from ..task.graph import OpGraph, validate_graph
from ..task.serialize import graph_from_dict, graph_to_dict

SOURCE_TAGS = ("torch-like", "transformers-like")


class CatalogError(ValueError):
    pass


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    source_tag: str
    graph: OpGraph

    @property
    def composable(self) -> bool:
        return self.source_tag == "torch-like"


@dataclass(frozen=True)
class SeedCatalog:
    entries: tuple[CatalogEntry, ...]

    def __post_init__(self):
        names = [e.name for e in self.entries]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise CatalogError(f"duplicate entry names: {dupes}")

    def composable_entries(self) -> list[CatalogEntry]:
        return [e for e in self.entries if e.composable]

    def get(self, name: str) -> CatalogEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def __len__(self) -> int:
        return len(self.entries)


def _entry_from_dict(d: dict) -> CatalogEntry:
    for key in ("name", "source_tag", "inputs", "nodes", "outputs"):
        if key not in d:
            raise CatalogError(f"catalog entry missing {key!r}")
    if d["source_tag"] not in SOURCE_TAGS:
        raise CatalogError(f"unknown source_tag {d['source_tag']!r}")
    graph = graph_from_dict(d)
    result = validate_graph(graph)
    if not result.ok:
        raise CatalogError(f"entry {d['name']!r} invalid: {'; '.join(result.violations)}")
    if len(graph.outputs) != 1:
        raise CatalogError(f"entry {d['name']!r} must have exactly one output")
    entry = CatalogEntry(name=str(d["name"]), source_tag=d["source_tag"], graph=graph)
    if entry.composable:
        if len(graph.nodes) != 1:
            raise CatalogError(
                f"composable entry {entry.name!r} must be a single-node template"
            )
        if "in0" not in graph.nodes[0].inputs:
            raise CatalogError(
                f"composable entry {entry.name!r} must consume in0 as its chain port"
            )
    return entry


def catalog_from_dicts(entries: list[dict]) -> SeedCatalog:
    return SeedCatalog(entries=tuple(_entry_from_dict(d) for d in entries))


def ingest_seed_catalog(path: str | Path) -> SeedCatalog:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise CatalogError(f"cannot read catalog {path}: {e}") from e
    if not isinstance(data, dict) or not isinstance(data.get("entries"), list):
        raise CatalogError("catalog must be an object with an entries list")
    return catalog_from_dicts(data["entries"])


def save_catalog(catalog: SeedCatalog, path: str | Path) -> None:
    payload = {
        "entries": [
            {"name": e.name, "source_tag": e.source_tag, **graph_to_dict(e.graph)}
            for e in catalog.entries
        ]
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def _t(name, source_tag, inputs, nodes, outputs) -> dict:
    return {
        "name": name,
        "source_tag": source_tag,
        "inputs": [{"shape": list(s), "dtype": "f32"} for s in inputs],
        "nodes": nodes,
        "outputs": outputs,
    }


def _n(id, kind, inputs, **params) -> dict:
    return {"id": id, "kind": kind, "inputs": inputs, "params": params}


# Shapes are sized so single templates land inside the 1-100 ms workload
# band under the default cost model; tiny tensors exist to exercise the
# lower workload filter.
_BUILTIN = [
    _t("add_1k", "torch-like", [(1024, 1024), (1024, 1024)], [_n("op", "ew", ["in0", "in1"], op="add")], ["op"]),
    _t("mul_1k", "torch-like", [(1024, 1024), (1024, 1024)], [_n("op", "ew", ["in0", "in1"], op="mul")], ["op"]),
    _t("relu_1k", "torch-like", [(1024, 1024)], [_n("op", "ew", ["in0"], op="relu")], ["op"]),
    _t("sigmoid_1k", "torch-like", [(1024, 1024)], [_n("op", "ew", ["in0"], op="sigmoid")], ["op"]),
    _t("halve_1k", "torch-like", [(1024, 1024)], [_n("op", "ew", ["in0"], op="div_const", const=2.0)], ["op"]),
    _t("scale_1k", "torch-like", [(1024, 1024)], [_n("op", "scale", ["in0"], factor=0.5)], ["op"]),
    _t("matmul_512", "torch-like", [(512, 512), (512, 512)], [_n("op", "matmul", ["in0", "in1"])], ["op"]),
    _t("matvec_1k", "torch-like", [(1024, 1024), (1024,)], [_n("op", "matmul", ["in0", "in1"])], ["op"]),
    _t("diag_matmul_512", "torch-like", [(512,), (512, 512)], [_n("op", "diag_matmul", ["in0", "in1"])], ["op"]),
    _t("rowsum_1k", "torch-like", [(1024, 1024)], [_n("op", "reduction", ["in0"], op="sum", axis=1)], ["op"]),
    _t("colmean_1k", "torch-like", [(1024, 1024)], [_n("op", "reduction", ["in0"], op="mean", axis=0)], ["op"]),
    _t("conv3x3_512", "torch-like", [(512, 512)], [
        _n("op", "conv", ["in0"], weight=[[0.0625, 0.125, 0.0625], [0.125, 0.25, 0.125], [0.0625, 0.125, 0.0625]]),
    ], ["op"]),
    _t("relu_tiny", "torch-like", [(64, 64)], [_n("op", "ew", ["in0"], op="relu")], ["op"]),
    _t(
        "attn_scores_512",
        "transformers-like",
        [(512, 128), (128, 512), (512, 128)],
        [
            _n("qk", "matmul", ["in0", "in1"]),
            _n("sc", "scale", ["qk"], factor=0.088388),
            _n("sg", "ew", ["sc"], op="sigmoid"),
            _n("av", "matmul", ["sg", "in2"]),
        ],
        ["av"],
    ),
    _t(
        "ffn_512",
        "transformers-like",
        [(256, 512), (512, 1024), (1024, 512)],
        [
            _n("up", "matmul", ["in0", "in1"]),
            _n("act", "ew", ["up"], op="relu"),
            _n("down", "matmul", ["act", "in2"]),
        ],
        ["down"],
    ),
]


def builtin_catalog() -> SeedCatalog:
    return catalog_from_dicts(_BUILTIN)
