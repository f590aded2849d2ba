import numpy as np
import pytest

from kernelforge.data import (
    CatalogError,
    SynthesisError,
    builtin_catalog,
    catalog_from_dicts,
    ingest_seed_catalog,
    parse_provenance_category,
    sample_corpus,
    save_catalog,
    synthesize_composite,
)
from kernelforge.task import (
    OpGraph,
    TensorSpec,
    evaluate_graph,
    generate_inputs,
    infer_shapes,
    validate_graph,
)


def _entry(name, source_tag="torch-like", shape=(64, 64), op="relu"):
    return {
        "name": name,
        "source_tag": source_tag,
        "inputs": [{"shape": list(shape), "dtype": "f32"}],
        "nodes": [{"id": "op", "kind": "ew", "inputs": ["in0"], "params": {"op": op}}],
        "outputs": ["op"],
    }


def test_builtin_catalog_is_valid():
    cat = builtin_catalog()
    assert len(cat) >= 10
    assert all(validate_graph(e.graph).ok for e in cat.entries)
    tags = {e.source_tag for e in cat.entries}
    assert tags == {"torch-like", "transformers-like"}


def test_entry_count_matches_input():
    cat = catalog_from_dicts(
        [_entry("a"), _entry("b", op="sigmoid"), _entry("c", shape=(32, 32))]
    )
    assert len(cat) == 3


def test_duplicate_names_rejected():
    with pytest.raises(CatalogError, match="duplicate"):
        catalog_from_dicts([_entry("a"), _entry("a", op="sigmoid")])


def test_transformers_entries_not_composable():
    cat = builtin_catalog()
    composable = {e.name for e in cat.composable_entries()}
    opaque = {e.name for e in cat.entries if not e.composable}
    assert opaque and composable
    assert not (opaque & composable)
    for name in opaque:
        assert cat.get(name).source_tag == "transformers-like"


def test_composable_entries_must_be_single_node():
    bad = _entry("multi")
    bad["nodes"].append(
        {"id": "op2", "kind": "ew", "inputs": ["op"], "params": {"op": "relu"}}
    )
    bad["outputs"] = ["op2"]
    with pytest.raises(CatalogError, match="single-node"):
        catalog_from_dicts([bad])


def test_catalog_file_round_trip(tmp_path):
    cat = builtin_catalog()
    path = tmp_path / "catalog.json"
    save_catalog(cat, path)
    again = ingest_seed_catalog(path)
    assert [e.name for e in again.entries] == [e.name for e in cat.entries]
    assert all(a.graph == b.graph for a, b in zip(again.entries, cat.entries))


def test_catalog_parse_error(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{]")
    with pytest.raises(CatalogError):
        ingest_seed_catalog(path)


def test_invalid_template_rejected():
    bad = _entry("broken")
    bad["nodes"][0]["inputs"] = ["in7"]
    with pytest.raises(CatalogError):
        catalog_from_dicts([bad])


def test_synthesize_k_bounds():
    cat = builtin_catalog()
    with pytest.raises(SynthesisError):
        synthesize_composite(cat, seed=1, k=0)
    with pytest.raises(SynthesisError):
        synthesize_composite(cat, seed=1, k=6)


def test_synthesize_needs_enough_composable_entries():
    cat = catalog_from_dicts([_entry("only")])
    with pytest.raises(SynthesisError, match="composable"):
        synthesize_composite(cat, seed=1, k=2)


def test_synthesize_deterministic():
    cat = builtin_catalog()
    a = synthesize_composite(cat, seed=99, k=3)
    b = synthesize_composite(cat, seed=99, k=3)
    assert a == b
    c = synthesize_composite(cat, seed=100, k=3)
    assert a != c


def test_k1_is_a_single_template_instance():
    cat = builtin_catalog()
    task = synthesize_composite(cat, seed=5, k=1)
    assert len(task.graph.nodes) == 1
    assert task.provenance == "composite(1)"
    assert task.level_tag == "L1"
    kinds = {e.graph.nodes[0].kind for e in cat.composable_entries()}
    assert task.graph.nodes[0].kind in kinds


def test_composites_always_validate_across_seeds():
    cat = builtin_catalog()
    for k in range(1, 6):
        for seed in range(12):
            task = synthesize_composite(cat, seed=seed, k=k)
            assert validate_graph(task.graph).ok
            assert task.provenance == f"composite({k})"
            assert len(task.graph.outputs) == 1


def _split_at(graph: OpGraph, boundary: str):
    """Split a chain graph into prefix/suffix graphs at a node reference."""
    ids = [n.id for n in graph.nodes]
    cut = ids.index(boundary) + 1
    prefix = OpGraph(inputs=graph.inputs, nodes=graph.nodes[:cut], outputs=(boundary,))
    extra = f"in{len(graph.inputs)}"
    shapes = infer_shapes(graph)
    suffix_nodes = tuple(
        type(n)(
            id=n.id,
            kind=n.kind,
            inputs=tuple(extra if r == boundary else r for r in n.inputs),
            params=n.params,
        )
        for n in graph.nodes[cut:]
    )
    suffix = OpGraph(
        inputs=graph.inputs + (TensorSpec(shape=shapes[boundary]),),
        nodes=suffix_nodes,
        outputs=graph.outputs,
    )
    return prefix, suffix


def test_k2_chain_equals_piped_stages():
    cat = builtin_catalog()
    for seed in range(8):
        task = synthesize_composite(cat, seed=seed, k=2)
        boundary = next(n.id for n in task.graph.nodes if n.id.startswith("s0_"))
        prefix, suffix = _split_at(task.graph, boundary)
        inputs = generate_inputs(task, seed=7)
        whole = evaluate_graph(task.graph, inputs)
        stage1 = evaluate_graph(prefix, inputs)
        stage2 = evaluate_graph(suffix, inputs + [stage1[0]])
        for x, y in zip(whole, stage2):
            np.testing.assert_array_equal(x, y)


def test_adapters_fire_for_rank_disagreement():
    # matrix-valued chain into the diag template's vector port: a
    # reduction/scale pair must bridge the ranks
    entries = [
        {
            "name": "mm",
            "source_tag": "torch-like",
            "inputs": [{"shape": [64, 64]}, {"shape": [64, 64]}],
            "nodes": [{"id": "op", "kind": "matmul", "inputs": ["in0", "in1"], "params": {}}],
            "outputs": ["op"],
        },
        {
            "name": "dg",
            "source_tag": "torch-like",
            "inputs": [{"shape": [64]}, {"shape": [64, 48]}],
            "nodes": [{"id": "op", "kind": "diag_matmul", "inputs": ["in0", "in1"], "params": {}}],
            "outputs": ["op"],
        },
    ]
    cat = catalog_from_dicts(entries)
    found = None
    for seed in range(50):
        task = synthesize_composite(cat, seed=seed, k=2)
        kinds = [n.kind for n in task.graph.nodes]
        if kinds[0] == "matmul" and "diag_matmul" in kinds:
            found = task
            break
    assert found is not None, "no seed produced the matmul->diag order"
    adapter_ids = [n.id for n in found.graph.nodes if "adapt" in n.id]
    assert len(adapter_ids) == 2  # one reduction + one scale
    adapter_kinds = {
        n.kind for n in found.graph.nodes if n.id in adapter_ids
    }
    assert adapter_kinds == {"reduction", "scale"}
    assert validate_graph(found.graph).ok
    # the adapter pair is mean-preserving: sum then divide by the extent
    red = next(n for n in found.graph.nodes if n.kind == "reduction" and "adapt" in n.id)
    sc = next(n for n in found.graph.nodes if n.kind == "scale" and "adapt" in n.id)
    assert red.params["op"] == "sum"
    assert sc.params["factor"] == pytest.approx(1 / 64)


def test_sample_corpus_mix_and_determinism():
    cat = builtin_catalog()
    tasks = sample_corpus(cat, count=60, seed=4)
    again = sample_corpus(cat, count=60, seed=4)
    assert tasks == again
    ids = [t.task_id for t in tasks]
    assert len(set(ids)) == len(ids)
    cats = {parse_provenance_category(t.provenance) for t in tasks}
    assert "x2" in cats  # dominant category must show up in 60 draws
    for t in tasks:
        assert validate_graph(t.graph).ok


def test_parse_provenance_category():
    assert parse_provenance_category("seed") == "x1"
    assert parse_provenance_category("composite(3)") == "x3"
    assert parse_provenance_category("transformer-like") == "transformer-like"
    with pytest.raises(ValueError):
        parse_provenance_category("composite(9)")
    with pytest.raises(ValueError):
        parse_provenance_category("mystery")
