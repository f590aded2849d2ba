import pytest

from conftest import candidate_dict, diag_task, fold_task, fuse_task, sum_dot_task, task_dict
from torchbridge.rewrites import (
    RULES,
    CandidateError,
    apply_candidate,
    parse_candidate,
    validate_partition,
)
from torchbridge.taskspec import infer_shapes, parse_task


def graph_of(d):
    return parse_task(d).graph


def test_parse_candidate_defaults():
    c = parse_candidate({})
    assert c.rewrites == () and c.partition is None and c.source_digest == ""


def test_parse_candidate_rejects_malformed_entries():
    with pytest.raises(CandidateError, match="malformed rewrite entry"):
        parse_candidate({"rewrites": [{"rule": "x"}]})
    with pytest.raises(CandidateError, match="must be an object"):
        parse_candidate([1, 2])


def test_diag_rewrite_becomes_row_mul():
    g = graph_of(diag_task())
    find, apply, fuses = RULES["diag_matmul_to_row_scale"]
    assert find(g) == [("d0",)]
    assert not fuses
    out = apply(g, ("d0",))
    node = out.node_map()["d0"]
    assert node.kind == "ew" and node.params == {"op": "mul"}
    assert infer_shapes(out)["d0"] == (16, 8)


@pytest.mark.parametrize("with_scale", [False, True])
def test_sum_dot_chain_match_and_id_inheritance(with_scale):
    g = graph_of(sum_dot_task(with_scale=with_scale))
    find, apply, _ = RULES["matmul_sum_to_sum_dot"]
    chain = ("m0", "s0", "red") if with_scale else ("m0", "red")
    assert find(g) == [chain]
    out = apply(g, chain)
    ids = [n.id for n in out.nodes]
    # final node keeps the reduction's id; the new reduce node is fresh
    assert "red" in ids and "red_w" in ids
    assert out.node_map()["red_w"].kind == "reduction"
    assert infer_shapes(out)["red"] == (8,)


def test_sum_dot_fresh_id_avoids_collisions():
    d = sum_dot_task()
    # occupy the id the rewrite would normally mint
    d["nodes"].append({"id": "red_w", "kind": "scale", "inputs": ["red"], "params": {"factor": 1.0}})
    d["outputs"] = ["red_w"]
    g = graph_of(d)
    find, apply, _ = RULES["matmul_sum_to_sum_dot"]
    out = apply(g, find(g)[0])
    assert "red_wx" in [n.id for n in out.nodes]


def test_sum_dot_requires_single_consumer_chain():
    d = sum_dot_task()
    # a second consumer of the matmul breaks the chain
    d["nodes"].append({"id": "extra", "kind": "scale", "inputs": ["m0"], "params": {"factor": 2.0}})
    d["outputs"] = ["red", "extra"]
    find, _, _ = RULES["matmul_sum_to_sum_dot"]
    assert find(graph_of(d)) == []


def test_sum_dot_axis0_not_matched():
    d = sum_dot_task()
    d["nodes"][-1]["params"]["axis"] = 0
    find, _, _ = RULES["matmul_sum_to_sum_dot"]
    assert find(graph_of(d)) == []


def test_fold_scale_multiplies_factors():
    g = graph_of(fold_task())
    find, apply, _ = RULES["fold_scale_chain"]
    assert find(g) == [("s0", "s1")]
    out = apply(g, ("s0", "s1"))
    assert [n.id for n in out.nodes] == ["s1"]
    node = out.node_map()["s1"]
    assert node.inputs == ("in0",)
    assert node.params["factor"] == pytest.approx(0.375)


def test_fuse_add_relu_is_scheduling_only():
    g = graph_of(fuse_task())
    find, apply, fuses = RULES["fuse_add_relu"]
    assert fuses
    assert find(g) == [("a0", "r0")]
    assert apply(g, ("a0", "r0")) is g


def test_apply_candidate_default_partition_merges_fused_pair():
    g = graph_of(fuse_task())
    c = parse_candidate(candidate_dict([("fuse_add_relu", ("a0", "r0"))]))
    _, partition = apply_candidate(g, c)
    assert partition == (("a0", "r0"),)


def test_apply_candidate_enforces_cogrouping():
    g = graph_of(fuse_task())
    c = parse_candidate(
        candidate_dict([("fuse_add_relu", ("a0", "r0"))], partition=[("a0",), ("r0",)])
    )
    with pytest.raises(CandidateError, match="not scheduled together"):
        apply_candidate(g, c)


def test_apply_candidate_unknown_rule_and_bad_binding():
    g = graph_of(diag_task())
    with pytest.raises(CandidateError, match="unknown rewrite rule"):
        apply_candidate(g, parse_candidate(candidate_dict([("launch_missiles", ("d0",))])))
    with pytest.raises(CandidateError, match="does not match"):
        apply_candidate(g, parse_candidate(candidate_dict([("fold_scale_chain", ("d0",))])))


def test_rewrites_apply_in_order():
    d = task_dict(
        "t",
        [(8,)],
        [
            ("s0", "scale", ["in0"], {"factor": 2.0}),
            ("s1", "scale", ["s0"], {"factor": 3.0}),
            ("s2", "scale", ["s1"], {"factor": 5.0}),
        ],
        ["s2"],
    )
    g = graph_of(d)
    c = parse_candidate(
        candidate_dict(
            [("fold_scale_chain", ("s0", "s1")), ("fold_scale_chain", ("s1", "s2"))]
        )
    )
    out, _ = apply_candidate(g, c)
    assert [n.id for n in out.nodes] == ["s2"]
    assert out.node_map()["s2"].params["factor"] == pytest.approx(30.0)
    # the second application must be valid against the graph as rewritten
    stale = parse_candidate(
        candidate_dict(
            [("fold_scale_chain", ("s1", "s2")), ("fold_scale_chain", ("s0", "s1"))]
        )
    )
    with pytest.raises(CandidateError, match="does not match"):
        apply_candidate(g, stale)


class TestPartitionValidation:
    def chain(self):
        return graph_of(
            task_dict(
                "t",
                [(8,)],
                [
                    ("a", "scale", ["in0"], {"factor": 1.0}),
                    ("b", "ew", ["a"], {"op": "relu"}),
                    ("c", "scale", ["b"], {"factor": 2.0}),
                ],
                ["c"],
            )
        )

    def test_singletons_ok(self):
        validate_partition(self.chain(), (("a",), ("b",), ("c",)))

    def test_unknown_id(self):
        with pytest.raises(CandidateError, match="unknown node id"):
            validate_partition(self.chain(), (("a",), ("b",), ("c",), ("ghost",)))

    def test_duplicate_and_missing(self):
        with pytest.raises(CandidateError, match="two groups"):
            validate_partition(self.chain(), (("a", "b"), ("b", "c")))
        with pytest.raises(CandidateError, match="does not cover"):
            validate_partition(self.chain(), (("a",), ("b",)))

    def test_disconnected_group(self):
        g = graph_of(
            task_dict(
                "t",
                [(8,), (8,)],
                [
                    ("a", "scale", ["in0"], {"factor": 1.0}),
                    ("b", "scale", ["in1"], {"factor": 1.0}),
                ],
                ["a", "b"],
            )
        )
        with pytest.raises(CandidateError, match="not connected"):
            validate_partition(g, (("a", "b"),))

    def test_nonconvex_group(self):
        # c reads a directly, so {a, c} is connected, but a -> b -> c
        # leaves the group and comes back
        g = graph_of(
            task_dict(
                "t",
                [(8,)],
                [
                    ("a", "scale", ["in0"], {"factor": 1.0}),
                    ("b", "ew", ["a"], {"op": "relu"}),
                    ("c", "ew", ["a", "b"], {"op": "add"}),
                ],
                ["c"],
            )
        )
        with pytest.raises(CandidateError, match="not convex"):
            validate_partition(g, (("a", "c"), ("b",)))

    def test_empty_graph_empty_partition(self):
        g = graph_of(task_dict("t", [(8,)], [], ["in0"]))
        validate_partition(g, ())
