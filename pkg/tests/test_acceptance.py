"""Acceptance gate: one test per release criterion, each printing a
verdict line. Tolerances and scales are part of the contract; do not
loosen them to make a failure pass."""

import hashlib
import itertools
import json
import os
import time

import numpy as np
import pytest

from kernelforge.cli import main as cli_main
from kernelforge.data.dataset import write_dataset
from kernelforge.data.filters import filter_task
from kernelforge.data.similarity import decontaminate, structural_similarity
from kernelforge.data.catalog import builtin_catalog
from kernelforge.data.synth import sample_corpus
from kernelforge.env.episode import EpisodeState, Submit, step
from kernelforge.env.policy import build_candidate
from kernelforge.env.tools import ToolCall, dispatch_tool
from kernelforge.env.workspace import init_workspace
from kernelforge.metrics import evaluate
from kernelforge.rewards import RewardInput, schedule_reward
from kernelforge.rl import (
    ClipParams,
    TrajectoryTensors,
    gae_from_arrays,
    importance_ratios,
    ppo_surrogate,
    rft_filter,
)
from kernelforge.sim.costmodel import CostModelParams, cost_compiled, cost_eager
from kernelforge.sim.executor import SimulatedExecutor
from kernelforge.sim.rewrites import RULES, KernelCandidate, RewriteApplication, apply_candidate
from kernelforge.store import store_scan
from kernelforge.task.graph import OpGraph, OperatorNode, OperatorTask, TensorSpec
from kernelforge.task.interp import evaluate_graph, generate_graph_inputs


def _verdict(n, label):
    print(f"criterion {n} PASS: {label}")


def _graph(inputs, nodes, outputs):
    return OpGraph(
        inputs=tuple(TensorSpec(shape=tuple(s)) for s in inputs),
        nodes=tuple(nodes),
        outputs=tuple(outputs),
    )


def _node(id, kind, inputs, **params):
    return OperatorNode(id=id, kind=kind, inputs=tuple(inputs), params=params)


def test_criterion_1_level_table_aggregation(tmp_path, capsys):
    started = time.monotonic()
    rows = []

    def add(level, n, se, sc, passed=True):
        for _ in range(n):
            rows.append(
                {
                    "task_id": f"{level}-{len(rows)}",
                    "level": level,
                    "passed": passed,
                    "speedup_vs_eager": se,
                    "speedup_vs_compile": sc,
                }
            )

    # pass rates 100/100/94, faster-vs-compile 97/100/90, weights 100/100/50
    add("L1", 97, 2.0, 1.5)
    add("L1", 3, 2.0, 0.9)
    add("L2", 100, 1.8, 1.2)
    add("L3", 45, 1.6, 1.3)
    add("L3", 1, 1.2, 0.8)
    add("L3", 1, 0.7, 0.5)
    add("L3", 3, None, None, passed=False)
    results = tmp_path / "results.jsonl"
    results.write_text("".join(json.dumps(r) + "\n" for r in rows))

    assert cli_main(["eval", "--results", str(results)]) == 0
    out = capsys.readouterr().out
    overall = next(line for line in out.splitlines() if line.startswith("Overall"))
    assert "98.8%" in overall
    assert "96.8%" in overall

    from kernelforge.metrics import read_results, round_half_up

    report = evaluate(read_results(results))["Overall"]
    assert round_half_up(report.pass_rate, 1) == 98.8
    assert round_half_up(report.faster_rate_compile, 1) == 96.8

    elapsed = time.monotonic() - started
    assert elapsed < 1.0, f"aggregation took {elapsed:.2f}s"
    _verdict(1, "overall row is 98.8% / 96.8% at one-decimal rounding")


def test_criterion_2_reward_truth_table():
    def oracle(correct, t, t_eager, t_compile):
        if not correct:
            return -1
        beats_eager = t < t_eager * 0.95
        beats_compile = t < t_compile * 0.95
        if beats_eager and beats_compile:
            return 3
        if beats_eager:
            return 2
        return 1

    # candidate/baseline ratio grids straddling the 5% boundary exactly
    ratios = np.concatenate(
        [np.linspace(0.5, 1.5, 97), [0.95, np.nextafter(0.95, 0), np.nextafter(0.95, 1), 1.0]]
    )
    t = 1.0
    points = 0
    mismatches = 0
    for correct in (True, False):
        for re_ in ratios:
            for rc in ratios:
                t_eager = t / re_
                t_compile = t / rc
                if correct:
                    got = schedule_reward(
                        RewardInput(correct=True, t=t, t_eager=t_eager, t_compile=t_compile)
                    )
                else:
                    got = schedule_reward(RewardInput(correct=False))
                want = oracle(correct, t, t_eager, t_compile)
                mismatches += got != want
                points += 1
    assert points >= 10_000
    assert mismatches == 0
    _verdict(2, f"schedule matches the four-branch oracle on {points} grid points")


def test_criterion_3_gae_recursion_vs_direct_sum():
    started = time.monotonic()

    def direct(rewards, values, gamma, lam):
        T = len(rewards)
        deltas = [
            rewards[i] + gamma * (values[i + 1] if i + 1 < T else 0.0) - values[i]
            for i in range(T)
        ]
        return [
            sum((gamma * lam) ** (j - i) * deltas[j] for j in range(i, T))
            for i in range(T)
        ]

    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(1000):
        T = int(rng.integers(1, 65))
        rewards = np.zeros(T)
        rewards[-1] = rng.normal()
        values = rng.normal(size=T)
        adv, targets = gae_from_arrays(rewards, values)
        expected = direct(list(rewards), list(values), 1.0, 0.95)
        worst = max(worst, float(np.max(np.abs(adv - np.asarray(expected)))))
    assert worst <= 1e-9

    fixture_adv, fixture_targets = gae_from_arrays([0.0, 0.0, 2.0], [0.5, 0.5, 0.5])
    assert np.max(np.abs(fixture_targets - np.array([1.85375, 1.925, 2.0]))) <= 1e-9

    elapsed = time.monotonic() - started
    assert elapsed < 5.0, f"GAE sweep took {elapsed:.2f}s"
    _verdict(3, f"1000-trajectory sweep max abs error {worst:.2e}")


def test_criterion_4_ppo_identity_and_pessimism():
    rng = np.random.default_rng(11)
    params = ClipParams(eps_lower=0.2, eps_higher=0.28)

    # identity ratios: objective equals the masked mean advantage
    for _ in range(20):
        T = int(rng.integers(2, 40))
        logp = rng.normal(size=T)
        rewards = np.zeros(T)
        rewards[-1] = 1.0
        mask = rng.random(T) < 0.7
        if not mask.any():
            mask[0] = True
        traj = TrajectoryTensors(
            rewards=tuple(rewards),
            values=tuple(rng.normal(size=T)),
            logp_old=tuple(logp),
            logp_new=tuple(logp),
            loss_mask=tuple(bool(b) for b in mask),
        )
        adv = rng.normal(size=T)
        got = ppo_surrogate(traj, adv, params)
        assert abs(got - float(np.mean(adv[mask]))) <= 1e-12

    # per-token pessimism: the clipped term never exceeds rho * advantage
    total_tokens = 0
    reconstruction_checked = 0
    while total_tokens < 100_000:
        T = int(rng.integers(100, 1000))
        rewards = np.zeros(T)
        rewards[-1] = 1.0
        traj = TrajectoryTensors(
            rewards=tuple(rewards),
            values=tuple(rng.normal(size=T)),
            logp_old=tuple(rng.normal(size=T)),
            logp_new=tuple(rng.normal(size=T)),
            loss_mask=(True,) * T,
        )
        adv = rng.normal(size=T)
        rho = importance_ratios(np.asarray(traj.logp_old), np.asarray(traj.logp_new))
        term = np.minimum(
            rho * adv, np.clip(rho, 1 - params.eps_lower, 1 + params.eps_higher) * adv
        )
        assert np.all(term <= rho * adv + 1e-12)
        if reconstruction_checked < 5:
            assert abs(ppo_surrogate(traj, adv, params) - float(term.mean())) <= 1e-12
            reconstruction_checked += 1
        total_tokens += T
    _verdict(4, f"identity objective to 1e-12; pessimism bound on {total_tokens} tokens")


def _random_diag_graph(rng):
    n = int(rng.integers(4, 64))
    m = int(rng.integers(4, 64))
    nodes = [_node("d0", "diag_matmul", ["in0", "in1"])]
    outputs = ["d0"]
    if rng.random() < 0.5:
        nodes.append(_node("r0", "ew", ["d0"], op="relu"))
        outputs = ["r0"]
    return _graph([(n,), (n, m)], nodes, outputs)


def _random_matmul_sum_graph(rng):
    a = int(rng.integers(4, 48))
    k = int(rng.integers(4, 48))
    b = int(rng.integers(4, 48))
    nodes = [_node("m0", "matmul", ["in0", "in1"])]
    last = "m0"
    if rng.random() < 0.5:
        nodes.append(_node("s0", "scale", ["m0"], factor=float(rng.uniform(0.5, 2.0))))
        last = "s0"
    op = "sum" if rng.random() < 0.5 else "mean"
    nodes.append(_node("red", "reduction", [last], op=op, axis=1))
    return _graph([(a, k), (k, b)], nodes, ["red"])


def _random_scale_chain_graph(rng):
    n = int(rng.integers(8, 2048))
    f1 = float(rng.uniform(-2.0, 2.0) or 1.0)
    f2 = float(rng.uniform(-2.0, 2.0) or 1.0)
    return _graph(
        [(n,)],
        [_node("s0", "scale", ["in0"], factor=f1), _node("s1", "scale", ["s0"], factor=f2)],
        ["s1"],
    )


def _random_add_relu_graph(rng):
    n = int(rng.integers(4, 128))
    m = int(rng.integers(4, 128))
    return _graph(
        [(n, m), (n, m)],
        [_node("a0", "ew", ["in0", "in1"], op="add"), _node("r0", "ew", ["a0"], op="relu")],
        ["r0"],
    )


_RULE_GENERATORS = {
    "diag_matmul_to_row_scale": _random_diag_graph,
    "matmul_sum_to_sum_dot": _random_matmul_sum_graph,
    "fold_scale_chain": _random_scale_chain_graph,
    "fuse_add_relu": _random_add_relu_graph,
}


def test_criterion_5_rewrite_soundness_and_cost_order():
    rng = np.random.default_rng(23)
    worst = 0.0
    for name, generator in _RULE_GENERATORS.items():
        rule = RULES[name]
        for i in range(200):
            graph = generator(rng)
            bindings = rule.find(graph)
            assert bindings, f"{name} generator produced a non-matching graph"
            candidate = KernelCandidate(
                rewrites=(RewriteApplication(rule=name, nodes=bindings[0]),)
            )
            applied = apply_candidate(graph, candidate)
            inputs = generate_graph_inputs(graph.inputs, seed=int(rng.integers(1 << 30)))
            before = evaluate_graph(graph, inputs)
            after = evaluate_graph(applied.graph, inputs)
            assert len(before) == len(after)
            for x, y in zip(before, after):
                worst = max(worst, float(np.max(np.abs(x - y))) if x.size else 0.0)
    assert worst <= 1e-6, f"rewrite output drift {worst:.2e}"

    params = CostModelParams()
    violations = 0
    for task in sample_corpus(builtin_catalog(), count=500, seed=91):
        if cost_compiled(task.graph, params) > cost_eager(task.graph, params):
            violations += 1
    assert violations == 0
    _verdict(5, f"800 rewrites within {worst:.2e}; 500 graphs, 0 cost inversions")


class _FlakyExecutor(SimulatedExecutor):
    """Injects fresh noise into eager outputs for designated task ids."""

    def __init__(self):
        super().__init__()
        self._calls = itertools.count()

    def run_eager(self, task, seed):
        outs = super().run_eager(task, seed)
        if task.task_id.startswith("stochastic"):
            jitter = 1.0 + 0.01 * (next(self._calls) + 1)
            outs = [o * jitter for o in outs]
        return outs


def test_criterion_6_filter_fixtures_and_decontamination():
    def tiny(i):
        return OperatorTask(
            task_id=f"tiny-{i}",
            graph=_graph([(64,)], [_node("r0", "ew", ["in0"], op="relu")], ["r0"]),
        )

    def huge(i):
        nodes = [_node("m0", "matmul", ["in0", "in1"])]
        for j in range(1, 4):
            nodes.append(_node(f"m{j}", "matmul", [f"m{j-1}", f"in{j+1}"]))
        return OperatorTask(
            task_id=f"huge-{i}",
            graph=_graph([(1024, 1024)] * 5, nodes, ["m3"]),
        )

    def stochastic(i):
        return OperatorTask(
            task_id=f"stochastic-{i}",
            graph=_graph([(512, 512)], [_node("s0", "scale", ["in0"], factor=1.5)], ["s0"]),
        )

    def constant(i):
        return OperatorTask(
            task_id=f"constant-{i}",
            graph=_graph([(512, 512)], [_node("s0", "scale", ["in0"], factor=0.0)], ["s0"]),
        )

    def healthy(i):
        return OperatorTask(
            task_id=f"healthy-{i}",
            graph=_graph([(512, 512), (512, 512)], [_node("m0", "matmul", ["in0", "in1"])], ["m0"]),
        )

    expected = {}
    tasks = []
    for i in range(4):
        for build, accepted, reason_part in (
            (tiny, False, "below 1 ms"),
            (huge, False, "above 100 ms"),
            (stochastic, False, "nondeterministic"),
            (constant, False, "constant or indistinguishable"),
            (healthy, True, None),
        ):
            task = build(i)
            tasks.append(task)
            expected[task.task_id] = (accepted, reason_part)
    assert len(tasks) == 20

    executor = _FlakyExecutor()
    matches = 0
    for task in tasks:
        verdict = filter_task(task, executor)
        want_accept, want_reason = expected[task.task_id]
        assert verdict.accepted == want_accept, task.task_id
        if want_reason is not None:
            assert want_reason in verdict.reject_reason, task.task_id
        matches += 1
    assert matches == 20

    def chain(length, odd_one_out=False):
        nodes = []
        prev = "in0"
        for i in range(length):
            op = "sigmoid" if (odd_one_out and i == length - 1) else "relu"
            nodes.append(_node(f"n{i}", "ew", [prev], op=op))
            prev = f"n{i}"
        return _graph([(2048,)], nodes, [prev])

    eval_tasks = [
        OperatorTask(task_id="eval-a", graph=chain(10)),
        OperatorTask(task_id="eval-b", graph=chain(20)),
    ]
    exact_nine = OperatorTask(task_id="train-boundary", graph=chain(10, odd_one_out=True))
    above = OperatorTask(task_id="train-near-dup", graph=chain(20, odd_one_out=True))
    dup = OperatorTask(task_id="train-dup", graph=chain(10))
    far = OperatorTask(
        task_id="train-far",
        graph=_graph([(32, 32), (32, 32)], [_node("m0", "matmul", ["in0", "in1"])], ["m0"]),
    )
    assert structural_similarity(exact_nine.graph, eval_tasks[0].graph) == 0.9
    assert structural_similarity(above.graph, eval_tasks[1].graph) == 0.95

    kept, removed, _ = decontaminate([dup, above, exact_nine, far], eval_tasks, threshold=0.9)
    assert {t.task_id for t in removed} == {"train-dup", "train-near-dup"}
    assert {t.task_id for t in kept} == {"train-boundary", "train-far"}
    _verdict(6, "20/20 filter verdicts; decontamination trims >0.9 and keeps =0.9")


def test_criterion_7_sandbox_isolation_fuzz(tmp_path):
    task = OperatorTask(
        task_id="fuzz-target",
        graph=_graph(
            [(64,), (64, 48)], [_node("d0", "diag_matmul", ["in0", "in1"])], ["d0"]
        ),
    )
    parent = tmp_path / "jail"
    parent.mkdir()
    state = EpisodeState(
        task=task,
        workspace=init_workspace(task, parent / "ws"),
        executor=SimulatedExecutor(),
    )
    root = state.workspace.root

    readonly = [
        p
        for p in sorted(root.rglob("*"))
        if p.is_file() and "kernels" not in p.parts and p.name != "model_new.py"
    ]
    baseline_digests = [hashlib.sha256(p.read_bytes()).hexdigest() for p in readonly]
    baseline_stats = [(p.stat().st_mtime_ns, p.stat().st_size) for p in readonly]
    outside_before = sorted(os.listdir(parent))

    hostile_targets = [
        "../leak.txt",
        "../../leak.txt",
        "/etc/passwd",
        str(parent / "planted.txt"),
        "binding.cpp",
        "binding_registry.h",
        "model.py",
        "SKILL.md",
        "utils/__init__.py",
        "utils/profiling.py",
        "utils/verification.py",
        "kernels/../model.py",
        "kernels/../../leak2.txt",
        "new-top-level.txt",
    ]

    def hostile_call(rng):
        target = hostile_targets[rng.integers(len(hostile_targets))]
        roll = rng.integers(6)
        if roll == 0:
            return ToolCall("Write", {"file_path": target, "content": "pwned"})
        if roll == 1:
            return ToolCall(
                "Edit", {"file_path": target, "old_string": "a", "new_string": "pwned"}
            )
        if roll == 2:
            return ToolCall(
                "MultiEdit",
                {"file_path": target, "edits": [{"old_string": "a", "new_string": "p"}]},
            )
        if roll == 3:
            return ToolCall("Bash", {"command": f"cd {target}"})
        if roll == 4:
            return ToolCall("Glob", {"pattern": f"../{target}"})
        return ToolCall("Read", {"file_path": target})

    rng = np.random.default_rng(1234)
    sequences = 10_000
    for _ in range(sequences):
        for _ in range(int(rng.integers(1, 3))):
            dispatch_tool(hostile_call(rng), state.ctx)
        stats = [(p.stat().st_mtime_ns, p.stat().st_size) for p in readonly]
        assert stats == baseline_stats, "read-only file touched"
        assert sorted(os.listdir(parent)) == outside_before, "escape artifact"

    final_digests = [hashlib.sha256(p.read_bytes()).hexdigest() for p in readonly]
    assert final_digests == baseline_digests

    banned_snippets = [
        "auto y = torch::relu(x);",
        "return at::matmul(a, b);",
        "import torch.nn.functional as F\n",
        "z = F.gelu(x)\n",
    ]
    for i, snippet in enumerate(banned_snippets * 5):
        shim = root / "kernels" / "shim.py"
        shim.write_text(snippet)
        obs, _ = step(state, Submit(build_candidate(task)))
        report = state.measurements[-1]
        assert not report.correct
        assert "fallback" in report.failure_reason
        assert "fallback" in obs.text
    shim.unlink()
    _verdict(7, f"{sequences} hostile sequences, 0 mutations, 0 escapes; 20/20 fallback rejections")


def test_criterion_8_end_to_end_scripted_run(tmp_path, capsys):
    tasks = [
        OperatorTask(
            task_id=f"diag-e2e-{i:02d}",
            graph=_graph(
                [(64,), (64, 40 + 2 * i)],
                [_node("d0", "diag_matmul", ["in0", "in1"])],
                ["d0"],
            ),
            level_tag="L1",
            base_seed=7,
        )
        for i in range(8)
    ]
    dataset = tmp_path / "tasks"
    write_dataset(tasks, dataset)
    out = str(tmp_path / "run-a")

    assert cli_main(["--out", out, "--workers", "1", "run", "--dataset", str(dataset)]) == 0
    capsys.readouterr()
    store_a = tmp_path / "run-a" / "episodes.jsonl"
    logs = store_scan(store_a)
    assert len(logs) == 8
    for log in logs:
        assert log.budgets_used["turns"] <= 12
        assert log.final_reward == 3
        submit_turns = [t for t in log.turns if t.action["type"] == "submit"]
        assert submit_turns
        rules_used = {
            r["rule"] for t in submit_turns for r in t.action["candidate"]["rewrites"]
        }
        assert "diag_matmul_to_row_scale" in rules_used

    assert cli_main(["score", "--logs", str(store_a)]) == 0
    score_out = capsys.readouterr().out
    assert all(line.endswith(" 3") for line in score_out.splitlines())

    out_b = str(tmp_path / "run-b")
    assert cli_main(["--out", out_b, "--workers", "4", "run", "--dataset", str(dataset)]) == 0
    capsys.readouterr()
    store_b = tmp_path / "run-b" / "episodes.jsonl"
    assert store_a.read_bytes() == store_b.read_bytes()
    _verdict(8, "8 episodes, reward 3, row-scale submitted, byte-identical at --workers 4")


def test_criterion_9_rft_filter_survivors():
    def turn(tool="Bash", command="pwd", digest="obs", schema_ok=True):
        return {
            "tool": tool,
            "args": {"command": command},
            "observation_digest": digest,
            "schema_ok": schema_ok,
        }

    episodes = {
        "negative": ([turn(), turn(command="ls")], -1),
        "clean": ([turn(), turn(command="ls"), turn(command="cat model.py")], 3),
        "looping": (
            [turn(), turn(command="bash utils/compile.sh", digest="err")] * 1
            + [turn(command="bash utils/compile.sh", digest="err")] * 2
            + [turn(command="ls")],
            2,
        ),
        "schema": ([turn(), turn(schema_ok=False)], 3),
    }
    # the looping fixture repeats one failing call three times in a row
    assert (
        sum(
            1
            for t in episodes["looping"][0]
            if t["args"]["command"] == "bash utils/compile.sh"
        )
        == 3
    )

    survivors = [
        name
        for name, (turns, reward) in episodes.items()
        if rft_filter(turns, reward).kept
    ]
    assert survivors == ["clean"]
    _verdict(9, "filter keeps exactly the clean reward-3 episode")
