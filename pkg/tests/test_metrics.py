"""Level report arithmetic, checked against hand-computed fixtures."""

import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from kernelforge.metrics import (
    LevelReport,
    ResultFormatError,
    TaskResult,
    aggregate_overall,
    evaluate,
    level_report,
    read_results,
    render_report,
    report_to_dict,
    round_half_up,
    write_results,
)


def passed(tid, level, eager, compile_):
    return TaskResult(
        task_id=tid,
        level=level,
        passed=True,
        speedup_vs_eager=eager,
        speedup_vs_compile=compile_,
    )


def failed(tid, level):
    return TaskResult(task_id=tid, level=level, passed=False)


def reference_results():
    """250-task fixture reproducing the headline evaluation row.

    L1: 100/100 pass, 97 beat compile.  L2: perfect.  L3: 47/50 pass,
    46 beat eager, 45 beat compile.  Overall with 100/100/50 weights:
    pass 98.8, faster-eager 98.4, faster-compile 96.8.
    """
    results = []
    for i in range(97):
        results.append(passed(f"l1-{i}", "L1", 2.0, 1.5))
    for i in range(3):
        results.append(passed(f"l1-s{i}", "L1", 2.0, 0.9))
    for i in range(100):
        results.append(passed(f"l2-{i}", "L2", 1.8, 1.2))
    for i in range(45):
        results.append(passed(f"l3-{i}", "L3", 1.6, 1.3))
    results.append(passed("l3-e", "L3", 1.2, 0.8))
    results.append(passed("l3-s", "L3", 0.7, 0.5))
    for i in range(3):
        results.append(failed(f"l3-f{i}", "L3"))
    return results


class TestTaskResult:
    def test_passed_requires_speedups(self):
        with pytest.raises(ValueError, match="speedup_vs_eager"):
            TaskResult(task_id="a", level="L1", passed=True)

    def test_failed_forbids_speedups(self):
        with pytest.raises(ValueError, match="absent"):
            TaskResult(task_id="a", level="L1", passed=False, speedup_vs_eager=2.0)

    def test_unknown_level_rejected(self):
        with pytest.raises(ValueError, match="level"):
            failed("a", "L4")

    def test_nonpositive_speedup_rejected(self):
        with pytest.raises(ValueError, match="positive"):
            passed("a", "L1", -2.0, 1.0)


class TestLevelReport:
    def test_hand_computed_small_level(self):
        results = [
            passed("a", "L1", 2.0, 2.0),
            passed("b", "L1", 0.5, 1.0),
            passed("c", "L1", 1.0, 0.5),
            failed("d", "L1"),
        ]
        rep = level_report(results)
        assert rep.n_tasks == 4
        assert rep.n_passed == 3
        assert rep.pass_rate == 75.0
        # strictly-greater: the 1.0 entries do not count as faster
        assert rep.faster_rate_eager == 25.0
        assert rep.faster_rate_compile == 25.0
        # {2.0, 0.5, 1.0} is a reciprocal pair plus unity
        assert rep.geomean_eager == pytest.approx(1.0, abs=1e-12)
        assert rep.geomean_compile == pytest.approx(1.0, abs=1e-12)

    def test_empty_level(self):
        rep = level_report([])
        assert rep.n_tasks == 0
        assert rep.pass_rate == 0.0
        assert rep.geomean_eager is None
        assert rep.geomean_compile is None

    def test_geomeans_ignore_failed_tasks(self):
        rep = level_report([passed("a", "L1", 4.0, 4.0), failed("b", "L1")])
        assert rep.geomean_eager == pytest.approx(4.0)

    @given(
        st.lists(
            st.tuples(st.booleans(), st.floats(0.1, 10.0), st.floats(0.1, 10.0)),
            max_size=30,
        )
    )
    def test_faster_rate_never_exceeds_pass_rate(self, raw):
        results = [
            passed(f"t{i}", "L1", e, c) if ok else failed(f"t{i}", "L1")
            for i, (ok, e, c) in enumerate(raw)
        ]
        rep = level_report(results)
        assert rep.faster_rate_eager <= rep.pass_rate
        assert rep.faster_rate_compile <= rep.pass_rate

    @given(
        st.lists(st.floats(0.1, 10.0), min_size=1, max_size=20),
        st.floats(0.1, 10.0),
    )
    def test_geomean_multiplicative_and_permutation_invariant(self, speeds, c):
        base = [passed(f"t{i}", "L1", s, s) for i, s in enumerate(speeds)]
        scaled = [passed(f"t{i}", "L1", s * c, s) for i, s in enumerate(speeds)]
        shuffled = list(reversed(base))
        g = level_report(base).geomean_eager
        assert level_report(scaled).geomean_eager == pytest.approx(g * c, rel=1e-9)
        assert level_report(shuffled).geomean_eager == pytest.approx(g, rel=1e-12)


class TestOverall:
    def test_reference_row(self):
        reports = evaluate(reference_results())
        overall = reports["Overall"]
        assert round_half_up(overall.pass_rate, 1) == 98.8
        assert round_half_up(overall.faster_rate_eager, 1) == 98.4
        assert round_half_up(overall.faster_rate_compile, 1) == 96.8
        assert overall.n_tasks == 250

    def test_rate_weighting_by_hand(self):
        levels = {
            "L1": LevelReport(100, 100, 100.0, 100.0, 97.0, 2.0, 1.5),
            "L2": LevelReport(100, 100, 100.0, 100.0, 100.0, 1.8, 1.2),
            "L3": LevelReport(50, 47, 94.0, 92.0, 90.0, 1.5, 1.3),
        }
        overall = aggregate_overall(levels)
        assert overall.pass_rate == pytest.approx(98.8)
        assert overall.faster_rate_compile == pytest.approx(96.8)

    def test_overall_geomean_pools_passed_tasks(self):
        results = [
            passed("a", "L1", 2.0, 2.0),
            passed("b", "L1", 8.0, 8.0),
            passed("c", "L3", 1.0, 1.0),
            failed("d", "L3"),
        ]
        reports = evaluate(results)
        pooled = math.exp((math.log(2) + math.log(8) + math.log(1)) / 3)
        assert reports["Overall"].geomean_eager == pytest.approx(pooled, rel=1e-12)

    def test_custom_weights_renormalize(self):
        levels = {
            "L1": LevelReport(10, 10, 100.0, 100.0, 100.0, 2.0, 2.0),
            "L2": LevelReport(10, 0, 0.0, 0.0, 0.0, None, None),
        }
        overall = aggregate_overall(levels, weights={"L1": 1.0, "L2": 3.0})
        assert overall.pass_rate == pytest.approx(25.0)
        # only L1 has passed tasks, so its geomean carries through
        assert overall.geomean_eager == pytest.approx(2.0)

    def test_nonpositive_weight_rejected(self):
        with pytest.raises(ValueError, match="positive"):
            aggregate_overall({}, weights={"L1": 0.0})

    def test_missing_levels_yield_zero_report(self):
        overall = aggregate_overall({})
        assert overall.n_tasks == 0
        assert overall.geomean_eager is None


class TestRendering:
    def test_reference_table_layout(self):
        reports = evaluate(reference_results())
        text = render_report(reports)
        lines = text.strip().splitlines()
        assert len(lines) == 6  # header, rule, L1, L2, L3, Overall
        assert lines[2].startswith("L1")
        assert lines[5].startswith("Overall")
        assert "98.8%" in lines[5]
        assert "96.8%" in lines[5]

    def test_empty_input_flags_zero_rows(self):
        text = render_report(evaluate([]))
        assert "(no results)" in text

    def test_structured_twin_matches_rounding(self):
        reports = evaluate(reference_results())
        d = report_to_dict(reports)
        assert d["Overall"]["pass_rate"] == 98.8
        assert d["Overall"]["faster_rate_compile"] == 96.8
        assert d["L3"]["pass_rate"] == 94.0
        assert d["L2"]["geomean_compile"] == 1.2

    def test_round_half_up_beats_bankers(self):
        # 98.25 and 1.125 are exact binary fractions, so the .5 is real.
        assert round_half_up(98.25, 1) == 98.3
        assert round_half_up(1.125, 2) == 1.13
        assert round(98.25, 1) == 98.2  # what banker's rounding would report


class TestResultsFile:
    def test_round_trip(self, tmp_path):
        results = [passed("a", "L1", 2.0, 1.5), failed("b", "L3")]
        path = tmp_path / "results.jsonl"
        write_results(results, path)
        assert read_results(path) == results

    def test_field_names_are_pinned(self, tmp_path):
        path = tmp_path / "results.jsonl"
        write_results([passed("a", "L1", 2.0, 1.5)], path)
        record = json.loads(path.read_text().splitlines()[0])
        assert set(record) == {
            "task_id",
            "level",
            "passed",
            "speedup_vs_eager",
            "speedup_vs_compile",
        }

    def test_missing_field_rejected_with_line(self, tmp_path):
        path = tmp_path / "results.jsonl"
        path.write_text('{"task_id": "a", "level": "L1", "passed": false}\n')
        with pytest.raises(ResultFormatError, match="line 1"):
            read_results(path)

    def test_bad_json_rejected_with_line(self, tmp_path):
        path = tmp_path / "results.jsonl"
        good = json.dumps(failed("a", "L1").to_dict())
        path.write_text(good + "\n{broken\n")
        with pytest.raises(ResultFormatError, match="line 2"):
            read_results(path)
