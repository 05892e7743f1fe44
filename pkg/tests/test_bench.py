import csv

import pytest

from tracewam import bench
from tracewam.bench import (CSV_HEADER, BenchmarkSpec, Mode, WrongAnswer, compute_improvement,
                            compute_speedup, emit_stats_csv, run_benchmark, run_suite)

SRC = """
nrev([], []).
nrev([H|T], R) :- nrev(T, RT), app(RT, [H], R).
app([], L, L).
app([H|T], L, [H|R]) :- app(T, L, R).
range(N, N, [N]) :- !.
range(I, N, [I|T]) :- I < N, J is I + 1, range(J, N, T).
bench(N, R) :- range(1, N, L), nrev(L, R).
"""


@pytest.fixture
def tiny(tmp_path):
    path = tmp_path / "tiny.pl"
    path.write_text(SRC)
    return BenchmarkSpec("tiny", str(path), "bench({n}, R)", 40, repetitions=2)


@pytest.mark.parametrize("speedup, improvement", [(1.2357, 23.57), (1.1099, 10.99),
                                                  (1.0, 0.0), (0.9, -10.0)])
def test_improvement_formula(speedup, improvement):
    assert compute_improvement(speedup) == pytest.approx(improvement, abs=1e-9)


@pytest.mark.parametrize("old, new, speedup", [(10, 10, 1.0), (12.357, 10, 1.2357),
                                               (9, 10, 0.9)])
def test_speedup_formula(old, new, speedup):
    assert compute_speedup(old, new) == pytest.approx(speedup, abs=1e-12)


@pytest.mark.parametrize("old, new", [(0, 1), (1, 0), (-1, 2)])
def test_speedup_rejects_non_positive_times(old, new):
    with pytest.raises(ValueError):
        compute_speedup(old, new)


def test_spec_validation():
    with pytest.raises(ValueError):
        BenchmarkSpec("x", "x.pl", "g", 0)
    with pytest.raises(ValueError):
        BenchmarkSpec("x", "x.pl", "g", (3, -1))
    with pytest.raises(ValueError):
        BenchmarkSpec("x", "x.pl", "g", 3, repetitions=0)
    assert BenchmarkSpec("x", "x.pl", "t({n}, {seed})", (1, 2)).goal_text(7) == "t(1, 2, 7)"


def test_seed_comes_from_environment(monkeypatch):
    spec = bench.SUITE_BY_NAME["quicksort"]
    monkeypatch.setenv("TRACEWAM_SEED", "5")
    assert spec.goal_text() == "bench(400, 5, First, Sum)"
    monkeypatch.delenv("TRACEWAM_SEED")
    assert spec.goal_text() == "bench(400, 42, First, Sum)"


def test_suite_programs_ship_with_expected_answers():
    stored = bench.load_expected()
    for spec in bench.SUITE:
        assert f"{spec.name}|{spec.goal_text(42)}" in stored
        assert "bench(" in spec.source_text()


def test_wrong_answer_is_raised_with_a_diff(tiny):
    with pytest.raises(WrongAnswer) as e:
        run_benchmark(tiny, Mode.DEFAULT_ONLY, expected=["R = []"], repetitions=1)
    assert e.value.expected == ["R = []"]
    assert "-R = []" in str(e.value)


def test_default_mode_spends_no_time_in_trace_machinery(tiny):
    t, stats = run_benchmark(tiny, Mode.DEFAULT_ONLY)
    assert t.monitor_and_trace_builder == t.trace_compiler == t.s_emulator == 0
    assert stats.head_entries_spec == 0 and stats.traces_installed == 0
    assert stats.solutions == ["R = [" + ",".join(map(str, range(40, 0, -1))) + "]"]


def test_components_add_up_to_total(tiny):
    for mode in Mode:
        t, _ = run_benchmark(tiny, mode, critical=3, hot=6, heap_cells=300)
        assert sum(t.components()) == pytest.approx(t.total, rel=0.01)


def test_csv_rows(tiny, tmp_path):
    results = run_suite([tiny], list(Mode), critical=3, hot=6)
    out = emit_stats_csv(results, tmp_path / "stats.csv")
    with open(out, newline="") as f:
        rows = list(csv.reader(f))
    assert len(CSV_HEADER) == 17
    assert rows[0] == CSV_HEADER
    assert len(rows) == 4 and all(len(r) == 17 for r in rows)
    by_mode = {r[1]: dict(zip(CSV_HEADER, r)) for r in rows[1:]}
    assert set(by_mode) == {m.value for m in Mode}
    d = by_mode["DEFAULT_ONLY"]
    assert float(d["speedup"]) == 1.0 and float(d["improvement"]) == 0.0
    for r in by_mode.values():
        # speedup is written to 4 decimals, so recomputing can differ by 0.005
        assert float(r["improvement"]) == pytest.approx(
            (float(r["speedup"]) - 1) * 100, abs=0.0051)
        assert int(r["exits_gc"]) >= 0 and int(r["rebuilds"]) <= int(r["exits_elementary"])


def test_empty_results_are_rejected(tmp_path):
    with pytest.raises(ValueError):
        emit_stats_csv([], tmp_path / "x.csv")
