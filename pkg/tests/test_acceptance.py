"""End-to-end acceptance checks.

Each test records a one-line verdict in ``conftest.CRITERIA``; the verdicts
are printed together at the end of the pytest run (or by running this file
directly with ``python3 tests/test_acceptance.py``).
"""

import csv
import time

import pytest

import conftest
from conftest import run_with_big_stack
from test_differential import CONFIGS, differential
from tracewam import Machine, MachineConfig, load_program
from tracewam.bench import (CSV_HEADER, SUITE, SUITE_BY_NAME, Mode, compute_improvement,
                            config_for, emit_stats_csv, run_benchmark, run_suite)
from tracewam.compiler import PredState
from tracewam.monitor import Monitor, validate_trace
from tracewam.semulator import ELEMENTARY_BLOCK, GC_EXCEPTION, validate_semulator


def record(n, ok, detail):
    conftest.CRITERIA[n] = (bool(ok), detail)
    assert ok, detail


@pytest.fixture(scope="module")
def suite_results():
    start = time.perf_counter()
    results = run_suite(SUITE, list(Mode), repetitions=1)
    return results, time.perf_counter() - start


def test_1_suite_answers_identical_across_modes(suite_results):
    results, elapsed = suite_results
    by_name = {}
    for r in results:
        by_name.setdefault(r.name, {})[r.mode] = r.stats.solutions
    differing = [n for n, sols in by_name.items()
                 if sols[Mode.SPEC_WITH_MUTABILITY] != sols[Mode.DEFAULT_ONLY]
                 or sols[Mode.SPEC_NO_MUTABILITY] != sols[Mode.DEFAULT_ONLY]]
    ok = len(by_name) == len(SUITE) and not differing and elapsed < 60
    record(1, ok, f"{len(by_name)} programs x 3 modes identical"
                  f"{' except ' + ','.join(differing) if differing else ''}, {elapsed:.1f}s")


def test_2_oracle_equivalence_on_random_programs():
    configs = {"default": CONFIGS["default"], "eager-jit": CONFIGS["eager-jit"]}
    checked, bad = run_with_big_stack(differential, range(1000, 1400), configs, 2)
    record(2, checked >= 1000 and not bad,
           f"{checked} random queries, {len(bad)} mismatches ({', '.join(configs)})")


LOOP = """
loop(0).
loop(N) :- N > 0, p(N, X), p(X, Y), Y = N, M is N - 1, loop(M).
p(N, N).
"""


def test_3_lifecycle_with_critical_3_hot_6():
    m = Machine(load_program(LOOP), MachineConfig(critical=3, hot=6))
    p = m.program.preds[("p", 2)]
    marks_for_p = [0]
    mark = Monitor.mark_block

    def counting(mon, addr, b):
        if mon.pred is p:
            marks_for_p[0] += 1
        mark(mon, addr, b)

    states, marks = [], []
    tick = m.tick_counter

    def logged(q, is_call=True):
        tick(q, is_call)
        if q is p:
            states.append(q.state)
            marks.append(marks_for_p[0])

    m.tick_counter = logged
    Monitor.mark_block = counting
    try:
        answers = m.run_query("loop(20)").solutions
    finally:
        Monitor.mark_block = mark
    mine = [s for s in m.installed if s.pred is p]
    expect = [PredState.COLD] * 2 + [PredState.CRITICAL] * 3 + [PredState.HOT] * 35
    ok = (answers == ["true"] and states == expect and len(mine) == 1
          and mine[0].generation == 1 and marks[5] > 0 and len(set(marks[5:])) == 1
          and validate_trace(mine[0].graph, m.code) == [])
    record(3, ok, f"states {'/'.join(s.value for s in dict.fromkeys(states))} at entries "
                  f"1,3,6; {len(mine)} S.emulator gen {mine[0].generation if mine else '-'}; "
                  f"marks frozen at {marks[5]}")


FLIP = """
between(L, H, L) :- L =< H.
between(L, H, X) :- L < H, L1 is L + 1, between(L1, H, X).
kind(1).
kind(a).
run(N, V) :- between(1, N, _), kind(V), fail.
run(_, _).
"""


def test_4_type_flip_converges_after_one_rebuild():
    m = Machine(load_program(FLIP), MachineConfig())
    m.run_query("run(2000, 1)")
    m.run_query("run(2000, a)")
    exits = m.stats.side_exits[ELEMENTARY_BLOCK]
    rebuilt = [p for p in m.program.preds.values() if p.rebuilds]
    before = (m.stats.side_exits[ELEMENTARY_BLOCK], m.stats.side_exits[GC_EXCEPTION])
    m.run_query("run(1000, a)")
    after = (m.stats.side_exits[ELEMENTARY_BLOCK], m.stats.side_exits[GC_EXCEPTION])
    later = (after[0] - before[0]) + (after[1] - before[1])
    ok = (exits == 1 and m.stats.rebuilds == 1 and len(rebuilt) == 1
          and rebuilt[0].generation == 2 and later == 0)
    record(4, ok, f"{exits} elementary exit, {m.stats.rebuilds} rebuild "
                  f"({rebuilt[0].name if rebuilt else '-'} gen "
                  f"{rebuilt[0].generation if rebuilt else '-'}), {later} exits in next 1000 calls")


def test_5_gc_inside_specialized_code_resumes_in_place():
    spec = SUITE_BY_NAME["nreverse"]
    small = MachineConfig().heap_cells // 10
    m = Machine(load_program(spec.source_text()), config_for(Mode.SPEC_WITH_MUTABILITY,
                                                             heap_cells=small))
    got = m.run_query(spec.goal_text()).solutions
    _, big = run_benchmark(spec, Mode.SPEC_WITH_MUTABILITY, repetitions=1)
    resumes = m.gc_resumes
    ok = (m.stats.reclamations_in_semulator >= 1
          and len(resumes) == m.stats.reclamations_in_semulator
          and all(r.resume_op == r.semulator.entry_map[r.baddr]
                  and r.generation_before == r.generation_after for r in resumes)
          and got == big.solutions)
    record(5, ok, f"heap {small} cells: {len(resumes)} collections from S.emulator, "
                  f"all resumed at entry_map[baddr], answers identical")


def test_6_fewer_type_tests_per_head_entry():
    ratios = {}
    for name in ("nreverse", "quicksort", "tak"):
        spec = SUITE_BY_NAME[name]
        _, d = run_benchmark(spec, Mode.DEFAULT_ONLY, repetitions=1)
        _, s = run_benchmark(spec, Mode.SPEC_WITH_MUTABILITY, repetitions=1)
        default = d.tt_default / d.head_entries_default
        spec_rate = (s.tt_spec + s.guard_evals) / max(1, s.head_entries_spec)
        ratios[name] = spec_rate / default if s.head_entries_spec else float("inf")
    ok = all(r <= 0.5 for r in ratios.values())
    record(6, ok, "spec/default tests per head entry: "
                  + ", ".join(f"{n} {r:.3f}" for n, r in ratios.items()))


def test_7_improvement_formula():
    a, b = compute_improvement(1.2357), compute_improvement(1.1099)
    ok = round(a, 2) == 23.57 and round(b, 2) == 10.99
    record(7, ok, f"improvement(1.2357) = {a:.2f}%, improvement(1.1099) = {b:.2f}%")


def test_8_breakdown_conservation(suite_results, tmp_path):
    results, _ = suite_results
    path = emit_stats_csv(results, tmp_path / "suite.csv")
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
        f.seek(0)
        header = next(csv.reader(f))
    comps = CSV_HEADER[3:9]
    worst = max(abs(sum(float(r[c]) for c in comps) - float(r["total"])) / float(r["total"])
                for r in rows)
    default_clean = all(float(r[c]) == 0 for r in rows if r["mode"] == "DEFAULT_ONLY"
                        for c in ("monitor_and_trace_builder", "trace_compiler", "s_emulator"))
    ok = header == CSV_HEADER and len(header) == 17 and worst <= 0.01 and default_clean
    record(8, ok, f"{len(rows)} rows x {len(header)} columns, worst component-sum error "
                  f"{worst * 100:.3f}%, DEFAULT rows have no trace time")


def test_9_every_installed_semulator_validates():
    checked, problems = 0, []
    for spec in SUITE:
        for mode in (Mode.SPEC_WITH_MUTABILITY, Mode.SPEC_NO_MUTABILITY):
            m = Machine(load_program(spec.source_text()), config_for(mode))
            m.run_query(spec.goal_text())
            for s in m.installed:
                checked += 1
                problems += [f"{spec.name}/{s.pred.name}: {p}"
                             for p in validate_semulator(s) + validate_trace(s.graph, m.code)]
    record(9, checked > 0 and not problems,
           f"{checked} S.emulators validated, {len(problems)} problems"
           + (f" (first: {problems[0]})" if problems else ""))


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q"]))
