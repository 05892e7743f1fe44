"""Random programs: every machine configuration must agree with the
tree interpreter, solution for solution."""

import pytest

from conftest import run_with_big_stack
from oracle import EvalError as OracleEvalError
from oracle import TreeInterpreter
from randprog import Gen
from tracewam import Machine, MachineConfig, PrologRuntimeError
from tracewam.compiler import link_program
from tracewam.reader import parse_goal, parse_program

CONFIGS = {
    "default": dict(jit=False),
    "eager-jit": dict(critical=1, hot=2),
    "no-mutability": dict(critical=2, hot=5, mutability=False),
    "tiny-heap": dict(critical=1, hot=1, heap_cells=80),
}
LIMIT = 30


def expected(ti, goals):
    try:
        return ti.query(goals, limit=LIMIT)
    except OracleEvalError:
        return "error"


def actual(parsed, goals, cfg, repeats):
    m = Machine(link_program(parsed), MachineConfig(validate_paths=True, **cfg))
    out = []
    for _ in range(repeats):
        try:
            out.append(m.run_query(goals, max_solutions=LIMIT).solutions)
        except PrologRuntimeError:
            out.append("error")
    return out, m.stats


def differential(seeds, configs, repeats=3):
    checked = 0
    mismatches = []
    for seed in seeds:
        g = Gen(seed)
        parsed = parse_program(g.program())
        ti = TreeInterpreter(parsed.clauses)
        for _ in range(3):
            q = g.query()
            goals = parse_goal(q)
            try:
                want = expected(ti, goals)
            except RecursionError:
                continue
            checked += 1
            for name, cfg in configs.items():
                got, _ = actual(parsed, goals, cfg, repeats)
                if any(r != want for r in got):
                    mismatches.append((seed, name, q, want, got[0]))
    return checked, mismatches


@pytest.mark.parametrize("name", list(CONFIGS))
def test_random_programs_agree_with_oracle(name):
    checked, bad = run_with_big_stack(differential, range(150), {name: CONFIGS[name]})
    assert checked > 300
    assert bad == []


def test_repeated_queries_reach_specialized_code():
    parsed = parse_program("""
        app([], L, L).
        app([H|T], L, [H|R]) :- app(T, L, R).
    """)
    goals = parse_goal("app(X, Y, [1,2,3,4])")
    want = TreeInterpreter(parsed.clauses).query(goals)
    got, stats = actual(parsed, goals, CONFIGS["eager-jit"], repeats=5)
    assert got == [want] * 5
    assert stats.traces_installed >= 1 and stats.head_entries_spec > 0
