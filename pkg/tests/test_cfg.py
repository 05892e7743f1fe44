import pytest

from oracle import TreeInterpreter
from tracewam import Machine, MachineConfig, load_program
from tracewam.cfg import (ALLOCATING, CFGS, FAIL, NEXT, RAISE_GC, Kind, check_path,
                          check_structure, instruction_metadata)
from tracewam.reader import parse_goal, parse_program
from tracewam.terms import INT, LIST, REF, TERM_TAGS


def test_table_passes_structural_checks():
    check_structure()


def test_every_opcode_the_compiler_emits_has_a_cfg():
    prog = load_program("""
        p([X|Xs], f(Y), 3, []) :- q(X, Z), Y is Z + 1, Y > 0, !, p(Xs, f(Y), 3, []).
        p(_, _, _, _).
        q(a, 1). q(b, 2).
    """)
    prog.compile_query(parse_goal("p([a], W, 3, [])"))
    assert {i.op for i in prog.code} <= set(CFGS)


def test_allocating_opcodes_start_with_heap_check():
    assert {"put_list", "put_structure", "get_list", "get_structure", "add"} <= ALLOCATING
    for op in ALLOCATING:
        first = CFGS[op].blocks[0]
        assert first.kind is Kind.GC_CHECK
        assert first.succ["full"] == RAISE_GC


def test_type_tests_cover_every_tag():
    for cfg in CFGS.values():
        for b in cfg.blocks:
            if b.kind is Kind.TYPE_TEST:
                assert set(TERM_TAGS) <= set(b.succ), b


def test_get_list_paths():
    cfg = instruction_metadata("get_list")
    check_path(cfg, [(0, "ok"), (1, LIST), (4, "ok")])
    check_path(cfg, [(0, "ok"), (1, REF), (2, "loop"), (2, "unbound"), (3, "ok")])
    check_path(cfg, [(0, "ok"), (1, REF), (2, "bound"), (5, LIST), (4, "ok")])
    check_path(cfg, [(0, "ok"), (1, INT)])
    with pytest.raises(AssertionError):
        check_path(cfg, [(0, "ok"), (2, "bound")])
    with pytest.raises(AssertionError):
        check_path(cfg, [(0, "ok"), (1, REF)])          # stops inside


def test_arithmetic_type_error_edge():
    cfg = instruction_metadata("add")
    names = [b.name for b in cfg.blocks]
    assert names[-1] == "error"
    # an unbound operand leads to the error block, never silently to eval
    assert cfg.blocks[2].succ["unbound"] == len(cfg.blocks) - 1
    assert cfg.blocks[1].succ[INT] == 4


def test_choice_and_multiway_kinds():
    assert CFGS["try_me_else"].blocks[0].kind is Kind.CHOICE
    sw = CFGS["switch_on_term"].blocks[-1]
    assert sw.kind is Kind.MULTIWAY
    assert sw.succ["none"] == FAIL and sw.succ[LIST] == NEXT


def test_default_emulator_walks_only_legal_paths():
    # validate_paths replays every observed walk through check_path
    src = """
        len([], 0).
        len([_|T], N) :- len(T, M), N is M + 1.
    """
    goal = "len([a,b,c|T], N)"
    m = Machine(load_program(src), MachineConfig(jit=False, validate_paths=True))
    got = m.run_query(goal, max_solutions=2).solutions
    assert got == TreeInterpreter(parse_program(src).clauses).query(parse_goal(goal), 2)
    assert got[0] == "T = [], N = 3"
