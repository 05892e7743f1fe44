from tracewam import Machine, MachineConfig, load_program
from tracewam.compiler import PredState
from tracewam.monitor import validate_trace

# p/2 is entered twice per iteration, so it turns critical before loop/1 does
# and the monitor is free when it does.
SRC = """
loop(0).
loop(N) :- N > 0, p(N, X), p(X, Y), Y = N, M is N - 1, loop(M).
p(N, N).
"""


def watch(cfg, goal="loop(40)"):
    """Run ``goal`` and log p/2's state after every one of its head entries."""
    m = Machine(load_program(SRC), MachineConfig(**cfg))
    p = m.program.preds[("p", 2)]
    log = []
    tick = m.tick_counter

    def logged(q, is_call=True):
        tick(q, is_call)
        if q is p:
            rec = m.monitor.active and m.monitor.pred is p
            log.append((q.call_counter, q.state, rec, len(q.trace.nodes) if q.trace else 0))

    m.tick_counter = logged
    assert m.run_query(goal).solutions == ["true"]
    return m, p, log


def test_states_follow_the_thresholds():
    m, p, log = watch(dict(critical=3, hot=6))
    states = [s for _, s, _, _ in log]
    assert states[:2] == [PredState.COLD] * 2
    assert states[2:5] == [PredState.CRITICAL] * 3
    assert set(states[5:]) == {PredState.HOT}
    assert [rec for _, _, rec, _ in log[:6]] == [False, False, True, True, True, False]
    assert p.generation == 1 and p.record_start == 3


def test_marking_stops_once_hot():
    m, p, log = watch(dict(critical=3, hot=6))
    sizes = {n for _, _, _, n in log[5:]}
    assert len(sizes) == 1 and sizes.pop() > 0
    assert p.semulator is not None and p.semulator.graph is not p.trace
    assert m.stats.head_entries_spec > 0


def test_recorded_graph_is_well_formed():
    m, p, _ = watch(dict(critical=3, hot=6))
    assert validate_trace(p.trace, m.code) == []
    assert p.trace.has_instr(p.entry)
    for s in m.installed:
        assert validate_trace(s.graph, m.code) == []


def test_oversized_trace_is_abandoned_and_blacklisted():
    m, p, log = watch(dict(critical=3, hot=6, max_trace_nodes=2))
    assert m.stats.traces_abandoned >= 1
    assert m.stats.traces_installed == 0
    # abandoned at entry 3, cold for the next 10 x hot entries, recorded
    # (and abandoned) again at entry 66
    assert p.record_start == 66 and p.base == 66 + 10 * 6
    states = {n: s for n, s, _, _ in log}
    assert all(states[n] is PredState.COLD for n in range(4, 66))
    assert states[66] is PredState.CRITICAL


def test_no_jit_never_leaves_cold():
    m, p, log = watch(dict(critical=3, hot=6, jit=False))
    assert {s for _, s, _, _ in log} == {PredState.COLD}
    assert m.stats.marks == 0 and m.installed == []
