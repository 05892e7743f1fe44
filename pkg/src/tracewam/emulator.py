"""The default emulator: block-by-block interpretation of the bytecode.

``Machine`` owns all mutable execution state (heap, registers, environment
and choice-point stacks, trail) plus the per-run counters and the component
clock.  It also decides, at every head entry, whether a predicate's trace
should start or stop being recorded and whether control moves into that
predicate's specialized emulator.
"""

from __future__ import annotations

import time
from collections import Counter
from dataclasses import dataclass, field

from . import monitor as _monitor
from . import semulator as _semulator
from .cfg import CFGS, FAIL, NEXT, EvalError, check_path
from .compiler import PredState, Program
from .reader import parse_goal
from .terms import LIST, REF, STRUCT, format_solution, read_back

COMPONENTS = ("default_emulator", "overflow", "garbage_collector",
              "monitor_and_trace_builder", "trace_compiler", "s_emulator")


class MachineError(Exception):
    pass


class ResourceExhausted(MachineError):
    pass


class PrologRuntimeError(MachineError):
    pass


class Clock:
    """Exclusive wall-clock time per execution component.

    Exactly one component is current at any moment; ``push``/``pop`` switch
    components, so the per-component totals partition the elapsed time.
    """

    def __init__(self):
        self.totals = dict.fromkeys(COMPONENTS, 0.0)
        self.stack = []
        self.cur = "default_emulator"
        self.t0 = self.begin = time.perf_counter()
        self.elapsed = 0.0

    def push(self, comp):
        now = time.perf_counter()
        self.totals[self.cur] += now - self.t0
        self.stack.append(self.cur)
        self.cur = comp
        self.t0 = now

    def pop(self):
        now = time.perf_counter()
        self.totals[self.cur] += now - self.t0
        self.cur = self.stack.pop()
        self.t0 = now

    def stop(self):
        now = time.perf_counter()
        self.totals[self.cur] += now - self.t0
        self.t0 = now
        self.elapsed = now - self.begin
        return self.elapsed


@dataclass
class MachineConfig:
    critical: int = 500
    hot: int = 1000
    jit: bool = True
    mutability: bool = True
    heap_cells: int = 1 << 16
    max_heap_cells: int = 1 << 24
    max_rebuilds: int = 8
    max_trace_nodes: int = 4096
    max_versions: int = 4
    validate_paths: bool = False
    trace_dump: object = None      # callable(line) receiving recorded marks
    disasm_dump: object = None     # callable(text) receiving installed code

    def __post_init__(self):
        if not 0 < self.critical <= self.hot:
            raise ValueError("thresholds must satisfy 0 < critical <= hot")


@dataclass
class Stats:
    dispatches: int = 0
    tt_default: int = 0
    tt_spec: int = 0
    guard_evals: int = 0
    side_exits: Counter = field(default_factory=Counter)
    rebuilds: int = 0
    reclamations: int = 0
    reclamations_in_semulator: int = 0
    head_entries_default: int = 0
    head_entries_spec: int = 0
    marks: int = 0
    solutions: int = 0
    backtracks: int = 0
    spec_ops: int = 0
    traces_installed: int = 0
    traces_abandoned: int = 0
    demotions: int = 0

    @property
    def type_test_evals(self):
        return self.tt_default + self.tt_spec

    @property
    def head_entries(self):
        return self.head_entries_default + self.head_entries_spec


@dataclass
class QueryResult:
    solutions: list
    exhausted: bool       # False when stopped by the solution limit


class Machine:
    NUM_X = 256

    def __init__(self, program: Program, config: MachineConfig | None = None):
        self.program = program
        self.config = config or MachineConfig()
        self.code = program.code
        self._attach_cfgs()
        self.cap = 0
        self.static_top = 0
        self._load_constants()
        self.nil = program.nil
        self.stats = Stats()
        self.installed = []     # every specialized emulator built, in order
        self.gc_resumes = []    # collections raised inside specialized code
        self.clock = Clock()
        self.monitor = _monitor.Monitor(self)
        self._reset_registers()
        self.H = self.static_top

    def _load_constants(self):
        """(Re)build an empty heap whose bottom is the constant area.

        Queries may intern new constants, so this runs before every query.
        """
        consts = self.program.consts
        cap = max(self.cap, self.config.heap_cells, 2 * len(consts) + 64)
        self.tags = [REF] * cap
        self.vals = [0] * cap
        for a, (t, v) in enumerate(consts):
            self.tags[a] = t
            self.vals[a] = v
        self.cap = cap
        self.static_top = len(consts)
        self.H = self.static_top

    def _attach_cfgs(self):
        for ins in self.code:
            if ins.cfg is None:
                try:
                    ins.cfg = CFGS[ins.op]
                except KeyError:
                    raise MachineError(f"unknown opcode {ins.op!r}") from None

    def _reset_registers(self):
        self.X = [0] * self.NUM_X
        self.E = None
        self.B = []
        self.HB = 0
        self.B0 = 0
        self.CP = -1
        self.CPv = None
        self.P = -1
        self.S = 0
        self.mode = "read"
        self.d = 0
        self.trail = []
        self.entering = None
        self.entry_is_call = False
        self.halted = False
        self.exhausted = False

    # -- queries -----------------------------------------------------------

    def run_query(self, goals, max_solutions=None) -> QueryResult:
        if isinstance(goals, str):
            goals = parse_goal(goals)
        entry = self.program.compile_query(goals)
        self._attach_cfgs()
        self._reset_registers()
        self._load_constants()
        self.P = entry
        self.solutions = []
        self.max_solutions = max_solutions
        try:
            self._run()
        except EvalError as e:
            raise PrologRuntimeError(str(e)) from None
        except RecursionError:
            raise ResourceExhausted("term too deep") from None
        except MemoryError:
            raise ResourceExhausted("out of memory") from None
        finally:
            while self.clock.stack:
                self.clock.pop()
        return QueryResult(self.solutions, self.exhausted)

    def record_answer(self, names, regs):
        shared = {}
        terms = [read_back(self.tags, self.vals, self.program.symbols,
                           self.X[r] if r >= 0 else self.E.y[~r], shared) for r in regs]
        self.solutions.append(format_solution(names, terms))
        self.stats.solutions += 1
        if self.max_solutions is not None and len(self.solutions) >= self.max_solutions:
            self.halted = True

    # -- main loop -----------------------------------------------------------

    def _run(self):
        code = self.code
        stats = self.stats
        mon = self.monitor
        validate = self.config.validate_paths
        while not (self.halted or self.exhausted):
            addr = self.P
            ins = code[addr]
            self.P = addr + 1
            stats.dispatches += 1
            if mon.active or validate:
                b = self._dispatch_slow(addr, ins)
            else:
                blocks = ins.cfg.blocks
                b = 0
                while b >= 0:
                    blk = blocks[b]
                    lbl = blk.body(self, ins)
                    if blk.tt:
                        stats.tt_default += 1
                    b = blk.succ[lbl]
            if b == NEXT:
                if self.entering is not None:
                    self._head_entry()
            elif b == FAIL:
                self.backtrack()
            else:
                self.P = addr
                self.reclaim(ins)

    def _dispatch_slow(self, addr, ins):
        mon = self.monitor
        clock = self.clock
        stats = self.stats
        blocks = ins.cfg.blocks
        steps = [] if self.config.validate_paths else None
        b = 0
        while b >= 0:
            blk = blocks[b]
            if mon.active:
                clock.push("monitor_and_trace_builder")
                mon.mark_block(addr, b)
                clock.pop()
            lbl = blk.body(self, ins)
            if blk.tt:
                stats.tt_default += 1
            if steps is not None:
                steps.append((b, lbl))
            if mon.active:
                clock.push("monitor_and_trace_builder")
                mon.mark_edge(lbl)
                clock.pop()
            b = blk.succ[lbl]
        if steps is not None:
            check_path(ins.cfg, steps)
        return b

    def dispatch_instruction(self):
        """Execute exactly one instruction in the default emulator (for tests)."""
        addr = self.P
        ins = self.code[addr]
        self.P = addr + 1
        self.stats.dispatches += 1
        b = self._dispatch_slow(addr, ins)
        if b == NEXT:
            if self.entering is not None:
                self._head_entry()
        elif b == FAIL:
            self.backtrack()
        else:
            self.P = addr
            self.reclaim(ins)
        return b

    # -- head entries and emulator selection -------------------------------

    def _head_entry(self):
        # a specialized emulator may hand back control with another head
        # entry still pending (a call that leaves its trace)
        while self.entering is not None:
            p = self.entering
            self.entering = None
            self.stats.head_entries_default += 1
            self.tick_counter(p, self.entry_is_call)
            if not self.config.jit or self.monitor.active:
                return
            s = _semulator.select_emulator(p, self.P)
            if s is None:
                return
            self.clock.push("s_emulator")
            try:
                _semulator.execute_semulator(self, s, self.P)
            finally:
                self.clock.pop()

    def tick_counter(self, p, is_call=True):
        """Count a head entry of ``p`` and drive its recording lifecycle."""
        p.call_counter += 1
        cfg = self.config
        if not cfg.jit or p.disabled:
            return
        mon = self.monitor
        if p.state is PredState.COLD:
            if p.call_counter - p.base >= cfg.critical:
                p.state = PredState.CRITICAL
                if is_call and not mon.active:
                    self._start_recording(p)
        elif p.state is PredState.CRITICAL:
            if mon.active:
                if mon.pred is p and (p.rebuild_pending or
                                      p.call_counter - p.record_start >= cfg.hot - cfg.critical):
                    self._finish_recording(p)
            elif is_call:
                self._start_recording(p)

    def _start_recording(self, p):
        self.clock.push("monitor_and_trace_builder")
        p.record_start = p.call_counter
        self.monitor.enable_markup(p)
        self.clock.pop()

    def end_recording(self, p):
        """Close ``p``'s recording session now, whatever the counters say."""
        self._finish_recording(p)

    def _finish_recording(self, p):
        self.clock.push("monitor_and_trace_builder")
        try:
            graph = self.monitor.finalize_trace()
        finally:
            self.clock.pop()
        if graph is None:
            self.demote(p)
            return
        self.clock.push("trace_compiler")
        try:
            p.generation += 1
            gen = p.generation
            s = _semulator.compile_trace(graph, self.program, gen, self.config.max_versions)
        finally:
            self.clock.pop()
        _semulator.install(p, s)
        self.installed.append(s)
        self.stats.traces_installed += 1
        if p.rebuild_pending:
            p.rebuilds += 1
            self.stats.rebuilds += 1
            p.rebuild_pending = False
        if self.config.disasm_dump is not None:
            self.config.disasm_dump(f"% {p.name}/{p.arity} generation {s.generation}\n"
                                    + s.disassemble())

    def demote(self, p, blacklist=False):
        """Drop ``p``'s trace; optionally keep it cold for 10 x hot entries."""
        p.state = PredState.COLD
        p.semulator = None
        p.trace = None
        p.rebuild_pending = False
        p.base = p.call_counter + (10 * self.config.hot if blacklist else 0)
        self.stats.demotions += 1

    def abandon_recording(self, p):
        self.stats.traces_abandoned += 1
        self.demote(p, blacklist=True)

    # -- backtracking ------------------------------------------------------

    def backtrack(self) -> bool:
        B = self.B
        if not B:
            self.exhausted = True
            return False
        self.stats.backtracks += 1
        cp = B[-1]
        trail = self.trail
        vals = self.vals
        for i in range(len(trail) - 1, cp.tr - 1, -1):
            a = trail[i]
            vals[a] = a
        del trail[cp.tr:]
        self.H = cp.H
        self.HB = cp.H
        args = cp.args
        self.X[1:len(args) + 1] = args
        self.E = cp.E
        self.CP = cp.CP
        self.CPv = cp.CPv
        self.B0 = cp.B0
        self.P = cp.alt
        return True

    # -- heap reclamation --------------------------------------------------

    def reclaim(self, ins=None, in_semulator=False):
        """Order-preserving copying collection; doubles capacity under pressure."""
        clock = self.clock
        clock.push("garbage_collector")
        try:
            self._collect(_reserve_for(ins))
        finally:
            clock.pop()
        self.stats.reclamations += 1
        if in_semulator:
            self.stats.reclamations_in_semulator += 1

    def _frames(self):
        seen = set()
        out = []
        starts = [self.E] + [cp.E for cp in self.B]
        for e in starts:
            while e is not None and id(e) not in seen:
                seen.add(id(e))
                out.append(e)
                e = e.prev
        return out

    def _collect(self, need):
        tags, vals = self.tags, self.vals
        H = self.H
        st = self.static_top
        frames = self._frames()
        marked = bytearray(H)
        stack = [a for a in self.X if st <= a < H]
        for e in frames:
            stack += [a for a in e.y if st <= a < H]
        for cp in self.B:
            stack += [a for a in cp.args if st <= a < H]
        stack += [a for a in self.trail if st <= a < H]
        while stack:
            a = stack.pop()
            if marked[a]:
                continue
            marked[a] = 1
            t = tags[a]
            if t == REF:
                v = vals[a]
                if v != a and v >= st and not marked[v]:
                    stack.append(v)
            elif t == LIST:
                p = vals[a]
                stack.append(p)
                stack.append(p + 1)
            elif t == STRUCT:
                f = vals[a]
                marked[f] = 1
                stack.extend(range(f + 1, f + 1 + (vals[f] >> 32)))

        fwd = list(range(H))
        below = [0] * (H + 1)
        n = st
        for a in range(st, H):
            below[a] = n
            if marked[a]:
                fwd[a] = n
                n += 1
        below[H] = n
        for a in range(st):
            below[a] = a

        cap = self.cap
        if n + need > cap // 2:
            self.clock.push("overflow")
            try:
                while n + need > cap // 2:
                    cap *= 2
                if cap > self.config.max_heap_cells:
                    raise ResourceExhausted(f"heap exhausted ({n} live cells)")
                ntags = [REF] * cap
                nvals = [0] * cap
            finally:
                self.clock.pop()
        else:
            ntags = [REF] * cap
            nvals = [0] * cap
        ntags[:st] = tags[:st]
        nvals[:st] = vals[:st]
        for a in range(st, H):
            if marked[a]:
                na = fwd[a]
                t = tags[a]
                v = vals[a]
                if (t == REF or t == LIST or t == STRUCT) and v >= st:
                    v = fwd[v]
                ntags[na] = t
                nvals[na] = v

        def mv(a):
            if a < st:
                return a
            return fwd[a] if a < H and marked[a] else 0

        self.X = [mv(a) for a in self.X]
        for e in frames:
            e.y[:] = [mv(a) for a in e.y]
        for cp in self.B:
            cp.args = [mv(a) for a in cp.args]
            cp.H = below[cp.H]
        self.trail = [fwd[a] for a in self.trail]
        self.d = mv(self.d)
        self.S = mv(self.S) if self.S < H else n
        self.HB = self.B[-1].H if self.B else 0
        self.tags, self.vals = ntags, nvals
        self.cap = cap
        self.H = n


def _reserve_for(ins):
    if ins is None:
        return 0
    op = ins.op
    if op == "put_structure" or op == "get_structure":
        return (ins.args[0] >> 32) + 2
    if op == "get_list" or op == "put_list":
        return 3
    return 1
