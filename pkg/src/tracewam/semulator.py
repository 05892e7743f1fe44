"""Trace compiler and specialized emulator.

A finished ``TraceGraph`` is turned into a flat list of micro-operations.
Each micro-op is one recorded block compiled for a particular set of
*facts*: register tags already established on the way to it.  Facts come
from guards and from instructions whose result tag is static (``put_list``
leaves a LIST in its register, arithmetic leaves an INT, and so on).  A type
test whose outcome the facts decide disappears; a test that only ever went
one way becomes a guard whose failure leaves the trace; a test that went
several ways stays as a branch.  Each recorded block gets at most
``max_versions`` fact-specialized copies, and every recorded instruction
start also gets a fact-free copy that serves as a resume point.

Micro-op tables map block labels to other micro-ops or to one of the
negative control codes below.  Side exits are micro-ops of their own.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .cfg import CFGS, FAIL, NEXT, RAISE_GC, Kind, switch_target
from .compiler import ARITH_OPCODES, COMPARE_OPCODES, PredState
from .terms import ATOM, INT, LIST, NIL, REF, STRUCT, TAG_NAMES

# micro-op kinds
ACTION, GUARD, BRANCH, SWITCH, SIDE_EXIT, JUMP, LOOP_BACK = (
    "ACTION", "GUARD", "BRANCH", "SWITCH", "SIDE_EXIT", "JUMP", "LOOP_BACK")

# control codes (negative table targets)
T_FAIL = -1       # backtrack
T_PROCEED = -2    # return through CPv, else by address
T_HANDOFF = -3    # leave the trace; the default emulator continues at m.P

# side-exit reasons
ELEMENTARY_BLOCK = "ELEMENTARY_BLOCK"
GC_EXCEPTION = "GC_EXCEPTION"
COMPLETED = "COMPLETED"

# post-actions attached to control instructions
POST_CALL, POST_EXECUTE, POST_PUSH, POST_RETRY, POST_TRUST = range(1, 6)

# counting classes
C_NONE, C_TT, C_GUARD = 0, 1, 2


class MicroOp:
    __slots__ = ("idx", "kind", "addr", "block", "ins", "body", "table", "default",
                 "count", "post", "aux", "exit_kind", "baddr", "reason", "facts",
                 "detail", "next_p", "chain", "own_table")

    def __init__(self, idx, kind, addr, block, ins, facts):
        self.idx = idx
        self.kind = kind
        self.addr = addr
        self.block = block
        self.ins = ins
        self.body = None
        self.table = {}
        self.default = None
        self.count = C_NONE
        self.post = 0
        self.aux = None      # call: return idx; push/retry: alternative idx
        self.exit_kind = None
        self.baddr = None
        self.reason = ""
        self.facts = facts
        self.detail = ""
        self.next_p = addr + 1 if addr is not None else -1
        self.chain = ()          # indices of micro-ops fused into this one
        self.own_table = None    # table before fusion


@dataclass
class GcResume:
    """One collection started by a specialized emulator and where it resumed."""
    semulator: object
    baddr: int           # instruction that found the heap full
    resume_op: int       # micro-op execution continued at
    generation_before: int
    generation_after: int


class SEmulator:
    """Installed specialized code for one predicate (one generation)."""

    def __init__(self, pred, graph, generation):
        self.pred = pred
        self.graph = graph
        self.generation = generation
        self.ops: list[MicroOp] = []
        self.entry_map: dict[int, int] = {}

    def disassemble(self) -> str:
        lines = []
        for op in self.ops:
            lines.append(f"{op.idx:5d}  {op.kind:<9} {op.detail:<44} {_fmt_targets(op)}")
        return "\n".join(lines)


def _fmt_target(t):
    if isinstance(t, int) and t >= 0:
        return str(t)
    return {T_FAIL: "fail", T_PROCEED: "proceed", T_HANDOFF: "handoff", None: "-"}.get(t, str(t))


def _fmt_targets(op):
    if op.kind == SIDE_EXIT:
        return f"exit {op.exit_kind or COMPLETED} @{op.baddr} {op.reason}".rstrip()
    if op.kind == SWITCH:
        parts = [f"{TAG_NAMES[tag]}:{addr}->{_fmt_target(i)}" for (tag, addr), i in op.table.items()]
        return " ".join(parts) + f" else {_fmt_target(op.default)}"
    parts = [f"{_lbl(k)}->{_fmt_target(v)}" for k, v in op.table.items()]
    if op.default is not None:
        parts.append(f"else->{_fmt_target(op.default)}")
    return " ".join(parts)


def _lbl(k):
    return TAG_NAMES[k] if isinstance(k, int) else str(k)


# -- facts -----------------------------------------------------------------------

def _set(facts, r, tag):
    out = {(q, t) for (q, t) in facts if q != r}
    if tag is not None and tag != REF:
        out.add((r, tag))
    return frozenset(out)


def _get(facts, r):
    for q, t in facts:
        if q == r:
            return t
    return None


def _without_y(facts):
    return frozenset(f for f in facts if f[0] >= 0)


def _only_y(facts):
    return frozenset(f for f in facts if f[0] < 0)


def _args_only(facts, arity):
    return frozenset(f for f in facts if 1 <= f[0] <= arity)


def _alt_facts(facts, arity):
    return frozenset(f for f in facts if f[0] < 0 or 1 <= f[0] <= arity)


def transfer(ins, facts, program):
    """Facts after ``ins`` completes normally, given the facts before it."""
    op = ins.op
    a = ins.args
    if op == "get_variable":
        return _set(facts, a[0], _get(facts, a[1]))
    if op == "put_value":
        return _set(facts, a[1], _get(facts, a[0]))
    if op == "put_constant":
        return _set(facts, a[1], program.consts[a[0]][0])
    if op == "put_nil":
        return _set(facts, a[0], NIL)
    if op == "put_list":
        return _set(facts, a[0], LIST)
    if op == "put_structure":
        return _set(facts, a[1], STRUCT)
    if op == "put_variable":
        return _set(_set(facts, a[0], None), a[1], None)
    if op == "unify_variable":
        return _set(facts, a[0], None)
    if op in ("add", "sub", "mul", "div", "mod"):
        return _set(facts, a[0], INT)
    if op in ("allocate", "deallocate"):
        return _without_y(facts)
    return facts


# -- register liveness -------------------------------------------------------------

_ARG_READS = {"get_variable": (1,), "get_value": (0, 1), "get_constant": (1,),
              "get_nil": (0,), "get_list": (0,), "get_structure": (1,),
              "unify_value": (0,), "put_value": (0,), "unify": (0, 1), "is": (0, 1)}
_ARG_WRITES = {"get_variable": (0,), "unify_variable": (0,), "put_variable": (0, 1),
               "put_value": (1,), "put_constant": (1,), "put_nil": (0,),
               "put_list": (0,), "put_structure": (1,)}
_ENTRY_CONTINUE = {"try_me_else", "retry_me_else", "trust_me"}
_ENTRY_JUMP = {"try", "retry", "trust", "switch_on_term"}


def live_registers(code, addr):
    """Registers whose current tag can still matter from ``addr`` on.

    Clause code is straight-line up to ``execute``/``proceed``; a ``call``
    reads its arguments and leaves every X register dead, while the Y
    registers survive until ``deallocate``.  Returns None when unsure.
    """
    live = set()
    written = set()
    x_dead = y_dead = False

    def read(r):
        if r in written or (x_dead if r >= 0 else y_dead):
            return
        live.add(r)

    for ins in code[addr:]:
        op, a = ins.op, ins.args
        if op in _ARG_READS or op in _ARG_WRITES:
            for k in _ARG_READS.get(op, ()):
                read(a[k])
            for k in _ARG_WRITES.get(op, ()):
                written.add(a[k])
        elif op in ARITH_OPCODES:
            read(a[1])
            read(a[2])
            written.add(a[0])
        elif op in COMPARE_OPCODES:
            read(a[0])
            read(a[1])
        elif op in ("call", "execute") or op in _ENTRY_JUMP or op in _ENTRY_CONTINUE:
            p = a[-1]
            for r in range(1, p.arity + 1):
                read(r)
            if op == "call":
                x_dead = True
            elif op not in _ENTRY_CONTINUE:
                break
        elif op == "deallocate":
            y_dead = True
        elif op == "answer":
            for r in a[1]:
                read(r)
            break
        elif op in ("proceed", "fail"):
            break
        elif op in ("allocate", "cut", "unify_constant", "unify_nil"):
            pass
        else:
            return None
        if x_dead and y_dead:
            break
    return frozenset(live)


# -- compilation -------------------------------------------------------------------

class TraceCompiler:
    def __init__(self, graph, program, generation, max_versions=4, fuse=True):
        self.g = graph
        self.fuse = fuse
        self.prog = program
        self.code = program.code
        self.max_versions = max_versions
        self.s = SEmulator(graph.pred, graph, generation)
        self.memo: dict = {}
        self.vfacts: dict = {}       # (key, variant) -> fact sets compiled
        self.work = deque()
        self.exit_memo: dict = {}
        self.back_memo: dict = {}
        self.live_memo: dict = {}
        self.cur = -1

    # ops and versions

    def new_op(self, kind, addr, block, facts):
        op = MicroOp(len(self.s.ops), kind, addr, block,
                     self.code[addr] if addr is not None else None, facts)
        self.s.ops.append(op)
        return op

    def exit_op(self, kind, baddr, reason):
        key = (kind, baddr, reason)
        i = self.exit_memo.get(key)
        if i is None:
            op = self.new_op(SIDE_EXIT, None, None, frozenset())
            op.exit_kind = kind
            op.baddr = baddr
            op.reason = reason
            op.detail = f"{kind or COMPLETED} @{baddr}"
            i = self.exit_memo[key] = op.idx
        return i

    def live(self, addr):
        live = self.live_memo.get(addr, False)
        if live is False:
            live = self.live_memo[addr] = live_registers(self.code, addr)
        return live

    def version(self, key, facts, variant=None):
        """Micro-op index for recorded block ``key`` under ``facts``."""
        live = self.live(key[0])
        if live is not None and facts:
            facts = frozenset(f for f in facts if f[0] in live)
        mk = (key, variant, facts)
        i = self.memo.get(mk)
        if i is not None:
            return i
        vk = (key, variant)
        seen = self.vfacts.setdefault(vk, [])
        if len(seen) >= self.max_versions and facts:
            # widen: keep only what every version so far agrees on
            common = facts.intersection(*seen)
            if common != facts or len(seen) >= 2 * self.max_versions:
                return self.version(key, common if common != facts else frozenset(),
                                    variant)
        if facts:
            seen.append(facts)
        op = self.new_op(ACTION, key[0], key[1], facts)
        self.memo[mk] = op.idx
        self.work.append((op, variant))
        return op.idx

    def compile(self):
        g = self.g
        # the path from the trace entry claims version slots first; the
        # fact-free resume points for every other instruction come after
        starts = [g.entry] + [k[0] for k in g.order if k[1] == 0 and k[0] != g.entry]
        for addr in starts:
            self.s.entry_map[addr] = self.version((addr, 0), frozenset())
            while self.work:
                op, variant = self.work.popleft()
                self.fill(op, variant)
        if self.fuse:
            fuse_chains(self.s)
        return self.s

    # successors

    def edge(self, addr, blk, label, facts):
        """Target for leaving ``blk`` by ``label``."""
        tgt = blk.succ[label]
        if tgt == FAIL:
            return T_FAIL
        if tgt == RAISE_GC:
            return self.exit_op(GC_EXCEPTION, addr, "heap full")
        if tgt == NEXT:
            return self.after(addr, facts)
        key = (addr, tgt)
        if key in self.g.nodes:
            return self.version(key, facts)
        return self.exit_op(ELEMENTARY_BLOCK, addr, f"unrecorded {blk.op}.{tgt}")

    def instr_target(self, addr, facts):
        """Version of the instruction starting at ``addr``; a transfer to an
        already compiled, earlier micro-op goes through a LOOP_BACK."""
        key = (addr, 0)
        known = (key, None, facts) in self.memo
        i = self.version(key, facts)
        if known and i <= self.cur:
            j = self.back_memo.get(i)
            if j is None:
                op = self.new_op(LOOP_BACK, None, None, frozenset())
                op.table = {None: i}
                op.detail = f"back to {i} ({self.code[addr].op}@{addr})"
                j = self.back_memo[i] = op.idx
            return j
        return i

    def after(self, addr, facts):
        """Continuation once the instruction at ``addr`` has completed."""
        ins = self.code[addr]
        facts = transfer(ins, facts, self.prog)
        op = ins.op
        if op in ("call", "execute"):
            p = ins.args[0]
            if (p.entry, 0) in self.g.nodes:
                # only the argument registers mean anything to the callee
                return self.instr_target(p.entry, _args_only(facts, p.arity))
            return T_HANDOFF
        if op == "proceed":
            return T_PROCEED
        if op in ("try", "retry", "trust"):
            L = ins.args[0]
            if (L, 0) in self.g.nodes:
                return self.instr_target(L, facts)
            return T_HANDOFF
        if op == "answer":
            return T_HANDOFF
        if (addr + 1, 0) in self.g.nodes:
            return self.instr_target(addr + 1, facts)
        return self.exit_op(ELEMENTARY_BLOCK, addr + 1, "unrecorded successor")

    # filling one micro-op

    def fill(self, op, variant):
        addr, b = op.addr, op.block
        self.cur = op.idx
        ins = op.ins
        blk = ins.cfg.blocks[b]
        facts = op.facts
        observed = self.g.labels((addr, b))
        op.detail = f"{ins.op}@{addr}.{b} {blk.name}"
        if facts:
            op.detail += " {" + ",".join(f"{_regname(r)}:{TAG_NAMES[t]}"
                                         for r, t in sorted(facts)) + "}"

        if ins.op == "switch_on_term" and b == 0:
            return self.fill_switch(op, ins, facts)

        if blk.kind is Kind.TYPE_TEST:
            r = blk.regfn(ins) if blk.regfn is not None else None
            known = _get(facts, r) if (r is not None and blk.raw) else None
            if known is not None:
                # decided statically: only the side effect of the test remains
                op.kind = ACTION
                op.body = _wrap_load(blk.load)
                op.table = {None: self.edge(addr, blk, known, facts)}
                op.detail += f" [{TAG_NAMES[known]} known]"
                op.reason = "known"
                return
            fact_reg = r if (r is not None and (blk.raw or r >= 0)) else None
            if blk.raw and self.fuse_deref_guard(op, ins, blk, r, observed, facts):
                return
            if (blk.raw and set(observed) == {REF}
                    and blk.succ[REF] >= 0
                    and blk.succ[REF] != b
                    and ins.cfg.blocks[blk.succ[REF]].kind is Kind.DEREF_LOOP):
                # the deref loop that follows doubles as the guard
                op.kind = ACTION
                op.body = _wrap_load(blk.load)
                dkey = (addr, blk.succ[REF])
                op.table = {None: self.version(dkey, facts, variant="guarded")}
                op.detail += " [var-check dropped]"
                op.reason = "deref-guarded"
                return
            op.body = blk.body
            table = {}
            for lbl, tgt in blk.succ.items():
                if tgt == FAIL:
                    table[lbl] = T_FAIL
                elif lbl in observed:
                    nf = _set(facts, fact_reg, lbl) if fact_reg is not None else facts
                    table[lbl] = self.edge(addr, blk, lbl, nf)
            op.table = table
            op.default = self.exit_op(ELEMENTARY_BLOCK, addr, f"type {blk.op}.{b}")
            if len(observed) <= 1:
                op.kind = GUARD
                op.count = C_GUARD
            else:
                op.kind = BRANCH
                op.count = C_TT
            return

        if blk.kind is Kind.DEREF_LOOP:
            r = blk.regfn(ins) if blk.regfn is not None else None
            op.body = _guarded_deref(blk.body) if variant == "guarded" else blk.body
            table = {}
            for lbl in ("loop", "unbound", "bound"):
                if lbl not in observed:
                    continue
                if lbl == "loop":
                    table[lbl] = op.idx
                elif lbl == "unbound":
                    nf = _set(facts, r, None) if (r is not None and r >= 0) else facts
                    table[lbl] = self.edge(addr, blk, lbl, nf)
                else:
                    table[lbl] = self.edge(addr, blk, lbl, facts)
            op.table = table
            op.default = self.exit_op(ELEMENTARY_BLOCK, addr, f"deref {blk.op}.{b}")
            op.kind = GUARD if (variant == "guarded" or len(table) < 3) else ACTION
            return

        if blk.kind is Kind.GC_CHECK:
            op.kind = GUARD
            op.body = blk.body
            op.table = {"ok": self.edge(addr, blk, "ok", facts)}
            op.default = self.exit_op(GC_EXCEPTION, addr, "heap full")
            return

        # PLAIN and CHOICE blocks
        op.kind = ACTION
        op.body = blk.body
        table = {}
        for lbl, tgt in blk.succ.items():
            if tgt == FAIL:
                table[lbl] = T_FAIL
            elif lbl in observed or tgt < 0:
                # terminal labels are always kept: the block may already
                # have had side effects that a re-execution would repeat
                table[lbl] = self.edge(addr, blk, lbl, facts)
        op.table = table
        if len(table) < len(blk.succ):
            op.kind = GUARD
            op.default = self.exit_op(ELEMENTARY_BLOCK, addr, f"path {blk.op}.{b}")
        self.attach_post(op, ins, facts)

    def fuse_deref_guard(self, op, ins, blk, r, observed, facts):
        """Raw test, deref loop and tag test as one guard on the dereferenced
        tag, when the trace saw a single tag behind the references."""
        addr, b = op.addr, op.block
        raw_lbls = set(observed)
        if REF not in raw_lbls or len(raw_lbls) > 2:
            return False
        blocks = ins.cfg.blocks
        dk = blk.succ[REF]
        if dk < 0 or dk == b or blocks[dk].kind is not Kind.DEREF_LOOP:
            return False
        dblk = blocks[dk]
        if not set(self.g.labels((addr, dk))) <= {"loop", "bound"}:
            return False
        tk = dblk.succ["bound"]
        if tk < 0 or blocks[tk].kind is not Kind.TYPE_TEST or blocks[tk].raw:
            return False
        tblk = blocks[tk]
        seen = set(self.g.labels((addr, tk)))
        if len(seen) != 1:
            return False
        (tag,) = seen
        direct = raw_lbls - {REF}
        if direct and (direct != {tag} or blk.succ[tag] != tblk.succ[tag]):
            return False
        if tblk.succ[tag] == FAIL:
            return False
        nf = _set(facts, r, tag) if (r is not None and r >= 0) else facts
        op.kind = GUARD
        op.count = C_GUARD
        op.body = _deref_guard(blk.body, dblk.body, tblk.body)
        op.table = {tag: self.edge(addr, tblk, tag, nf)}
        op.default = self.exit_op(ELEMENTARY_BLOCK, addr, f"deref-type {blk.op}.{b}")
        op.detail += f" [deref+{tblk.name} fused]"
        return True

    def attach_post(self, op, ins, facts):
        name = ins.op
        if name == "call":
            op.post = POST_CALL
            after = transfer(ins, facts, self.prog)
            ret = (op.addr + 1, 0)
            op.aux = self.version(ret, _only_y(after)) if ret in self.g.nodes else None
        elif name == "execute":
            op.post = POST_EXECUTE
        elif name in ("try_me_else", "retry_me_else", "try", "retry"):
            p = ins.args[1]
            alt = ins.args[0] if name.endswith("_else") else op.addr + 1
            altf = _alt_facts(facts, p.arity)
            op.aux = self.version((alt, 0), altf) if (alt, 0) in self.g.nodes else None
            op.post = POST_PUSH if name.startswith("try") else POST_RETRY
        elif name in ("trust_me", "trust"):
            op.post = POST_TRUST

    def fill_switch(self, op, ins, facts):
        table, p = ins.args
        observed = self.g.labels((op.addr, 2))
        traced = {t for t in table.targets() if (t, 0) in self.g.nodes}
        op.kind = SWITCH
        op.count = C_GUARD
        op.body = _fused_switch
        op.detail = f"switch_on_term@{op.addr} {p.name}/{p.arity}"
        combos = {}
        for tag in observed:
            if tag == "none":
                continue
            for t in _targets_for_tag(table, tag):
                if t in traced:
                    nf = _set(facts, 1, tag)
                    combos[(tag, t)] = self.version((t, 0), nf)
        op.table = combos
        op.default = self.exit_op(ELEMENTARY_BLOCK, op.addr, "untraced-clause")
        op.aux = {t: self.s.entry_map.get(t) for t in traced}


def _targets_for_tag(table, tag):
    if tag == REF:
        return {table.var}
    if tag == LIST:
        return {table.list}
    if tag == STRUCT:
        return set(table.structs.values()) | {table.struct_default}
    return {t for (tg, _), t in table.consts.items() if tg == tag} | {table.const_default}


def _regname(r):
    return f"X{r}" if r >= 0 else f"Y{-r}"


def _wrap_load(load):
    def body(m, ins):
        load(m, ins)
        return None
    return body


def _deref_guard(raw, deref, tag):
    def fused(m, ins):
        lbl = raw(m, ins)
        if lbl != REF:
            return lbl
        lbl = deref(m, ins)
        while lbl == "loop":
            lbl = deref(m, ins)
        if lbl != "bound":
            return lbl
        return tag(m, ins)
    return fused


def _guarded_deref(body):
    def guarded(m, ins):
        if m.tags[m.d] != REF:
            return "nonvar"
        return body(m, ins)
    return guarded


def _fused_switch(m, ins):
    """Dereference A1 and pick the clause target in one step."""
    tags, vals = m.tags, m.vals
    a = m.X[1]
    while tags[a] == REF:
        v = vals[a]
        if v == a:
            break
        a = v
    m.X[1] = a
    m.d = a
    return switch_target(ins.args[0], tags, vals, a)


def compile_trace(graph, program, generation=0, max_versions=4, fuse=True) -> SEmulator:
    return TraceCompiler(graph.snapshot(), program, generation, max_versions, fuse).compile()


MAX_CHAIN = 16


def _straight(op):
    """An op whose only exit is one fixed micro-op, with nothing to count."""
    return (op.kind == ACTION and op.count == C_NONE and not op.post
            and op.default is None and len(op.table) == 1)


def fuse_chains(s: SEmulator):
    """Merge each straight-line op with the ops that follow it.

    The head of a chain runs every body in turn and takes over the table of
    the last op.  Absorbed ops stay in place for their other predecessors.
    """
    ops = s.ops
    for op in ops:
        if not _straight(op):
            continue
        (t,) = op.table.values()
        parts = [(op.body, op.ins, op.next_p)]
        chain = []
        last = op
        while t >= 0 and len(chain) < MAX_CHAIN:
            nxt = ops[t]
            if nxt.kind not in (ACTION, GUARD) or nxt.count or nxt.post or nxt is op \
                    or nxt.idx in chain:
                break
            parts.append((nxt.body, nxt.ins, nxt.next_p))
            chain.append(nxt.idx)
            last = nxt
            if not _straight(nxt):
                break
            (t,) = nxt.table.values()
        if not chain:
            continue
        op.own_table = op.table
        op.chain = tuple(chain)
        op.body = _chain_body(tuple(parts))
        op.table = last.table
        op.default = last.default
        op.detail += " +" + "+".join(map(str, chain))


def _chain_body(parts):
    def run(m, _ins):
        lbl = None
        for body, ins, next_p in parts:
            m.P = next_p
            lbl = body(m, ins)
        return lbl
    return run


def install(pred, s: SEmulator):
    pred.semulator = s
    pred.state = PredState.HOT


def select_emulator(pred, addr):
    """The specialized emulator to run from ``addr``, or None for the default."""
    s = pred.semulator
    if s is None or pred.disabled or pred.rebuild_pending or pred.state is not PredState.HOT:
        return None
    if addr not in s.entry_map:
        return None
    return s


# -- structural checks ---------------------------------------------------------------

def validate_semulator(s: SEmulator) -> list[str]:
    """Structural problems in compiled code (empty list when sound).

    * a type test is only removed when its outcome is implied by facts, or
      when the dereference that follows it is compiled as a guard; every
      kept test has a side exit for the tags it did not see;
    * every recorded ``switch_on_term`` is compiled with a bucket for each
      observed (tag, traced clause) pair and a side exit for the rest;
    * inside one instruction no type test runs before the heap check, and
      heap checks always keep their GC exit.
    """
    ops = s.ops
    problems = []

    def is_exit(i, kind=None):
        return (isinstance(i, int) and 0 <= i < len(ops) and ops[i].kind == SIDE_EXIT
                and (kind is None or ops[i].exit_kind == kind))

    def block_of(op):
        if op.addr is None or op.ins is None:
            return None
        return op.ins.cfg.blocks[op.block]

    for op in ops:
        blk = block_of(op)
        if blk is None:
            continue
        table = op.own_table if op.own_table is not None else op.table
        where = f"op {op.idx} ({op.detail})"
        if op.kind == SWITCH:
            continue
        if blk.kind is Kind.TYPE_TEST:
            if op.kind == ACTION:
                if op.reason == "known":
                    r = blk.regfn(op.ins) if blk.regfn is not None else None
                    if r is None or _get(op.facts, r) is None:
                        problems.append(f"{where}: test removed without a fact")
                elif op.reason == "deref-guarded":
                    (t,) = table.values()
                    nxt = ops[t]
                    if nxt.kind != GUARD or not is_exit(nxt.default, ELEMENTARY_BLOCK):
                        problems.append(f"{where}: dropped var-check not guarded")
                else:
                    problems.append(f"{where}: test removed without a guard")
            elif not is_exit(op.default, ELEMENTARY_BLOCK):
                problems.append(f"{where}: kept test has no side exit")
            # nothing earlier in the instruction than the heap check
            todo = [t for t in table.values() if isinstance(t, int) and t >= 0]
            seen = set()
            while todo:
                t = todo.pop()
                if t in seen:
                    continue
                seen.add(t)
                nxt = ops[t]
                if nxt.addr != op.addr or nxt.block == 0:
                    continue
                nb = block_of(nxt)
                if nb is not None and nb.kind is Kind.GC_CHECK:
                    problems.append(f"{where}: type test before heap check (op {t})")
                nt = nxt.own_table if nxt.own_table is not None else nxt.table
                todo.extend(x for x in nt.values() if isinstance(x, int) and x >= 0)
        elif blk.kind is Kind.GC_CHECK:
            if op.block != 0:
                problems.append(f"{where}: heap check is not the first block")
            if not is_exit(op.default, GC_EXCEPTION):
                problems.append(f"{where}: heap check without GC exit")

    g = s.graph
    for key in g.order:
        node = g.nodes[key]
        if node.op != "switch_on_term" or key[1] != 0:
            continue
        addr = key[0]
        sw = [op for op in ops if op.kind == SWITCH and op.addr == addr]
        if not sw:
            problems.append(f"switch_on_term@{addr}: not compiled")
            continue
        table = sw[0].ins.args[0]
        traced = {t for t in table.targets() if (t, 0) in g.nodes}
        observed = [t for t in g.labels((addr, 2)) if t != "none"]
        for op in sw:
            for tag in observed:
                for t in _targets_for_tag(table, tag):
                    if t in traced and (tag, t) not in op.table:
                        problems.append(f"op {op.idx}: switch bucket {TAG_NAMES[tag]}->{t} missing")
            if not is_exit(op.default, ELEMENTARY_BLOCK):
                problems.append(f"op {op.idx}: switch without default side exit")
    return problems


# -- execution ---------------------------------------------------------------------

def execute_semulator(m, s: SEmulator, addr):
    """Run ``s`` from instruction ``addr`` until control leaves it."""
    i = s.entry_map[addr]
    while True:
        kind, baddr = _run(m, s, i)
        m.stats.side_exits[kind] += 1
        if kind == GC_EXCEPTION:
            m.P = baddr
            gen = s.pred.generation
            m.reclaim(m.code[baddr], in_semulator=True)
            i = s.entry_map[baddr]
            m.gc_resumes.append(GcResume(s, baddr, i, gen, s.pred.generation))
            continue
        if kind == ELEMENTARY_BLOCK:
            m.P = baddr
            handle_exit(m, s, baddr)
        return kind


def handle_exit(m, s, baddr):
    """An elementary exit: schedule a rebuild, or give up on the predicate."""
    p = s.pred
    if p.semulator is not s:
        return
    cfg = m.config
    if not cfg.mutability or p.rebuilds >= cfg.max_rebuilds:
        p.semulator = None
        p.trace = None
        p.disabled = True
        p.state = PredState.COLD
        m.stats.demotions += 1
        return
    p.state = PredState.CRITICAL
    p.rebuild_pending = True
    m.monitor.reopen(p)


def _run(m, s, i):
    ops = s.ops
    stats = m.stats
    entry_map = s.entry_map
    while True:
        op = ops[i]
        stats.spec_ops += 1
        kind = op.kind
        if kind == SWITCH:
            target = _fused_switch(m, op.ins)
            stats.guard_evals += 1
            if target is None:
                t = T_FAIL
            else:
                m.P = target
                t = op.table.get((m.tags[m.d], target))
                if t is None:
                    t = op.aux.get(target)
                    if t is None:
                        t = op.default
        elif kind == SIDE_EXIT:
            return op.exit_kind, op.baddr
        elif kind == LOOP_BACK or kind == JUMP:
            t = op.table[None]
        else:
            m.P = op.next_p
            lbl = op.body(m, op.ins)
            c = op.count
            if c:
                if c == C_TT:
                    stats.tt_spec += 1
                else:
                    stats.guard_evals += 1
            t = op.table.get(lbl, op.default)
            post = op.post
            if post:
                if post == POST_CALL or post == POST_EXECUTE:
                    if post == POST_CALL and op.aux is not None:
                        m.CPv = (s, op.aux)
                    if t >= 0:
                        p = m.entering
                        m.entering = None
                        stats.head_entries_spec += 1
                        m.tick_counter(p, True)
                        if m.monitor.active:
                            return COMPLETED, m.P
                elif post == POST_PUSH:
                    m.B[-1].alt_ver = (s, op.aux) if op.aux is not None else None
                elif post == POST_RETRY:
                    m.B[-1].alt_ver = (s, op.aux) if op.aux is not None else None
                    p = m.entering
                    m.entering = None
                    stats.head_entries_spec += 1
                    m.tick_counter(p, False)
                else:
                    p = m.entering
                    m.entering = None
                    stats.head_entries_spec += 1
                    m.tick_counter(p, False)
        if t >= 0:
            i = t
            continue
        if t == T_FAIL:
            if not m.backtrack():
                return COMPLETED, m.P
            av = m.B[-1].alt_ver
            if av is not None and av[0] is s:
                i = av[1]
                continue
            j = entry_map.get(m.P)
            if j is None:
                return COMPLETED, m.P
            i = j
        elif t == T_PROCEED:
            cpv = m.CPv
            if cpv is not None and cpv[0] is s:
                i = cpv[1]
                continue
            j = entry_map.get(m.P)
            if j is None:
                return COMPLETED, m.P
            i = j
        else:
            return COMPLETED, m.P
