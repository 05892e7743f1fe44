"""Per-instruction control-flow graphs of elementary blocks.

Every opcode is described by a small list of ``Block`` objects.  Executing
an instruction means walking its blocks from index 0: a block body runs,
returns an edge label, and ``succ[label]`` names the next block index or one
of the terminal targets ``NEXT`` (fall through to the next instruction, or
to whatever address the body stored in ``m.P``), ``FAIL`` (backtrack) or
``RAISE_GC`` (reclaim the heap, then restart the instruction).

The same block objects drive the default emulator, the trace recorder and
the trace compiler, so every decision point the recorder can observe is a
block boundary here.
"""

from __future__ import annotations

import enum

from .terms import ATOM, FUN, INT, INT_MAX, INT_MIN, LIST, NIL, REF, STRUCT, TERM_TAGS, deref
from .terms import unify as _unify

NEXT, FAIL, RAISE_GC = -1, -2, -3
TARGET_NAMES = {NEXT: "next", FAIL: "fail", RAISE_GC: "gc"}

READ, WRITE = "read", "write"


class Kind(enum.Enum):
    PLAIN = "plain"
    TYPE_TEST = "type_test"
    DEREF_LOOP = "deref_loop"
    GC_CHECK = "gc_check"
    CHOICE = "choice"
    MULTIWAY = "multiway"


class EvalError(Exception):
    """Arithmetic on an unbound or non-integer operand, or division by zero."""


class Block:
    __slots__ = ("op", "index", "kind", "name", "body", "succ", "tt",
                 "regfn", "raw", "load", "loop_exit")

    def __init__(self, kind, name, body, succ, regfn=None, raw=False, load=None):
        self.kind = kind
        self.name = name
        self.body = body
        self.succ = succ
        self.tt = kind in (Kind.TYPE_TEST, Kind.MULTIWAY)
        # register tested by a raw type test (None: tests m.S or m.d)
        self.regfn = regfn
        self.raw = raw
        # when a type test is eliminated, ``load`` still performs its side
        # effect (seeding m.d) so the following blocks see the same state
        self.load = load
        self.op = None
        self.index = -1

    @property
    def id(self):
        return f"{self.op}.{self.index}"

    def __repr__(self):
        return f"<block {self.id} {self.kind.value} {self.name}>"


class InstructionCFG:
    def __init__(self, op, blocks, allocates=False):
        self.op = op
        self.blocks = blocks
        self.allocates = allocates
        for i, b in enumerate(blocks):
            b.op = op
            b.index = i

    def __len__(self):
        return len(self.blocks)

    def __getitem__(self, i):
        return self.blocks[i]


# -- building blocks -----------------------------------------------------------

def _tags(default, **over):
    """Successor table for a tag test: every term tag maps to ``default``
    unless overridden (keys are tag names)."""
    names = {"REF": REF, "ATOM": ATOM, "INT": INT, "STRUCT": STRUCT, "LIST": LIST,
             "NIL": NIL}
    succ = {t: default for t in TERM_TAGS}
    for k, v in over.items():
        succ[names[k]] = v
    return succ


def _arg_reg(k):
    def regfn(ins):
        return ins.args[k]
    return regfn


def _fixed_reg(r):
    def regfn(ins):
        return r
    return regfn


def raw_test(regfn, succ, name="var?"):
    """Type test on the undereferenced content of a register."""
    def body(m, ins):
        r = regfn(ins)
        a = m.X[r] if r >= 0 else m.E.y[~r]
        m.d = a
        return m.tags[a]

    def load(m, ins):
        r = regfn(ins)
        m.d = m.X[r] if r >= 0 else m.E.y[~r]

    return Block(Kind.TYPE_TEST, name, body, succ, regfn=regfn, raw=True, load=load)


def s_test(succ, name="var?"):
    """Type test on the structure argument cell at m.S."""
    def body(m, ins):
        m.d = m.S
        return m.tags[m.S]

    def load(m, ins):
        m.d = m.S

    return Block(Kind.TYPE_TEST, name, body, succ, raw=True, load=load)


def tag_test(succ, regfn=None, name="tag?"):
    """Type test on the dereferenced cell in m.d (``regfn``: the register
    the preceding deref loop wrote back to, if any)."""
    def body(m, ins):
        return m.tags[m.d]

    def load(m, ins):
        pass

    return Block(Kind.TYPE_TEST, name, body, succ, regfn=regfn, load=load)


def deref_loop(self_index, unbound, bound, regfn=None):
    """One dereference hop per iteration.

    The final address is written back into an X register so later tests of
    the same register start from the dereferenced cell.  Y slots are left
    alone: a choice point may still expect the undereferenced value there.
    """
    def body(m, ins):
        a = m.d
        v = m.vals[a]
        if v == a:
            lbl = "unbound"
        else:
            m.d = v
            if m.tags[v] == REF:
                return "loop"
            lbl = "bound"
        if regfn is not None:
            r = regfn(ins)
            if r >= 0:
                m.X[r] = m.d
        return lbl

    return Block(Kind.DEREF_LOOP, "deref", body,
                 {"loop": self_index, "unbound": unbound, "bound": bound}, regfn=regfn)


def gc_check(reserve):
    def body(m, ins):
        return "full" if m.H + reserve(ins) > m.cap else "ok"
    return Block(Kind.GC_CHECK, "heap?", body, {"ok": 1, "full": RAISE_GC})


def plain(name, body, succ=None):
    return Block(Kind.PLAIN, name, body, succ if succ is not None else {"ok": NEXT})


def _bind(m, var, target):
    m.vals[var] = target
    if var < m.HB:
        m.trail.append(var)


def _setreg(m, r, a):
    if r >= 0:
        m.X[r] = a
    else:
        m.E.y[~r] = a


def _getreg(m, r):
    return m.X[r] if r >= 0 else m.E.y[~r]


# -- head unification ----------------------------------------------------------

def _const_cfg(op, const_of, reg_index):
    regfn = _arg_reg(reg_index)

    def compare(m, ins):
        d = m.d
        c = const_of(m, ins)
        if m.tags[d] == m.tags[c] and m.vals[d] == m.vals[c]:
            return "eq"
        return "neq"

    def bind(m, ins):
        _bind(m, m.d, const_of(m, ins))
        return "ok"

    return InstructionCFG(op, [
        raw_test(regfn, _tags(2, REF=1)),
        deref_loop(1, 3, 2, regfn),
        plain("compare", compare, {"eq": NEXT, "neq": FAIL}),
        plain("bind", bind),
    ])


def _new_list(m):
    h = m.H
    tags, vals = m.tags, m.vals
    tags[h] = LIST
    vals[h] = h + 1
    tags[h + 1] = REF
    vals[h + 1] = h + 1
    tags[h + 2] = REF
    vals[h + 2] = h + 2
    m.H = h + 3
    m.S = h + 1
    m.mode = WRITE
    return h


def _new_struct(m, fv):
    h = m.H
    n = fv >> 32
    tags, vals = m.tags, m.vals
    tags[h] = STRUCT
    vals[h] = h + 1
    tags[h + 1] = FUN
    vals[h + 1] = fv
    for a in range(h + 2, h + 2 + n):
        tags[a] = REF
        vals[a] = a
    m.H = h + 2 + n
    m.S = h + 2
    m.mode = WRITE
    return h


def _get_list_cfg():
    regfn = _arg_reg(0)

    def write(m, ins):
        _bind(m, m.d, _new_list(m))
        return "ok"

    def read(m, ins):
        m.S = m.vals[m.d]
        m.mode = READ
        return "ok"

    return InstructionCFG("get_list", [
        gc_check(lambda ins: 3),
        raw_test(regfn, _tags(FAIL, REF=2, LIST=4)),
        deref_loop(2, 3, 5, regfn),
        plain("write", write),
        plain("read", read),
        tag_test(_tags(FAIL, LIST=4), regfn),
    ], allocates=True)


def _get_structure_cfg():
    regfn = _arg_reg(1)

    def write(m, ins):
        _bind(m, m.d, _new_struct(m, ins.args[0]))
        return "ok"

    def read(m, ins):
        f = m.vals[m.d]
        if m.vals[f] != ins.args[0]:
            return "neq"
        m.S = f + 1
        m.mode = READ
        return "eq"

    return InstructionCFG("get_structure", [
        gc_check(lambda ins: (ins.args[0] >> 32) + 2),
        raw_test(regfn, _tags(FAIL, REF=2, STRUCT=4)),
        deref_loop(2, 3, 5, regfn),
        plain("write", write),
        plain("functor", read, {"eq": NEXT, "neq": FAIL}),
        tag_test(_tags(FAIL, STRUCT=4), regfn),
    ], allocates=True)


def _get_variable(m, ins):
    r, a = ins.args
    _setreg(m, r, _getreg(m, a))
    return "ok"


def _unify_regs(m, ins):
    r, a = ins.args
    ok = _unify(m.tags, m.vals, _getreg(m, r), _getreg(m, a), m.trail, m.HB)
    return "ok" if ok else "fail"


def _mode(m, ins):
    return m.mode


def _unify_variable(m, ins):
    _setreg(m, ins.args[0], m.S)
    m.S += 1
    return "ok"


def _unify_value_read(m, ins):
    ok = _unify(m.tags, m.vals, m.S, _getreg(m, ins.args[0]), m.trail, m.HB)
    m.S += 1
    return "ok" if ok else "fail"


def _unify_value_write(m, ins):
    # point at the dereferenced cell (or copy it when atomic) so that
    # rebuilding a list from an old one does not lengthen reference chains
    s = m.S
    tags, vals = m.tags, m.vals
    a = deref(tags, vals, _getreg(m, ins.args[0]))
    t = tags[a]
    if t == ATOM or t == INT or t == NIL:
        tags[s] = t
        vals[s] = vals[a]
    else:
        tags[s] = REF
        vals[s] = a
    m.S = s + 1
    return "ok"


def _unify_const_cfg(op, const_of):
    def compare(m, ins):
        d = m.d
        c = const_of(m, ins)
        if m.tags[d] == m.tags[c] and m.vals[d] == m.vals[c]:
            m.S += 1
            return "eq"
        return "neq"

    def bind(m, ins):
        _bind(m, m.d, const_of(m, ins))
        m.S += 1
        return "ok"

    def write(m, ins):
        s = m.S
        c = const_of(m, ins)
        m.tags[s] = m.tags[c]
        m.vals[s] = m.vals[c]
        m.S = s + 1
        return "ok"

    return InstructionCFG(op, [
        plain("mode", _mode, {READ: 1, WRITE: 5}),
        s_test(_tags(3, REF=2)),
        deref_loop(2, 4, 3),
        plain("compare", compare, {"eq": NEXT, "neq": FAIL}),
        plain("bind", bind),
        plain("write", write),
    ])


# -- body construction ---------------------------------------------------------

def _put_variable(m, ins):
    r, a = ins.args
    h = m.H
    m.tags[h] = REF
    m.vals[h] = h
    m.H = h + 1
    _setreg(m, r, h)
    _setreg(m, a, h)
    return "ok"


def _put_value(m, ins):
    r, a = ins.args
    _setreg(m, a, _getreg(m, r))
    return "ok"


def _put_constant(m, ins):
    c, a = ins.args
    _setreg(m, a, c)
    return "ok"


def _put_nil(m, ins):
    _setreg(m, ins.args[0], m.nil)
    return "ok"


def _put_list(m, ins):
    _setreg(m, ins.args[0], _new_list(m))
    return "ok"


def _put_structure(m, ins):
    f, a = ins.args
    _setreg(m, a, _new_struct(m, f))
    return "ok"


# -- control -------------------------------------------------------------------

class Frame:
    __slots__ = ("prev", "cp", "cpv", "cut_b", "y")

    def __init__(self, prev, cp, cpv, cut_b, y):
        self.prev = prev
        self.cp = cp
        self.cpv = cpv
        self.cut_b = cut_b
        self.y = y


class ChoicePoint:
    __slots__ = ("args", "E", "CP", "CPv", "B0", "tr", "H", "alt", "alt_ver")

    def __init__(self, args, E, CP, CPv, B0, tr, H, alt):
        self.args = args
        self.E = E
        self.CP = CP
        self.CPv = CPv
        self.B0 = B0
        self.tr = tr
        self.H = H
        self.alt = alt
        self.alt_ver = None


def _allocate(m, ins):
    m.E = Frame(m.E, m.CP, m.CPv, m.B0, [0] * ins.args[0])
    return "ok"


def _deallocate(m, ins):
    e = m.E
    m.CP = e.cp
    m.CPv = e.cpv
    m.E = e.prev
    return "ok"


def _call(m, ins):
    p = ins.args[0]
    m.CP = m.P
    m.CPv = None
    m.B0 = len(m.B)
    m.P = p.entry
    m.entering = p
    m.entry_is_call = True
    return "ok"


def _execute(m, ins):
    p = ins.args[0]
    m.B0 = len(m.B)
    m.P = p.entry
    m.entering = p
    m.entry_is_call = True
    return "ok"


def _proceed(m, ins):
    m.P = m.CP
    return "ok"


def push_choice(m, arity, alt):
    cp = ChoicePoint(m.X[1:arity + 1], m.E, m.CP, m.CPv, m.B0, len(m.trail), m.H, alt)
    m.B.append(cp)
    m.HB = m.H
    return cp


def pop_choice(m):
    B = m.B
    B.pop()
    m.HB = B[-1].H if B else 0


def _reenter(m, p):
    # backtracking into an alternative clause is a head entry of ``p``
    m.entering = p
    m.entry_is_call = False


def _try_me_else(m, ins):
    L, p = ins.args
    push_choice(m, p.arity, L)
    return "ok"


def _retry_me_else(m, ins):
    L, p = ins.args
    cp = m.B[-1]
    cp.alt = L
    cp.alt_ver = None
    _reenter(m, p)
    return "ok"


def _trust_me(m, ins):
    pop_choice(m)
    _reenter(m, ins.args[0])
    return "ok"


def _try(m, ins):
    L, p = ins.args
    push_choice(m, p.arity, m.P)
    m.P = L
    return "ok"


def _retry(m, ins):
    L, p = ins.args
    cp = m.B[-1]
    cp.alt = m.P
    cp.alt_ver = None
    m.P = L
    _reenter(m, p)
    return "ok"


def _trust(m, ins):
    L, p = ins.args
    pop_choice(m)
    m.P = L
    _reenter(m, p)
    return "ok"


def switch_target(table, tags, vals, d):
    """Code address selected by the first-argument cell at ``d`` (or None)."""
    t = tags[d]
    if t == REF:
        return table.var
    if t == LIST:
        return table.list
    if t == STRUCT:
        return table.structs.get(vals[vals[d]], table.struct_default)
    key = (t, vals[d]) if t != NIL else (NIL, 0)
    return table.consts.get(key, table.const_default)


def _switch(m, ins):
    target = switch_target(ins.args[0], m.tags, m.vals, m.d)
    if target is None:
        return "none"
    m.P = target
    return m.tags[m.d]


def _switch_cfg():
    regfn = _fixed_reg(1)
    succ = {t: NEXT for t in TERM_TAGS}
    succ["none"] = FAIL
    return InstructionCFG("switch_on_term", [
        raw_test(regfn, _tags(2, REF=1)),
        deref_loop(1, 2, 2, regfn),
        Block(Kind.MULTIWAY, "switch", _switch, succ),
    ])


def _cut(m, ins):
    n = m.E.cut_b if ins.args[0] == "E" else m.B0
    B = m.B
    if len(B) > n:
        del B[n:]
        m.HB = B[-1].H if B else 0
    return "ok"


def _fail(m, ins):
    return "fail"


def _answer(m, ins):
    m.record_answer(ins.args[0], ins.args[1])
    return "stop" if m.halted else "more"


# -- arithmetic ----------------------------------------------------------------

def _int_operand(m, r):
    a = m.X[r] if r >= 0 else m.E.y[~r]
    return m.vals[deref(m.tags, m.vals, a)]


def _trunc_div(a, b):
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


ARITH = {
    "add": lambda a, b: a + b,
    "sub": lambda a, b: a - b,
    "mul": lambda a, b: a * b,
    "div": _trunc_div,
    "mod": lambda a, b: a % b,
}

COMPARE = {
    "lt": lambda a, b: a < b, "le": lambda a, b: a <= b,
    "gt": lambda a, b: a > b, "ge": lambda a, b: a >= b,
    "eq_num": lambda a, b: a == b, "ne_num": lambda a, b: a != b,
}


def _operand_blocks(first, k, ok, err):
    """Blocks ``first .. first+2`` check that operand ``k`` is an integer."""
    regfn = _arg_reg(k)
    return [
        raw_test(regfn, _tags(err, REF=first + 1, INT=ok)),
        deref_loop(first + 1, err, first + 2, regfn),
        tag_test(_tags(err, INT=ok), regfn),
    ]


def _type_error(m, ins):
    raise EvalError(f"{ins.op}: operands must be bound integers")


def _arith_cfg(op):
    fn = ARITH[op]

    def evaluate(m, ins):
        d, a, b = ins.args
        x = _int_operand(m, a)
        y = _int_operand(m, b)
        if op in ("div", "mod") and y == 0:
            raise EvalError("division by zero")
        v = fn(x, y)
        if not INT_MIN <= v <= INT_MAX:
            raise EvalError("integer overflow")
        h = m.H
        m.tags[h] = INT
        m.vals[h] = v
        m.H = h + 1
        _setreg(m, d, h)
        return "ok"

    return InstructionCFG(op, [gc_check(lambda ins: 1)]
                          + _operand_blocks(1, 1, 4, 8)
                          + _operand_blocks(4, 2, 7, 8)
                          + [plain("eval", evaluate), plain("error", _type_error, {})],
                          allocates=True)


def _compare_cfg(op):
    fn = COMPARE[op]

    def evaluate(m, ins):
        a, b = ins.args
        return "true" if fn(_int_operand(m, a), _int_operand(m, b)) else "false"

    return InstructionCFG(op, _operand_blocks(0, 0, 3, 7)
                          + _operand_blocks(3, 1, 6, 7)
                          + [plain("eval", evaluate, {"true": NEXT, "false": FAIL}),
                             plain("error", _type_error, {})])


# -- the table -----------------------------------------------------------------

def _single(op, name, body, succ=None, kind=Kind.PLAIN):
    return InstructionCFG(op, [Block(kind, name, body, succ or {"ok": NEXT})])


def _alloc1(op, reserve, name, body):
    return InstructionCFG(op, [gc_check(reserve), plain(name, body)], allocates=True)


def _build_table():
    t = {}
    t["get_variable"] = _single("get_variable", "move", _get_variable)
    t["get_value"] = _single("get_value", "unify", _unify_regs, {"ok": NEXT, "fail": FAIL})
    t["unify"] = _single("unify", "unify", _unify_regs, {"ok": NEXT, "fail": FAIL})
    t["is"] = _single("is", "unify", _unify_regs, {"ok": NEXT, "fail": FAIL})
    t["get_constant"] = _const_cfg("get_constant", lambda m, ins: ins.args[0], 1)
    t["get_nil"] = _const_cfg("get_nil", lambda m, ins: m.nil, 0)
    t["get_list"] = _get_list_cfg()
    t["get_structure"] = _get_structure_cfg()
    t["unify_variable"] = _single("unify_variable", "next-arg", _unify_variable)
    t["unify_value"] = InstructionCFG("unify_value", [
        plain("mode", _mode, {READ: 1, WRITE: 2}),
        plain("unify", _unify_value_read, {"ok": NEXT, "fail": FAIL}),
        plain("write", _unify_value_write),
    ])
    t["unify_constant"] = _unify_const_cfg("unify_constant", lambda m, ins: ins.args[0])
    t["unify_nil"] = _unify_const_cfg("unify_nil", lambda m, ins: m.nil)
    t["put_variable"] = _alloc1("put_variable", lambda ins: 1, "new-var", _put_variable)
    t["put_value"] = _single("put_value", "move", _put_value)
    t["put_constant"] = _single("put_constant", "move", _put_constant)
    t["put_nil"] = _single("put_nil", "move", _put_nil)
    t["put_list"] = _alloc1("put_list", lambda ins: 3, "new-list", _put_list)
    t["put_structure"] = _alloc1("put_structure", lambda ins: (ins.args[0] >> 32) + 2,
                                 "new-struct", _put_structure)
    t["allocate"] = _single("allocate", "frame", _allocate)
    t["deallocate"] = _single("deallocate", "frame", _deallocate)
    t["call"] = _single("call", "call", _call)
    t["execute"] = _single("execute", "execute", _execute)
    t["proceed"] = _single("proceed", "return", _proceed)
    t["try_me_else"] = _single("try_me_else", "push", _try_me_else, kind=Kind.CHOICE)
    t["retry_me_else"] = _single("retry_me_else", "update", _retry_me_else, kind=Kind.CHOICE)
    t["trust_me"] = _single("trust_me", "pop", _trust_me, kind=Kind.CHOICE)
    t["try"] = _single("try", "push", _try, kind=Kind.CHOICE)
    t["retry"] = _single("retry", "update", _retry, kind=Kind.CHOICE)
    t["trust"] = _single("trust", "pop", _trust, kind=Kind.CHOICE)
    t["switch_on_term"] = _switch_cfg()
    t["cut"] = _single("cut", "cut", _cut)
    t["fail"] = _single("fail", "fail", _fail, {"fail": FAIL})
    t["answer"] = _single("answer", "answer", _answer, {"more": FAIL, "stop": NEXT})
    for op in ARITH:
        t[op] = _arith_cfg(op)
    for op in COMPARE:
        t[op] = _compare_cfg(op)
    return t


CFGS = _build_table()

# opcodes whose bodies may grow the heap
ALLOCATING = frozenset(op for op, c in CFGS.items() if c.allocates)


def check_structure():
    """Static sanity rules every CFG must satisfy (raises AssertionError)."""
    for op, cfg in CFGS.items():
        n = len(cfg.blocks)
        for b in cfg.blocks:
            for lbl, tgt in b.succ.items():
                assert tgt in (NEXT, FAIL, RAISE_GC) or 0 <= tgt < n, (op, b.index, lbl)
            if b.kind is Kind.GC_CHECK:
                assert b.index == 0, f"{op}: heap check must be the first block"
            if b.kind is Kind.DEREF_LOOP:
                assert b.succ["loop"] == b.index, f"{op}: deref loop must loop on itself"
            if b.kind is Kind.MULTIWAY:
                assert len(set(b.succ)) >= 3, f"{op}: multiway needs 3+ successors"
        if op in ALLOCATING:
            assert cfg.blocks[0].kind is Kind.GC_CHECK, f"{op}: allocates without a check"
        else:
            assert all(b.kind is not Kind.GC_CHECK for b in cfg.blocks)


def check_path(cfg: InstructionCFG, steps) -> None:
    """Validate an observed ``[(block_index, label), ...]`` walk through ``cfg``."""
    expect = 0
    for i, (b, lbl) in enumerate(steps):
        assert b == expect, f"{cfg.op}: step {i} entered block {b}, expected {expect}"
        blk = cfg.blocks[b]
        assert lbl in blk.succ, f"{cfg.op}: block {b} produced unknown label {lbl!r}"
        expect = blk.succ[lbl]
    assert expect < 0, f"{cfg.op}: walk stopped inside the instruction"


def instruction_metadata(op: str) -> InstructionCFG:
    return CFGS[op]


check_structure()
