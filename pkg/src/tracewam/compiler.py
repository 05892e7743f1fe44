"""Compile source clauses to abstract-machine code with first-argument indexing.

Registers are plain ints: ``r >= 0`` names X[r] (argument register Ai is
X[i], counting from 1), ``r < 0`` names permanent slot Y[-r - 1] of the
current environment.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .reader import ParsedProgram, SourceClause, parse_program
from .terms import ATOM, INT, NIL, Atom, Int, Struct, Symbols, Var, fun_val

INLINE_BUILTINS = {("true", 0), ("fail", 0), ("!", 0), ("=", 2), ("is", 2)}
COMPARE_OPS = {"<": "lt", "=<": "le", ">": "gt", ">=": "ge", "=:=": "eq_num",
               "=\\=": "ne_num"}
ARITH_OPS = {"+": "add", "-": "sub", "*": "mul", "//": "div", "mod": "mod"}
ARITH_OPCODES = frozenset(ARITH_OPS.values())
COMPARE_OPCODES = frozenset(COMPARE_OPS.values())

MAX_CONSTANTS = 1 << 20


class CompileError(Exception):
    pass


class LinkError(CompileError):
    pass


class PredState(enum.Enum):
    COLD = "COLD"
    CRITICAL = "CRITICAL"
    HOT = "HOT"


class Instr:
    __slots__ = ("op", "args", "cfg", "addr")

    def __init__(self, op, *args):
        self.op = op
        self.args = args
        self.cfg = None
        self.addr = -1

    def __repr__(self):
        return f"{self.op} {', '.join(map(_fmt_operand, self.args))}".rstrip(", ")

    def __eq__(self, other):
        return isinstance(other, Instr) and (self.op, self.args) == (other.op, other.args)

    __hash__ = object.__hash__


def _fmt_operand(a):
    if isinstance(a, PredicateEntry):
        return f"{a.name}/{a.arity}"
    if isinstance(a, SwitchTable):
        return "<table>"
    return repr(a)


def reg_name(r: int) -> str:
    return f"X{r}" if r >= 0 else f"Y{-r}"


@dataclass(eq=False)
class SwitchTable:
    """Targets are code addresses, or None for "no clause matches"."""
    var: int
    consts: dict = field(default_factory=dict)     # (tag, val) -> target
    const_default: int | None = None
    list: int | None = None
    structs: dict = field(default_factory=dict)    # FUN header val -> target
    struct_default: int | None = None

    def targets(self):
        out = [self.var, self.const_default, self.list, self.struct_default]
        out += self.consts.values()
        out += self.structs.values()
        return {t for t in out if t is not None}


@dataclass(eq=False)
class PredicateEntry:
    name: str
    arity: int
    clauses: list = field(default_factory=list)     # clause body addresses
    entry: int = -1
    index: SwitchTable | None = None
    # runtime (reset per machine)
    call_counter: int = 0
    state: PredState = PredState.COLD
    semulator: object = None
    trace: object = None
    base: int = 0              # counter value thresholds are measured from
    record_start: int = 0
    rebuilds: int = 0
    rebuild_pending: bool = False
    disabled: bool = False     # permanently default-only
    generation: int = 0        # of the most recently installed trace

    @property
    def key(self):
        return (self.name, self.arity)

    def reset_runtime(self):
        self.call_counter = 0
        self.state = PredState.COLD
        self.semulator = None
        self.trace = None
        self.base = 0
        self.record_start = 0
        self.rebuilds = 0
        self.rebuild_pending = False
        self.disabled = False
        self.generation = 0

    def __repr__(self):
        return f"<pred {self.name}/{self.arity}>"


def _indicator(t):
    if isinstance(t, Struct):
        return t.name, len(t.args)
    if isinstance(t, Atom):
        return t.name, 0
    raise CompileError(f"goal is not callable: {t!r}")


def _args(t):
    return t.args if isinstance(t, Struct) else ()


def _is_list_cell(t):
    return isinstance(t, Struct) and t.name == "." and len(t.args) == 2


def _vars_of(t, out):
    if isinstance(t, Var):
        out.append(t.name)
    elif isinstance(t, Struct):
        for a in t.args:
            _vars_of(a, out)
    return out


class Program:
    """Code area, constant area and predicate table of a linked program."""

    def __init__(self):
        self.symbols = Symbols()
        self.code: list[Instr] = []
        self.labels: dict = {}            # (name, arity, clause_no) -> address
        self.preds: dict = {}
        self.consts: list = []            # (tag, val) cells of the constant area
        self._const_addr: dict = {}
        self.source: ParsedProgram | None = None
        self.query_vars: dict = {}        # query entry -> var names
        self.nil = self.const(Atom("[]"))

    # -- constants ---------------------------------------------------------

    def const(self, t) -> int:
        if isinstance(t, Int):
            key = (INT, t.value)
        elif t == Atom("[]"):
            key = (NIL, 0)
        else:
            key = (ATOM, self.symbols.atom(t.name))
        a = self._const_addr.get(key)
        if a is None:
            if len(self.consts) >= MAX_CONSTANTS:
                raise CompileError("too many constants")
            a = self._const_addr[key] = len(self.consts)
            self.consts.append(key)
        return a

    def emit(self, ins: Instr) -> int:
        ins.addr = len(self.code)
        self.code.append(ins)
        return ins.addr

    def pred(self, name, arity) -> PredicateEntry:
        p = self.preds.get((name, arity))
        if p is None:
            raise LinkError(f"{name}/{arity} undefined")
        return p

    def reset_runtime(self):
        for p in self.preds.values():
            p.reset_runtime()

    # -- queries -----------------------------------------------------------

    def compile_query(self, goals) -> int:
        """Append code for a query; returns its entry address."""
        names = []
        for g in goals:
            for v in _vars_of(g, []):
                if v not in names and not v.startswith("_"):
                    names.append(v)
        cc = ClauseCompiler(self, SourceClause(Atom("$query"), list(goals)), query_vars=names)
        entry = len(self.code)
        for ins in cc.compile():
            self.emit(ins)
        self.query_vars[entry] = names
        return entry

    def disassemble(self, start=0, end=None) -> str:
        end = len(self.code) if end is None else end
        return "\n".join(f"{a:5d}  {self.code[a]!r}" for a in range(start, end))


class ClauseCompiler:
    def __init__(self, program: Program, clause: SourceClause, query_vars=None):
        self.prog = program
        self.clause = clause
        self.query_vars = query_vars
        self.out: list[Instr] = []
        self.home: dict[str, int] = {}
        self.nperm = 0

    def e(self, op, *args):
        self.out.append(Instr(op, *args))

    def temp(self):
        r = self.next_temp
        self.next_temp += 1
        return r

    def classify(self):
        goals = self.clause.body
        self.kinds = []
        chunk_of = {}
        chunk = 0

        def note(t):
            for v in _vars_of(t, []):
                chunk_of.setdefault(v, set()).add(chunk)

        note(self.clause.head)
        ncalls = 0
        for i, g in enumerate(goals):
            if isinstance(g, Var):
                raise CompileError(f"unsupported goal: variable call {g.name}")
            key = _indicator(g)
            name, arity = key
            if key in INLINE_BUILTINS or (name in COMPARE_OPS and arity == 2):
                kind = "builtin"
            elif name in (",", ";", "->", "\\+", "call", "assert", "retract",
                          "findall", "write", "nl") or name in ARITH_OPS and arity == 2:
                raise CompileError(f"unsupported builtin {name}/{arity}")
            else:
                kind = "call"
                ncalls += 1
            self.kinds.append(kind)
            note(g)
            if kind == "call":
                chunk += 1
        if self.query_vars is not None:
            perm = set(self.query_vars)
            for v, cs in chunk_of.items():
                if len(cs) > 1:
                    perm.add(v)
        else:
            perm = {v for v, cs in chunk_of.items() if len(cs) > 1}
        last_is_call = bool(goals) and self.kinds[-1] == "call"
        calls_before_last = ncalls - (1 if last_is_call else 0)
        self.needs_env = (self.query_vars is not None or bool(perm)
                          or calls_before_last > 0)
        self.perm = perm
        arities = [len(_args(self.clause.head))]
        arities += [len(_args(g)) for g, k in zip(goals, self.kinds) if k == "call"]
        self.next_temp = max(arities) + 1

    def home_of(self, v):
        """Home register for the first occurrence of variable name ``v``."""
        if v in self.perm:
            r = -(self.nperm + 1)
            self.nperm += 1
        else:
            r = self.temp()
        self.home[v] = r
        return r

    # -- head --------------------------------------------------------------

    def compile_head(self):
        head = self.clause.head
        fact = not self.clause.body and self.query_vars is None
        pending = []
        for i, a in enumerate(_args(head), 1):
            if isinstance(a, Var):
                if a.name in self.home:
                    self.e("get_value", self.home[a.name], i)
                elif fact and a.name not in self.perm:
                    self.home[a.name] = i
                else:
                    self.e("get_variable", self.home_of(a.name), i)
            elif isinstance(a, (Atom, Int)):
                if a == Atom("[]"):
                    self.e("get_nil", i)
                else:
                    self.e("get_constant", self.prog.const(a), i)
            else:
                pending.append((i, a))
        while pending:
            reg, t = pending.pop(0)
            if _is_list_cell(t):
                self.e("get_list", reg)
            else:
                self.e("get_structure", self._fun(t), reg)
            for sub in t.args:
                nested = self.unify_arg(sub)
                if nested is not None:
                    pending.append(nested)

    def _fun(self, t):
        return fun_val(self.prog.symbols.functor(t.name, len(t.args)), len(t.args))

    def unify_arg(self, sub):
        if isinstance(sub, Var):
            if sub.name in self.home:
                self.e("unify_value", self.home[sub.name])
            else:
                self.e("unify_variable", self.home_of(sub.name))
        elif isinstance(sub, (Atom, Int)):
            if sub == Atom("[]"):
                self.e("unify_nil")
            else:
                self.e("unify_constant", self.prog.const(sub))
        else:
            r = self.temp()
            self.e("unify_variable", r)
            return (r, sub)
        return None

    # -- body --------------------------------------------------------------

    def build(self, t, target):
        """Construct compound ``t`` into register ``target`` (bottom-up)."""
        inner = {}
        for k, sub in enumerate(t.args):
            if isinstance(sub, Struct):
                r = self.temp()
                self.build(sub, r)
                inner[k] = r
        if _is_list_cell(t):
            self.e("put_list", target)
        else:
            self.e("put_structure", self._fun(t), target)
        for k, sub in enumerate(t.args):
            if k in inner:
                self.e("unify_value", inner[k])
            else:
                self.unify_arg(sub)

    def put_arg(self, t, target):
        if isinstance(t, Var):
            if t.name in self.home:
                self.e("put_value", self.home[t.name], target)
            else:
                h = self.home_of(t.name)
                self.e("put_variable", h, target)
        elif isinstance(t, (Atom, Int)):
            if t == Atom("[]"):
                self.e("put_nil", target)
            else:
                self.e("put_constant", self.prog.const(t), target)
        else:
            self.build(t, target)

    def term_reg(self, t):
        if isinstance(t, Var) and t.name in self.home:
            return self.home[t.name]
        if isinstance(t, Var):
            h = self.home_of(t.name)
            self.e("put_variable", h, h)
            return h
        r = self.temp()
        self.put_arg(t, r)
        return r

    def expr(self, t):
        if isinstance(t, Int) or isinstance(t, Var):
            return self.term_reg(t)
        if isinstance(t, Struct):
            if len(t.args) == 2 and t.name in ARITH_OPS:
                a = self.expr(t.args[0])
                b = self.expr(t.args[1])
                d = self.temp()
                self.e(ARITH_OPS[t.name], d, a, b)
                return d
            if len(t.args) == 1 and t.name == "-":
                z = self.term_reg(Int(0))
                b = self.expr(t.args[0])
                d = self.temp()
                self.e("sub", d, z, b)
                return d
        raise CompileError(f"unsupported arithmetic expression {t!r}")

    def bind_first(self, v, reg):
        """First occurrence of variable ``v`` takes the value in ``reg``."""
        if v in self.perm:
            self.e("get_variable", self.home_of(v), reg)
        else:
            self.home[v] = reg

    def compile_builtin(self, g):
        name, arity = _indicator(g)
        args = _args(g)
        if name == "true":
            return
        if name == "fail":
            self.e("fail")
        elif name == "!":
            self.e("cut", "E" if self.needs_env else "B0")
        elif name == "=":
            a, b = args
            if isinstance(a, Var) and a.name not in self.home:
                self.bind_first(a.name, self.term_reg(b))
            elif isinstance(b, Var) and b.name not in self.home:
                self.bind_first(b.name, self.term_reg(a))
            else:
                self.e("unify", self.term_reg(a), self.term_reg(b))
        elif name == "is":
            lhs, rhs = args
            r = self.expr(rhs)
            if isinstance(lhs, Var) and lhs.name not in self.home:
                self.bind_first(lhs.name, r)
            else:
                self.e("is", self.term_reg(lhs), r)
        else:
            a = self.expr(args[0])
            b = self.expr(args[1])
            self.e(COMPARE_OPS[name], a, b)

    def compile(self) -> list[Instr]:
        self.classify()
        if self.needs_env:
            self.e("allocate", None)
        self.compile_head()
        goals = self.clause.body
        for i, (g, kind) in enumerate(zip(goals, self.kinds)):
            last = i == len(goals) - 1
            if kind == "builtin":
                self.compile_builtin(g)
                continue
            name, arity = _indicator(g)
            for k, a in enumerate(_args(g), 1):
                self.put_arg(a, k)
            pred = self.prog.preds.get((name, arity))
            if pred is None:
                raise LinkError(f"{name}/{arity} undefined")
            if last and self.query_vars is None:
                if self.needs_env:
                    self.e("deallocate")
                self.e("execute", pred)
                break
            self.e("call", pred)
        else:
            if self.query_vars is not None:
                names = self.query_vars
                self.e("answer", tuple(names), tuple(self.home_of(n) if n not in self.home
                                                     else self.home[n] for n in names))
            else:
                if self.needs_env:
                    self.e("deallocate")
                self.e("proceed")
        if self.needs_env:
            self.out[0] = Instr("allocate", self.nperm)
        return self.out


def compile_clause(program: Program, clause: SourceClause) -> list[Instr]:
    return ClauseCompiler(program, clause).compile()


def _first_arg_key(program, clause):
    args = _args(clause.head)
    if not args:
        return ("var",)
    a = args[0]
    if isinstance(a, Var):
        return ("var",)
    if isinstance(a, (Atom, Int)):
        return ("const", program.consts[program.const(a)])
    if _is_list_cell(a):
        return ("list",)
    return ("struct", fun_val(program.symbols.functor(a.name, len(a.args)), len(a.args)))


def build_first_arg_index(program: Program, pred: PredicateEntry, clauses, chain_entry):
    """Emit a switch table for ``pred``; returns it (or None if not worthwhile).

    ``clauses`` are the source clauses in order and ``pred.clauses`` already
    holds their body addresses; ``chain_entry`` is the try_me_else chain head.
    """
    if len(clauses) < 2:
        return None
    keys = [_first_arg_key(program, c) for c in clauses]
    if all(k == ("var",) for k in keys):
        return None
    addrs = pred.clauses
    var_idx = [i for i, k in enumerate(keys) if k == ("var",)]
    chains = {}

    def target(idxs):
        if not idxs:
            return None
        if len(idxs) == 1:
            return addrs[idxs[0]]
        key = tuple(idxs)
        if key not in chains:
            start = len(program.code)
            for j, i in enumerate(idxs):
                op = "try" if j == 0 else ("trust" if j == len(idxs) - 1 else "retry")
                program.emit(Instr(op, addrs[i], pred))
            chains[key] = start
        return chains[key]

    def bucket(pred_fn):
        return [i for i, k in enumerate(keys) if k == ("var",) or pred_fn(k)]

    table = SwitchTable(var=chain_entry)
    for k in keys:
        if k[0] == "const" and k[1] not in table.consts:
            table.consts[k[1]] = target(bucket(lambda kk, c=k[1]: kk == ("const", c)))
        elif k[0] == "struct" and k[1] not in table.structs:
            table.structs[k[1]] = target(bucket(lambda kk, f=k[1]: kk == ("struct", f)))
    table.const_default = target(var_idx)
    table.struct_default = target(var_idx)
    table.list = target(bucket(lambda kk: kk == ("list",)))
    return table


def link_program(source: ParsedProgram | list[SourceClause]) -> Program:
    if isinstance(source, ParsedProgram):
        parsed = source
    else:
        parsed = ParsedProgram(list(source), [])
    prog = Program()
    prog.source = parsed
    grouped: dict = {}
    for c in parsed.clauses:
        key = c.indicator
        if key in INLINE_BUILTINS or (key[0] in COMPARE_OPS and key[1] == 2):
            raise CompileError(f"cannot redefine builtin {key[0]}/{key[1]}")
        grouped.setdefault(key, []).append(c)
    for (name, arity) in grouped:
        prog.preds[(name, arity)] = PredicateEntry(name, arity)

    missing = []
    for c in parsed.clauses:
        for g in c.body:
            if isinstance(g, Var):
                continue
            key = _indicator(g)
            if key in INLINE_BUILTINS or (key[0] in COMPARE_OPS and key[1] == 2):
                continue
            if key not in prog.preds and key not in missing:
                missing.append(key)
    if missing:
        raise LinkError("; ".join(f"{n}/{a} undefined" for n, a in missing))

    for key, clauses in grouped.items():
        pred = prog.preds[key]
        codes = [compile_clause(prog, c) for c in clauses]
        if len(clauses) == 1:
            pred.entry = len(prog.code)
            for ins in codes[0]:
                prog.emit(ins)
            pred.clauses = [pred.entry]
            prog.labels[(key[0], key[1], 0)] = pred.entry
            continue
        keys = [_first_arg_key(prog, c) for c in clauses]
        switch = None
        if any(k != ("var",) for k in keys):
            switch = Instr("switch_on_term", None, pred)
            pred.entry = prog.emit(switch)
        chain_entry = len(prog.code)
        if switch is None:
            pred.entry = chain_entry
        choice_addrs = []
        for i, code in enumerate(codes):
            if i == 0:
                ch = Instr("try_me_else", None, pred)
            elif i == len(codes) - 1:
                ch = Instr("trust_me", pred)
            else:
                ch = Instr("retry_me_else", None, pred)
            choice_addrs.append(prog.emit(ch))
            pred.clauses.append(len(prog.code))
            prog.labels[(key[0], key[1], i)] = len(prog.code)
            for ins in code:
                prog.emit(ins)
        for i in range(len(codes) - 1):
            ch = prog.code[choice_addrs[i]]
            ch.args = (choice_addrs[i + 1], pred)
        if switch is not None:
            table = build_first_arg_index(prog, pred, clauses, chain_entry)
            switch.args = (table, pred)
            pred.index = table
    return prog


def load_program(text: str) -> Program:
    return link_program(parse_program(text))
