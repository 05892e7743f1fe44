"""Tagged heap cells, binding, dereferencing, unification and the trail.

The heap is two parallel Python lists (``tags`` and ``vals``) indexed by
address.  Cell layouts:

    REF     vals[a] == a when unbound, otherwise the bound address
    ATOM    vals[a] is a symbol id
    INT     vals[a] is the integer
    NIL     vals[a] is unused (0)
    LIST    vals[a] addresses a pair of contiguous cells (head, tail)
    STRUCT  vals[a] addresses a FUN header cell followed by ``arity`` args
    FUN     vals[a] is a functor id; never referenced except from STRUCT

No occurs check is performed.  Programs that build cyclic terms have
undefined behaviour (deref and unify may not terminate).
"""

from __future__ import annotations

from dataclasses import dataclass, field

REF, ATOM, INT, STRUCT, LIST, NIL, FUN = range(7)
TAG_NAMES = ("REF", "ATOM", "INT", "STRUCT", "LIST", "NIL", "FUN")
TERM_TAGS = (REF, ATOM, INT, STRUCT, LIST, NIL)

INT_MIN = -(1 << 63)
INT_MAX = (1 << 63) - 1


class Symbols:
    """Interning tables for atom names and name/arity functors."""

    def __init__(self):
        self.atoms: list[str] = []
        self._atom_ids: dict[str, int] = {}
        self.functors: list[tuple[str, int]] = []
        self._functor_ids: dict[tuple[str, int], int] = {}

    def atom(self, name: str) -> int:
        i = self._atom_ids.get(name)
        if i is None:
            i = self._atom_ids[name] = len(self.atoms)
            self.atoms.append(name)
        return i

    def functor(self, name: str, arity: int) -> int:
        key = (name, arity)
        i = self._functor_ids.get(key)
        if i is None:
            i = self._functor_ids[key] = len(self.functors)
            self.functors.append(key)
        return i


class HeapFull(Exception):
    pass


class Heap:
    """Cell storage.  Addresses below ``static_top`` hold interned constants."""

    def __init__(self, capacity: int, static_cells=()):
        static_cells = list(static_cells)
        if capacity <= len(static_cells):
            raise ValueError("heap capacity must exceed the constant area")
        self.capacity = capacity
        self.tags = [REF] * capacity
        self.vals = [0] * capacity
        for a, (t, v) in enumerate(static_cells):
            self.tags[a] = t
            self.vals[a] = v
        self.static_top = len(static_cells)
        self.H = self.static_top

    def alloc(self, tag: int, val: int) -> int:
        a = self.H
        if a >= self.capacity:
            raise HeapFull(a)
        self.tags[a] = tag
        self.vals[a] = val
        self.H = a + 1
        return a

    def new_var(self) -> int:
        a = self.H
        if a >= self.capacity:
            raise HeapFull(a)
        self.tags[a] = REF
        self.vals[a] = a
        self.H = a + 1
        return a

    def cell(self, a: int) -> tuple[int, int]:
        return self.tags[a], self.vals[a]


@dataclass
class Trail:
    entries: list[int] = field(default_factory=list)
    marks: list[int] = field(default_factory=list)

    def mark(self) -> int:
        m = len(self.entries)
        self.marks.append(m)
        return m


def deref(tags, vals, a: int) -> int:
    while tags[a] == REF:
        v = vals[a]
        if v == a:
            return a
        a = v
    return a


def bind(tags, vals, var: int, target: int, trail: list[int], hb=None) -> None:
    """Bind the unbound REF at ``var`` to ``target``.

    With ``hb`` given, only cells below it are trailed (conditional
    trailing); otherwise every binding is trailed.
    """
    assert tags[var] == REF and vals[var] == var, "bind on a non-variable"
    vals[var] = target
    if hb is None or var < hb:
        trail.append(var)


def undo_to(vals, trail: list[int], mark: int) -> None:
    for i in range(len(trail) - 1, mark - 1, -1):
        a = trail[i]
        vals[a] = a
    del trail[mark:]


def undo_to_mark(heap: Heap, trail: Trail, mark: int) -> None:
    if not trail.marks or trail.marks[-1] != mark:
        raise AssertionError("stale or out-of-order trail mark")
    trail.marks.pop()
    undo_to(heap.vals, trail.entries, mark)


def unify(tags, vals, a: int, b: int, trail: list[int], hb=None) -> bool:
    """Structural unification; on failure every binding it made is undone."""
    made = []
    stack = [a, b]
    while stack:
        y = deref(tags, vals, stack.pop())
        x = deref(tags, vals, stack.pop())
        if x == y:
            continue
        tx = tags[x]
        ty = tags[y]
        if tx == REF or ty == REF:
            # younger (higher address) variable points at the older cell
            if tx == REF and (ty != REF or x > y):
                var, tgt = x, y
            else:
                var, tgt = y, x
            vals[var] = tgt
            made.append(var)
            continue
        if tx != ty:
            break
        if tx == ATOM or tx == INT:
            if vals[x] != vals[y]:
                break
        elif tx == LIST:
            px, py = vals[x], vals[y]
            stack += (px + 1, py + 1, px, py)
        elif tx == STRUCT:
            fx, fy = vals[x], vals[y]
            if vals[fx] != vals[fy]:
                break
            n = len_args(tags, vals, fx)
            for i in range(n, 0, -1):
                stack.append(fx + i)
                stack.append(fy + i)
        # NIL == NIL
    else:
        for v in made:
            if hb is None or v < hb:
                trail.append(v)
        return True
    for v in made:
        vals[v] = v
    return False


# FUN header values pack the arity above the functor id
ARITY_SHIFT = 32


def fun_val(functor_id: int, arity: int) -> int:
    return (arity << ARITY_SHIFT) | functor_id


def fun_arity(v: int) -> int:
    return v >> ARITY_SHIFT


def fun_id(v: int) -> int:
    return v & ((1 << ARITY_SHIFT) - 1)


def len_args(tags, vals, fun_addr: int) -> int:
    return vals[fun_addr] >> ARITY_SHIFT


# -- building and reading terms ---------------------------------------------

class Var:
    __slots__ = ("name",)

    def __init__(self, name):
        self.name = name

    def __repr__(self):
        return f"Var({self.name!r})"

    def __eq__(self, other):
        return isinstance(other, Var) and other.name == self.name

    def __hash__(self):
        return hash(("Var", self.name))


class Atom:
    __slots__ = ("name",)

    def __init__(self, name):
        self.name = name

    def __repr__(self):
        return f"Atom({self.name!r})"

    def __eq__(self, other):
        return isinstance(other, Atom) and other.name == self.name

    def __hash__(self):
        return hash(("Atom", self.name))


class Int:
    __slots__ = ("value",)

    def __init__(self, value):
        self.value = value

    def __repr__(self):
        return f"Int({self.value})"

    def __eq__(self, other):
        return isinstance(other, Int) and other.value == self.value

    def __hash__(self):
        return hash(("Int", self.value))


class Struct:
    __slots__ = ("name", "args")

    def __init__(self, name, args):
        self.name = name
        self.args = tuple(args)

    def __repr__(self):
        return f"Struct({self.name!r}, {list(self.args)!r})"

    def __eq__(self, other):
        return (isinstance(other, Struct) and other.name == self.name
                and other.args == self.args)

    def __hash__(self):
        return hash(("Struct", self.name, self.args))


NIL_ATOM = Atom("[]")


def make_list(items, tail=NIL_ATOM):
    out = tail
    for x in reversed(items):
        out = Struct(".", (x, out))
    return out


def build(heap: Heap, symbols: Symbols, term, env: dict | None = None) -> int:
    """Copy an AST term onto the heap; ``env`` maps variable names to cells."""
    if env is None:
        env = {}
    tags, vals = heap.tags, heap.vals

    def go(t):
        if isinstance(t, Var):
            if t.name == "_":
                return heap.new_var()
            a = env.get(t.name)
            if a is None:
                a = env[t.name] = heap.new_var()
            return a
        if isinstance(t, Int):
            return heap.alloc(INT, t.value)
        if isinstance(t, Atom):
            if t.name == "[]":
                return heap.alloc(NIL, 0)
            return heap.alloc(ATOM, symbols.atom(t.name))
        if isinstance(t, Struct):
            if t.name == "." and len(t.args) == 2:
                h = go(t.args[0])
                tl = go(t.args[1])
                p = heap.alloc(REF, 0)
                heap.alloc(REF, 0)
                tags[p], vals[p] = REF, h
                tags[p + 1], vals[p + 1] = REF, tl
                return heap.alloc(LIST, p)
            args = [go(x) for x in t.args]
            f = heap.alloc(FUN, fun_val(symbols.functor(t.name, len(args)), len(args)))
            for x in args:
                heap.alloc(REF, x)
            return heap.alloc(STRUCT, f)
        raise TypeError(f"not a term: {t!r}")

    return go(term)


def read_back(tags, vals, symbols: Symbols, a: int, names: dict | None = None):
    """Reconstruct an AST term from the heap (unbound variables become Var)."""
    if names is None:
        names = {}

    def go(a):
        a = deref(tags, vals, a)
        t = tags[a]
        if t == REF:
            n = names.get(a)
            if n is None:
                n = names[a] = f"_{len(names)}"
            return Var(n)
        if t == ATOM:
            return Atom(symbols.atoms[vals[a]])
        if t == INT:
            return Int(vals[a])
        if t == NIL:
            return NIL_ATOM
        if t == LIST:
            p = vals[a]
            return Struct(".", (go(p), go(p + 1)))
        if t == STRUCT:
            f = vals[a]
            name, n = symbols.functors[fun_id(vals[f])]
            return Struct(name, [go(f + i) for i in range(1, n + 1)])
        raise ValueError(f"dangling FUN cell at {a}")

    return go(a)


_SOLO = {"[]", "!", ";", "{}"}


def _quote(name: str) -> str:
    if name in _SOLO or (name[:1].islower() and name.replace("_", "a").isalnum()):
        return name
    if name and all(c in "+-*/\\^<>=~:.?@#&$" for c in name):
        return name
    return "'" + name.replace("'", "''") + "'"


def format_term(t) -> str:
    """Canonical text: functional notation for everything except lists."""
    if isinstance(t, Var):
        return t.name
    if isinstance(t, Int):
        return str(t.value)
    if isinstance(t, Atom):
        return _quote(t.name)
    if isinstance(t, Struct):
        if t.name == "." and len(t.args) == 2:
            items = []
            while isinstance(t, Struct) and t.name == "." and len(t.args) == 2:
                items.append(format_term(t.args[0]))
                t = t.args[1]
            if t == NIL_ATOM:
                return "[" + ",".join(items) + "]"
            return "[" + ",".join(items) + "|" + format_term(t) + "]"
        return _quote(t.name) + "(" + ",".join(format_term(a) for a in t.args) + ")"
    raise TypeError(t)


def format_solution(names, terms) -> str:
    if not names:
        return "true"
    return ", ".join(f"{n} = {format_term(t)}" for n, t in zip(names, terms))
