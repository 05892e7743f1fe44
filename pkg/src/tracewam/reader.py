"""Tokenizer and operator-precedence parser for the supported Prolog subset."""

from __future__ import annotations

import re
from dataclasses import dataclass

from .terms import Atom, Int, Struct, Var, make_list, NIL_ATOM


class PrologSyntaxError(Exception):
    def __init__(self, msg, line, col):
        super().__init__(f"{msg} at line {line}, column {col}")
        self.line = line
        self.col = col


# name -> (priority, type)
PREFIX_OPS = {":-": (1200, "fx"), "-": (200, "fy"), "\\+": (900, "fy")}
INFIX_OPS = {
    ":-": (1200, "xfx"),
    ";": (1100, "xfy"),
    "->": (1050, "xfy"),
    ",": (1000, "xfy"),
    "=": (700, "xfx"), "\\=": (700, "xfx"), "==": (700, "xfx"), "\\==": (700, "xfx"),
    "is": (700, "xfx"), "<": (700, "xfx"), ">": (700, "xfx"), "=<": (700, "xfx"),
    ">=": (700, "xfx"), "=:=": (700, "xfx"), "=\\=": (700, "xfx"),
    "+": (500, "yfx"), "-": (500, "yfx"),
    "*": (400, "yfx"), "//": (400, "yfx"), "/": (400, "yfx"), "mod": (400, "yfx"),
}

SYMBOL_CHARS = "+-*/\\^<>=~:.?@#&$"

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+|%[^\n]*|/\*.*?\*/)
  | (?P<int>\d+)
  | (?P<var>[A-Z_][A-Za-z0-9_]*)
  | (?P<name>[a-z][A-Za-z0-9_]*)
  | (?P<qname>'(?:[^'\\]|\\.|'')*')
  | (?P<punct>[()\[\],|!;])
  | (?P<sym>[+\-*/\\^<>=~:.?@\#&$]+)
""", re.VERBOSE | re.DOTALL)


@dataclass
class Token:
    kind: str  # int, var, name, punct, end
    text: str
    line: int
    col: int
    layout_before: bool = False  # whitespace precedes this token


def tokenize(text: str) -> list[Token]:
    toks = []
    pos = 0
    line, line_start = 1, 0
    layout = True
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if not m:
            raise PrologSyntaxError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        s = m.group()
        if kind == "ws":
            layout = True
        elif kind == "sym" and s == "." and (m.end() == n or text[m.end()].isspace()
                                           or text[m.end()] == "%"):
            toks.append(Token("end", ".", line, col, layout))
            layout = False
        elif kind == "sym" and s.endswith(".") and len(s) > 1 and (
                m.end() == n or text[m.end()].isspace()):
            # "X = a=." style: split a trailing end-dot off a symbol run
            toks.append(Token("name", s[:-1], line, col, layout))
            toks.append(Token("end", ".", line, col + len(s) - 1, False))
            layout = False
        else:
            if kind == "qname":
                s = s[1:-1].replace("''", "'").replace("\\'", "'").replace("\\\\", "\\")
                kind = "name"
            elif kind == "sym":
                kind = "name"
            toks.append(Token(kind, s, line, col, layout))
            layout = False
        nl = s.count("\n") if kind == "ws" else m.group().count("\n")
        if nl:
            line += nl
            line_start = pos + m.group().rindex("\n") + 1
        pos = m.end()
    toks.append(Token("eof", "", line, pos - line_start + 1, True))
    return toks


class Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0
        self.varmap: dict[str, Var] = {}
        self.anon = 0

    def peek(self) -> Token:
        return self.toks[self.i]

    def next(self) -> Token:
        t = self.toks[self.i]
        self.i += 1
        return t

    def error(self, msg, tok=None):
        tok = tok or self.peek()
        raise PrologSyntaxError(msg, tok.line, tok.col)

    def expect(self, text):
        t = self.next()
        if t.text != text or t.kind not in ("punct", "end", "name"):
            raise PrologSyntaxError(f"expected {text!r}, got {t.text or 'end of input'!r}",
                                    t.line, t.col)
        return t

    # -- clauses -----------------------------------------------------------

    def read_clause(self):
        if self.peek().kind == "eof":
            return None
        self.varmap = {}
        t = self.parse(1200)
        end = self.peek()
        if end.kind != "end":
            if end.kind == "name" and end.text not in INFIX_OPS:
                self.error(f"unknown operator {end.text!r}")
            self.error("operator expected" if end.kind != "eof" else "missing '.' at end of clause")
        self.next()
        return t

    # -- terms -------------------------------------------------------------

    def parse(self, max_prec):
        left, left_prec = self.parse_primary(max_prec)
        return self.parse_infix(left, left_prec, max_prec)

    def parse_infix(self, left, left_prec, max_prec):
        while True:
            t = self.peek()
            if t.kind == "punct" and t.text in (",", "|", ";"):
                name = "," if t.text == "," else (";" if t.text == ";" else None)
                if name is None:
                    return left
            elif t.kind == "name":
                name = t.text
            else:
                return left
            op = INFIX_OPS.get(name)
            if op is None:
                if t.kind == "name":
                    self.error(f"unknown operator {name!r}")
                return left
            prec, typ = op
            if prec > max_prec:
                return left
            la = prec - 1 if typ[0] == "x" else prec
            ra = prec - 1 if typ[2] == "x" else prec
            if left_prec > la:
                return left
            self.next()
            right = self.parse(ra)
            left = Struct(name, (left, right))
            left_prec = prec

    def parse_primary(self, max_prec):
        t = self.next()
        if t.kind == "int":
            return Int(int(t.text)), 0
        if t.kind == "var":
            if t.text == "_":
                self.anon += 1
                return Var(f"_G{self.anon}"), 0
            v = self.varmap.get(t.text)
            if v is None:
                v = self.varmap[t.text] = Var(t.text)
            return v, 0
        if t.kind == "punct":
            if t.text == "(":
                inner = self.parse(1200)
                self.expect(")")
                return inner, 0
            if t.text == "[":
                return self.parse_list(), 0
            if t.text == "!":
                return Atom("!"), 0
            if t.text == ";":
                return Atom(";"), 0
            self.error(f"unexpected {t.text!r}", t)
        if t.kind == "name":
            name = t.text
            nxt = self.peek()
            if nxt.kind == "punct" and nxt.text == "(" and not nxt.layout_before:
                self.next()
                args = [self.parse(999)]
                while self.peek().text == "," and self.peek().kind == "punct":
                    self.next()
                    args.append(self.parse(999))
                self.expect(")")
                return Struct(name, args), 0
            if name == "-" and nxt.kind == "int" and not nxt.layout_before:
                self.next()
                return Int(-int(nxt.text)), 0
            if name in PREFIX_OPS and not self._at_term_end():
                prec, typ = PREFIX_OPS[name]
                if prec > max_prec:
                    prec = 999
                arg_max = prec - 1 if typ == "fx" else prec
                arg = self.parse(arg_max)
                return Struct(name, (arg,)), prec
            return Atom(name), 0
        if t.kind == "end":
            self.error("unexpected end of clause", t)
        self.error("unexpected end of input", t)

    def _at_term_end(self):
        t = self.peek()
        if t.kind in ("end", "eof"):
            return True
        if t.kind == "punct" and t.text in (")", ",", "|", "]"):
            return True
        return t.kind == "name" and t.text in INFIX_OPS

    def parse_list(self):
        if self.peek().kind == "punct" and self.peek().text == "]":
            self.next()
            return NIL_ATOM
        items = [self.parse(999)]
        while self.peek().kind == "punct" and self.peek().text == ",":
            self.next()
            items.append(self.parse(999))
        tail = NIL_ATOM
        if self.peek().kind == "punct" and self.peek().text == "|":
            self.next()
            tail = self.parse(999)
        self.expect("]")
        return make_list(items, tail)


@dataclass
class SourceClause:
    head: object
    body: list

    @property
    def indicator(self):
        h = self.head
        return (h.name, len(h.args)) if isinstance(h, Struct) else (h.name, 0)


@dataclass
class ParsedProgram:
    clauses: list[SourceClause]
    initialization: list = None


def _flatten_conj(t):
    out = []
    stack = [t]
    while stack:
        x = stack.pop()
        if isinstance(x, Struct) and x.name == "," and len(x.args) == 2:
            stack.append(x.args[1])
            stack.append(x.args[0])
        else:
            out.append(x)
    return out


def _callable(t):
    return isinstance(t, (Atom, Struct))


def parse_term(text: str):
    """Parse a single term (e.g. a query) without a trailing full stop."""
    text = text.strip()
    if not text.endswith("."):
        text += " ."
    p = Parser(text)
    t = p.read_clause()
    if p.peek().kind != "eof":
        p.error("trailing input after term")
    return t


def parse_goal(text: str) -> list:
    return _flatten_conj(parse_term(text))


def parse_program(text: str) -> ParsedProgram:
    p = Parser(text)
    clauses = []
    inits = []
    while True:
        start = p.peek()
        t = p.read_clause()
        if t is None:
            break
        if isinstance(t, Struct) and t.name == ":-" and len(t.args) == 1:
            d = t.args[0]
            if isinstance(d, Struct) and d.name == "initialization" and len(d.args) == 1:
                inits.append(d.args[0])
                continue
            raise PrologSyntaxError("unsupported directive", start.line, start.col)
        if isinstance(t, Struct) and t.name == ":-" and len(t.args) == 2:
            head, body = t.args
            goals = _flatten_conj(body)
        else:
            head, goals = t, []
        if not _callable(head):
            raise PrologSyntaxError("clause head is not callable", start.line, start.col)
        for g in goals:
            if not (_callable(g) or isinstance(g, Var)):
                raise PrologSyntaxError("body goal is not callable", start.line, start.col)
        clauses.append(SourceClause(head, goals))
    return ParsedProgram(clauses, inits)
