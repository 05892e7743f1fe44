"""Random program and query generator for differential testing.

Predicates ``p0 .. pN`` may only call predicates with a smaller index (plus
the fixed list predicates below), so every generated program terminates.
"""

import random

LIBRARY = """
app([], L, L).
app([H|T], L, [H|R]) :- app(T, L, R).
len([], 0).
len([_|T], N) :- len(T, M), N is M + 1.
mem(X, [X|_]).
mem(X, [_|T]) :- mem(X, T).
sum([], 0).
sum([X|Xs], S) :- sum(Xs, S0), S is S0 + X.
"""

ATOMS = ["a", "b", "c", "[]"]


class Gen:
    def __init__(self, seed):
        self.r = random.Random(seed)

    def term(self, vars_, depth):
        r = self.r
        k = r.random()
        if depth <= 0 or k < 0.35:
            if vars_ and r.random() < 0.5:
                return r.choice(vars_)
            if r.random() < 0.5:
                return r.choice(ATOMS)
            return str(r.randint(-3, 5))
        if k < 0.6:
            items = [self.term(vars_, depth - 1) for _ in range(r.randint(1, 3))]
            if r.random() < 0.3 and vars_:
                return "[" + ",".join(items) + "|" + r.choice(vars_) + "]"
            return "[" + ",".join(items) + "]"
        if k < 0.8:
            return f"f({self.term(vars_, depth - 1)})"
        return f"g({self.term(vars_, depth - 1)},{self.term(vars_, depth - 1)})"

    def int_expr(self, ivars):
        r = self.r
        if ivars and r.random() < 0.6:
            a = r.choice(ivars)
        else:
            a = str(r.randint(0, 4))
        if r.random() < 0.5:
            return a
        op = r.choice(["+", "-", "*"])
        return f"{a} {op} {r.randint(1, 3)}"

    def program(self, npreds=4):
        r = self.r
        arities = [r.randint(0, 3) for _ in range(npreds)]
        clauses = []
        for i, n in enumerate(arities):
            for _ in range(r.randint(1, 4)):
                vars_ = [f"V{j}" for j in range(r.randint(1, 4))]
                head_args = [self.term(vars_, 2) for _ in range(n)]
                body = []
                ivars = []
                for _ in range(r.randint(0, 3)):
                    k = r.random()
                    if k < 0.4 and i > 0:
                        j = r.randrange(i)
                        body.append(self.call(j, arities[j], vars_))
                    elif k < 0.5:
                        v = r.choice(vars_)
                        others = [w for w in vars_ if w != v]
                        body.append(f"{v} = {self.term(others, 2)}")
                    elif k < 0.6:
                        v = f"I{len(ivars)}"
                        body.append(f"{v} is {self.int_expr(ivars)}")
                        ivars.append(v)
                    elif k < 0.7 and ivars:
                        op = r.choice(["<", ">", "=<", ">=", "=:=", "=\\="])
                        body.append(f"{self.int_expr(ivars)} {op} {self.int_expr(ivars)}")
                    elif k < 0.78:
                        body.append("!")
                    elif k < 0.85:
                        lst = "[" + ",".join(str(r.randint(0, 5)) for _ in range(r.randint(0, 4))) + "]"
                        body.append(r.choice([f"len({lst}, {r.choice(vars_)})",
                                              f"mem({r.choice(vars_)}, {lst})",
                                              f"app({r.choice(vars_)}, {r.choice(vars_)}, {lst})",
                                              f"sum({lst}, {r.choice(vars_)})"]))
                    elif k < 0.88:
                        body.append("fail")
                    else:
                        body.append("true")
                head = f"p{i}({','.join(head_args)})" if n else f"p{i}"
                clauses.append(head + (" :- " + ", ".join(body) if body else "") + ".")
        self.arities = arities
        return LIBRARY + "\n".join(clauses) + "\n"

    def call(self, j, n, vars_):
        args = [self.term(vars_, 1) for _ in range(n)]
        return f"p{j}({','.join(args)})" if n else f"p{j}"

    def query(self):
        r = self.r
        j = r.randrange(len(self.arities))
        vars_ = ["X", "Y", "Z"]
        goals = [self.call(j, self.arities[j], vars_)]
        if r.random() < 0.3:
            k = r.randrange(len(self.arities))
            goals.append(self.call(k, self.arities[k], vars_))
        return ", ".join(goals)
