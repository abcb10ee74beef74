"""
A small arithmetic language for scalar symbols f(t, x, xi).

Grammar::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := ("-" | "+") unary | power
    power  := atom ("^" unary)?          right associative
    atom   := NUMBER | NAME | NAME "(" expr ("," expr)* ")" | "(" expr ")"

Variables are ``t``, ``x``, ``xi`` (``ξ`` is accepted), constants ``pi``
and ``e``.  Functions: exp, tanh, sin, cos, abs (one argument) and min,
max (two arguments).  Parsing builds a tree of closures over numpy; no
Python code is ever evaluated.
"""
from __future__ import annotations

import re
from typing import Callable

import numpy as np

_TOKEN = re.compile(r"\s*(?:(\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)|([A-Za-z_ξ]\w*)"
                    r"|(\*\*|[-+*/^(),]))")

FUNCTIONS = {"exp": (np.exp, 1), "tanh": (np.tanh, 1), "sin": (np.sin, 1), "cos": (np.cos, 1),
             "abs": (np.abs, 1), "min": (np.minimum, 2), "max": (np.maximum, 2)}
CONSTANTS = {"pi": np.pi, "e": np.e}
VARIABLES = {"t": 0, "x": 1, "xi": 2, "ξ": 2}


class ExprError(ValueError):
    """Malformed symbol expression; ``pos`` is the character offset."""

    def __init__(self, msg: str, src: str, pos: int):
        super().__init__(f"{msg} at position {pos}: {src!r}")
        self.pos = pos


def _tokenize(src: str) -> list[tuple[str, str, int]]:
    out, pos = [], 0
    while pos < len(src):
        if src[pos:].strip() == "":
            break
        m = _TOKEN.match(src, pos)
        if not m:
            raise ExprError(f"unexpected character {src[pos:].lstrip()[0]!r}", src,
                            len(src) - len(src[pos:].lstrip()))
        start = m.start(m.lastindex)
        kind = ("num", "name", "op")[m.lastindex - 1]
        tok = m.group(m.lastindex)
        out.append((kind, "^" if tok == "**" else tok, start))
        pos = m.end()
    out.append(("end", "", len(src)))
    return out


class _Parser:
    def __init__(self, src: str):
        self.src = src
        self.toks = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self, value=None):
        tok = self.toks[self.i]
        if value is not None and tok[1] != value:
            found = tok[1] or "end of input"
            raise ExprError(f"expected {value!r}, found {found!r}", self.src, tok[2])
        self.i += 1
        return tok

    def parse(self):
        node = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise ExprError(f"unexpected {tok[1]!r}", self.src, tok[2])
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            a, b = node, self.term()
            node = (lambda a, b: lambda v: a(v) + b(v))(a, b) if op == "+" else \
                   (lambda a, b: lambda v: a(v) - b(v))(a, b)
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            a, b = node, self.unary()
            node = (lambda a, b: lambda v: a(v) * b(v))(a, b) if op == "*" else \
                   (lambda a, b: lambda v: a(v) / b(v))(a, b)
        return node

    def unary(self):
        if self.peek()[1] == "-":
            self.take()
            a = self.unary()
            return lambda v: -a(v)
        if self.peek()[1] == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] == "^":
            self.take()
            ex = self.unary()
            return lambda v: np.power(base(v), ex(v))
        return base

    def atom(self):
        kind, val, pos = self.peek()
        if kind == "num":
            self.take()
            c = float(val)
            return lambda v: c
        if val == "(":
            self.take()
            node = self.expr()
            self.take(")")
            return node
        if kind == "name":
            self.take()
            if self.peek()[1] == "(":
                if val not in FUNCTIONS:
                    raise ExprError(f"unknown function {val!r}", self.src, pos)
                fn, arity = FUNCTIONS[val]
                self.take("(")
                args = [self.expr()]
                while self.peek()[1] == ",":
                    self.take()
                    args.append(self.expr())
                self.take(")")
                if len(args) != arity:
                    raise ExprError(f"{val} takes {arity} argument(s), got {len(args)}",
                                    self.src, pos)
                return lambda v: fn(*(a(v) for a in args))
            if val in VARIABLES:
                k = VARIABLES[val]
                return lambda v: v[k]
            if val in CONSTANTS:
                c = CONSTANTS[val]
                return lambda v: c
            raise ExprError(f"unknown name {val!r}", self.src, pos)
        raise ExprError(f"unexpected {val or 'end of input'!r}", self.src, pos)


def parse_symbol(src: str) -> Callable:
    """Compile an expression into a vectorized callback f(t, x, xi)."""
    if not isinstance(src, str) or not src.strip():
        raise ExprError("empty expression", str(src), 0)
    node = _Parser(src).parse()

    def f(t, x, xi):
        t, x, xi = np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float),
                                       np.asarray(xi, float))
        with np.errstate(all="ignore"):
            out = node((t, x, xi))
        return np.broadcast_to(np.asarray(out, dtype=float), x.shape).copy()
    f.__doc__ = src
    return f
