"""A small expression language for scalar fields on the plane.

Expressions are parsed by a recursive-descent parser into an immutable tree
that can be printed back, differentiated symbolically, substituted into and
compiled to Python callables (scalar ``math`` and vectorised ``numpy``
flavours).

Grammar::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?
    atom   := NUMBER | NAME | FUNC '(' expr ')' | '(' expr ')'

>>> e = parse("x^2 + sin(y)")
>>> str(diff(e, "x"))
'2 * x'
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ExpressionError

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt", "tanh", "cbrt")
CONSTANTS = {"pi": math.pi, "e": math.e}
VARIABLES = ("x", "y", "t")

_TOKEN = re.compile(r"\s*(?:(?P<num>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))")


class Node:
    __slots__ = ()

    def __str__(self):
        return _fmt(self, 0)

    def __repr__(self):
        return f"Expr({_fmt(self, 0)!r})"


@dataclass(frozen=True, repr=False)
class Num(Node):
    value: float


@dataclass(frozen=True, repr=False)
class Var(Node):
    name: str


@dataclass(frozen=True, repr=False)
class Neg(Node):
    arg: Node


@dataclass(frozen=True, repr=False)
class Bin(Node):
    op: str
    left: Node
    right: Node


@dataclass(frozen=True, repr=False)
class Call(Node):
    func: str
    arg: Node


# --- parsing ---------------------------------------------------------------

def _tokenize(text):
    pos, out = 0, []
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ExpressionError(f"unexpected character {text[pos]!r} at position {pos} in {text!r}")
        kind = m.lastgroup
        out.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    return out


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None, len(self.text))

    def take(self):
        tok = self.peek()
        self.i += 1
        return tok

    def expect(self, value):
        kind, val, pos = self.take()
        if val != value:
            raise ExpressionError(f"expected {value!r} at position {pos} in {self.text!r}")

    def parse(self):
        node = self.expr()
        kind, val, pos = self.peek()
        if kind is not None:
            raise ExpressionError(f"unexpected {val!r} at position {pos} in {self.text!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            node = Bin(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            node = Bin(op, node, self.unary())
        return node

    def unary(self):
        if self.peek()[1] == "-":
            self.take()
            return Neg(self.unary())
        if self.peek()[1] == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] == "^":
            self.take()
            return Bin("^", base, self.unary())
        return base

    def atom(self):
        kind, val, pos = self.take()
        if kind == "num":
            return Num(float(val))
        if kind == "name":
            if val in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(val, arg)
            if val in CONSTANTS:
                return Num(CONSTANTS[val])
            if val in VARIABLES:
                return Var(val)
            raise ExpressionError(f"unknown name {val!r} at position {pos} in {self.text!r}")
        if val == "(":
            node = self.expr()
            self.expect(")")
            return node
        if kind is None:
            raise ExpressionError(f"unexpected end of expression {self.text!r}")
        raise ExpressionError(f"unexpected {val!r} at position {pos} in {self.text!r}")


def parse(text) -> Node:
    """Parse ``text`` (or pass through an already-parsed node or a number)."""
    if isinstance(text, Node):
        return text
    if isinstance(text, (int, float)):
        return Num(float(text))
    if not isinstance(text, str) or not text.strip():
        raise ExpressionError(f"empty or non-string expression: {text!r}")
    return _Parser(text).parse()


# --- printing --------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


def _fmt(node, parent_prec):
    if isinstance(node, Num):
        s = repr(node.value)
        if s.endswith(".0"):
            s = s[:-2]
        if node.value < 0 or "e" in s or "inf" in s or "nan" in s:
            return f"({s})" if node.value < 0 else s
        return s
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Call):
        return f"{node.func}({_fmt(node.arg, 0)})"
    if isinstance(node, Neg):
        s = "-" + _fmt(node.arg, 3)
        return f"({s})" if parent_prec >= 3 else s
    prec = _PREC[node.op]
    if node.op == "^":
        s = f"{_fmt(node.left, prec + 1)}^{_fmt(node.right, prec)}"
    else:
        # right operand of - and / needs parentheses at equal precedence
        rp = prec + 1 if node.op in ("-", "/") else prec
        s = f"{_fmt(node.left, prec)} {node.op} {_fmt(node.right, rp)}"
    return f"({s})" if prec < parent_prec else s


# --- algebra ---------------------------------------------------------------

def _num(node, value):
    return isinstance(node, Num) and node.value == value


def add(a, b):
    if _num(a, 0.0):
        return b
    if _num(b, 0.0):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value + b.value)
    return Bin("+", a, b)


def sub(a, b):
    if _num(b, 0.0):
        return a
    if _num(a, 0.0):
        return neg(b)
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value - b.value)
    return Bin("-", a, b)


def mul(a, b):
    if _num(a, 0.0) or _num(b, 0.0):
        return Num(0.0)
    if _num(a, 1.0):
        return b
    if _num(b, 1.0):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value * b.value)
    return Bin("*", a, b)


def div(a, b):
    if _num(a, 0.0):
        return Num(0.0)
    if _num(b, 1.0):
        return a
    return Bin("/", a, b)


def neg(a):
    if isinstance(a, Num):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def power(a, b):
    if _num(b, 1.0):
        return a
    if _num(b, 0.0):
        return Num(1.0)
    return Bin("^", a, b)


def diff(node, var) -> Node:
    """Symbolic derivative of ``node`` with respect to variable ``var``."""
    node = parse(node)
    if isinstance(node, Num):
        return Num(0.0)
    if isinstance(node, Var):
        return Num(1.0 if node.name == var else 0.0)
    if isinstance(node, Neg):
        return neg(diff(node.arg, var))
    if isinstance(node, Call):
        u, du = node.arg, diff(node.arg, var)
        if _num(du, 0.0):
            return Num(0.0)
        outer = {
            "sin": lambda: Call("cos", u),
            "cos": lambda: neg(Call("sin", u)),
            "exp": lambda: node,
            "log": lambda: div(Num(1.0), u),
            "sqrt": lambda: div(Num(0.5), node),
            "tanh": lambda: sub(Num(1.0), power(node, Num(2.0))),
            "cbrt": lambda: div(Num(1.0 / 3.0), power(node, Num(2.0))),
        }[node.func]()
        return mul(outer, du)
    a, b = node.left, node.right
    da, db = diff(a, var), diff(b, var)
    if node.op == "+":
        return add(da, db)
    if node.op == "-":
        return sub(da, db)
    if node.op == "*":
        return add(mul(da, b), mul(a, db))
    if node.op == "/":
        return div(sub(mul(da, b), mul(a, db)), power(b, Num(2.0)))
    # a ^ b
    if isinstance(b, Num):
        return mul(mul(b, power(a, Num(b.value - 1.0))), da)
    # general exponent: d(a^b) = a^b (b' log a + b a'/a)
    return mul(node, add(mul(db, Call("log", a)), div(mul(b, da), a)))


def substitute(node, mapping) -> Node:
    """Replace variables by expressions; ``mapping`` maps names to nodes/strings."""
    node = parse(node)
    mapping = {k: parse(v) for k, v in mapping.items()}

    def go(n):
        if isinstance(n, Var):
            return mapping.get(n.name, n)
        if isinstance(n, Num):
            return n
        if isinstance(n, Neg):
            return Neg(go(n.arg))
        if isinstance(n, Call):
            return Call(n.func, go(n.arg))
        return Bin(n.op, go(n.left), go(n.right))

    return go(node)


def free_variables(node):
    node = parse(node)
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Num):
        return set()
    if isinstance(node, (Neg, Call)):
        return free_variables(node.arg)
    return free_variables(node.left) | free_variables(node.right)


# --- compilation -----------------------------------------------------------

def _src(node, lib):
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(-{_src(node.arg, lib)})"
    if isinstance(node, Call):
        if node.func == "cbrt" and lib == "math":
            return f"_cbrt({_src(node.arg, lib)})"
        return f"{lib}.{node.func}({_src(node.arg, lib)})"
    op = "**" if node.op == "^" else node.op
    return f"({_src(node.left, lib)} {op} {_src(node.right, lib)})"


def _cbrt(v):
    return math.copysign(abs(v) ** (1.0 / 3.0), v)


@lru_cache(maxsize=512)
def _compile(node, vectorized):
    lib = "np" if vectorized else "math"
    body = _src(node, lib)
    if vectorized and not free_variables(node):
        # constants must still broadcast against the inputs
        body = f"({body}) + 0.0 * (x + y + t)"
    code = f"lambda x, y, t=0.0: {body}"
    return eval(code, {"math": math, "np": np, "_cbrt": _cbrt})  # noqa: S307 - source is generated from a parsed tree


def compile_scalar(node):
    """Fast callable ``(x, y, t=0) -> float`` for scalar inputs."""
    return _compile(parse(node), False)


def compile_vector(node):
    """Broadcasting callable ``(x, y, t=0) -> ndarray`` on numpy arrays."""
    fn = _compile(parse(node), True)

    def wrapped(x, y, t=0.0):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        with np.errstate(all="ignore"):
            return np.broadcast_to(fn(x, y, t), np.broadcast(x, y).shape).astype(float)

    return wrapped
