"""Arithmetic expressions for user-defined dynamics and costs.

Grammar (lowest to highest precedence)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?          # right associative
    atom   := NUMBER | NAME | NAME '(' expr (',' expr)* ')' | '(' expr ')'

Evaluation works on Python floats and, element-wise, on numpy arrays, so a
parsed expression can be applied to a whole grid of states at once.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

from .errors import ExprEvalError, ExprSyntaxError

__all__ = [
    "Num", "Var", "Neg", "BinOp", "Call", "Expr",
    "parse_expression", "evaluate", "to_source", "free_variables",
    "FUNCTIONS", "CONSTANTS",
]


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


Expr = Union[Num, Var, Neg, BinOp, Call]


def _sgn(x):
    return np.sign(x)


# name -> (callable, min arity, max arity or None)
FUNCTIONS = {
    "sin": (np.sin, 1, 1),
    "cos": (np.cos, 1, 1),
    "tan": (np.tan, 1, 1),
    "exp": (np.exp, 1, 1),
    "log": (np.log, 1, 1),
    "abs": (np.abs, 1, 1),
    "sqrt": (np.sqrt, 1, 1),
    "sgn": (_sgn, 1, 1),
    "min": (None, 1, None),
    "max": (None, 1, None),
}

CONSTANTS = {"pi": math.pi}

_TOKEN_RE = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^(),])"
    r")"
)


def _tokenize(source: str):
    tokens = []
    pos = 0
    n = len(source)
    while pos < n:
        if source[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(source, pos)
        if m is None or m.end() == pos:
            raise ExprSyntaxError(f"unexpected character {source[pos]!r}",
                                  _byte_offset(source, pos), "number, name, operator or parenthesis")
        kind = m.lastgroup
        text = m.group(kind)
        start = m.start(kind)
        tokens.append((kind, text, start))
        pos = m.end()
    tokens.append(("end", "", n))
    return tokens


def _byte_offset(source, char_pos):
    return len(source[:char_pos].encode("utf-8"))


class _Parser:
    def __init__(self, source):
        self.source = source
        self.tokens = _tokenize(source)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, message, tok, expected):
        raise ExprSyntaxError(message, _byte_offset(self.source, tok[2]), expected)

    def expect(self, text):
        tok = self.peek()
        if tok[0] != "op" or tok[1] != text:
            found = tok[1] or "end of input"
            self.error(f"unexpected {found!r}", tok, repr(text))
        return self.advance()

    def parse(self):
        node = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            self.error(f"unexpected {tok[1]!r}", tok, "operator or end of input")
        return node

    def expr(self):
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.advance()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.advance()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "^":
            self.advance()
            return BinOp("^", base, self.unary())
        return base

    def atom(self):
        tok = self.advance()
        kind, text, _ = tok
        if kind == "num":
            value = float(text)
            if not math.isfinite(value):
                self.error("numeric literal overflows double precision", tok, None)
            return Num(value)
        if kind == "name":
            nxt = self.peek()
            if nxt[0] == "op" and nxt[1] == "(":
                if text not in FUNCTIONS:
                    self.error(f"unknown function {text!r}", tok, "one of " + ", ".join(sorted(FUNCTIONS)))
                self.advance()
                args = [self.expr()]
                while self.peek()[0] == "op" and self.peek()[1] == ",":
                    self.advance()
                    args.append(self.expr())
                self.expect(")")
                _, lo, hi = FUNCTIONS[text]
                if len(args) < lo or (hi is not None and len(args) > hi):
                    self.error(f"{text} takes {lo if hi == lo else f'at least {lo}'} argument(s), got {len(args)}",
                               tok, None)
                return Call(text, tuple(args))
            return Var(text)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = text or "end of input"
        self.error(f"unexpected {found!r}", tok, "number, name or '('")


def parse_expression(source: str) -> Expr:
    """Parse ``source`` into an immutable expression tree."""
    if not isinstance(source, str) or not source.strip():
        raise ExprSyntaxError("empty expression", 0, "an expression")
    return _Parser(source).parse()


def to_source(expr: Expr) -> str:
    """Fully parenthesised source text; re-parsing yields an identical tree."""
    if isinstance(expr, Num):
        return repr(float(expr.value))
    if isinstance(expr, Var):
        return expr.name
    if isinstance(expr, Neg):
        return f"(-{to_source(expr.operand)})"
    if isinstance(expr, BinOp):
        return f"({to_source(expr.left)} {expr.op} {to_source(expr.right)})"
    if isinstance(expr, Call):
        return f"{expr.name}({', '.join(to_source(a) for a in expr.args)})"
    raise TypeError(f"not an expression node: {expr!r}")


def free_variables(expr: Expr) -> set:
    if isinstance(expr, Var):
        return {expr.name}
    if isinstance(expr, Num):
        return set()
    if isinstance(expr, Neg):
        return free_variables(expr.operand)
    if isinstance(expr, BinOp):
        return free_variables(expr.left) | free_variables(expr.right)
    return set().union(*(free_variables(a) for a in expr.args))


def _domain_check(ok, message):
    if not np.all(ok):
        raise ExprEvalError(message)


def evaluate(expr: Expr, env: Mapping[str, object]):
    """Evaluate ``expr`` with variables bound by ``env``.

    Values may be floats or numpy arrays (broadcast element-wise). Domain
    errors raise :class:`ExprEvalError` instead of producing NaN.
    """
    with np.errstate(all="ignore"):
        out = _eval(expr, env)
    if isinstance(out, np.ndarray):
        return out
    return float(out)


def _eval(expr, env):
    if isinstance(expr, Num):
        return expr.value
    if isinstance(expr, Var):
        if expr.name in env:
            return env[expr.name]
        if expr.name in CONSTANTS:
            return CONSTANTS[expr.name]
        raise ExprEvalError(f"unbound variable {expr.name!r}")
    if isinstance(expr, Neg):
        return -_eval(expr.operand, env)
    if isinstance(expr, BinOp):
        a = _eval(expr.left, env)
        b = _eval(expr.right, env)
        op = expr.op
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            _domain_check(np.asarray(b) != 0, "division by zero")
            return a / b
        out = np.power(np.asarray(a, dtype=float), b)
        _domain_check(np.isfinite(out) | ~np.isfinite(np.asarray(a, dtype=float)),
                      "power undefined (negative base with fractional exponent or 0 to a negative power)")
        return out if np.ndim(out) else float(out)
    if isinstance(expr, Call):
        args = [_eval(a, env) for a in expr.args]
        name = expr.name
        if name == "min":
            return _reduce(np.minimum, args)
        if name == "max":
            return _reduce(np.maximum, args)
        (x,) = args
        if name == "log":
            _domain_check(np.asarray(x) > 0, "log of a nonpositive number")
        elif name == "sqrt":
            _domain_check(np.asarray(x) >= 0, "sqrt of a negative number")
        out = FUNCTIONS[name][0](x)
        return out if np.ndim(out) else float(out)
    raise TypeError(f"not an expression node: {expr!r}")


def _reduce(fn, args):
    out = args[0]
    for a in args[1:]:
        out = fn(out, a)
    return out if np.ndim(out) else float(out)
