import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from occlp.errors import ExprEvalError, ExprSyntaxError
from occlp.expr import BinOp, Call, Neg, Num, Var, evaluate, free_variables, parse_expression, to_source


# ---------------------------------------------------------------------------
# oracle: a character-level recursive-descent evaluator using only math


class Oracle:
    FUN = {"sin": math.sin, "cos": math.cos, "tan": math.tan, "exp": math.exp, "abs": abs,
           "log": math.log, "sqrt": math.sqrt, "sgn": lambda x: (x > 0) - (x < 0)}

    def __init__(self, text, env):
        self.s = text.replace(" ", "")
        self.p = 0
        self.env = dict(env, pi=math.pi)

    def run(self):
        v = self.sum()
        assert self.p == len(self.s), self.s[self.p:]
        return v

    def peek(self):
        return self.s[self.p] if self.p < len(self.s) else ""

    def sum(self):
        v = self.product()
        while self.peek() in ("+", "-"):
            op = self.s[self.p]
            self.p += 1
            w = self.product()
            v = v + w if op == "+" else v - w
        return v

    def product(self):
        v = self.negation()
        while self.peek() in ("*", "/"):
            op = self.s[self.p]
            self.p += 1
            w = self.negation()
            v = v * w if op == "*" else v / w
        return v

    def negation(self):
        if self.peek() == "-":
            self.p += 1
            return -self.negation()
        base = self.primary()
        if self.peek() == "^":
            self.p += 1
            return base ** self.negation()
        return base

    def primary(self):
        c = self.peek()
        if c == "(":
            self.p += 1
            v = self.sum()
            assert self.s[self.p] == ")"
            self.p += 1
            return v
        start = self.p
        if c.isdigit() or c == ".":
            while self.peek() and (self.peek().isdigit() or self.peek() in ".eE" or
                                   (self.peek() in "+-" and self.s[self.p - 1] in "eE")):
                self.p += 1
            return float(self.s[start:self.p])
        while self.peek().isalnum() or self.peek() == "_":
            self.p += 1
        name = self.s[start:self.p]
        if self.peek() != "(":
            return self.env[name]
        self.p += 1
        args = [self.sum()]
        while self.peek() == ",":
            self.p += 1
            args.append(self.sum())
        assert self.s[self.p] == ")"
        self.p += 1
        if name == "min":
            return min(args)
        if name == "max":
            return max(args)
        return self.FUN[name](args[0])


def random_expression(rng, depth):
    """Random source text whose evaluation stays in every function's domain."""
    if depth == 0 or rng.random() < 0.25:
        return rng.choice(["x", "y", "z", "pi", f"{rng.uniform(-3, 3):.6g}", str(rng.randint(0, 9))])
    sub = lambda: random_expression(rng, depth - 1)  # noqa: E731
    kind = rng.randrange(10)
    if kind < 4:
        return f"({sub()} {rng.choice('+-*')} {sub()})"
    if kind == 4:
        return f"({sub()} / (1.5 + abs({sub()})))"
    if kind == 5:
        return f"-{sub()}"
    if kind == 6:
        return f"(1 + abs({sub()}))^{rng.choice(['2', '0.5', '-1', '3'])}"
    if kind == 7:
        f = rng.choice(["sin", "cos", "abs", "sgn"])
        return f"{f}({sub()})"
    if kind == 8:
        f = rng.choice(["sqrt(abs({}))", "log(1 + abs({}))", "exp(-abs({}))", "tan(0.5*sin({}))"])
        return f.format(sub())
    return f"{rng.choice(['min', 'max'])}({', '.join(sub() for _ in range(rng.randint(1, 3)))})"


def test_oracle_agreement_on_random_expressions():
    rng = random.Random(20240601)
    worst = 0.0
    for _ in range(200):
        src = random_expression(rng, 4)
        env = {"x": rng.uniform(-2, 2), "y": rng.uniform(-2, 2), "z": rng.uniform(-2, 2)}
        want = Oracle(src, env).run()
        got = evaluate(parse_expression(src), env)
        worst = max(worst, abs(got - want) / max(1.0, abs(want)))
    assert worst <= 1e-12


# ---------------------------------------------------------------------------
# worked examples


def test_rotation_cost_at_equilibrium():
    e = parse_expression("1 - 2*r*cos(th) + r^2")
    assert evaluate(e, {"r": 1.0, "th": 0.0}) == 0.0


def test_zero_expression():
    assert evaluate(parse_expression("0"), {}) == 0.0
    assert evaluate(parse_expression("0"), {"a": 5.0}) == 0.0


def test_cartesian_dynamics_entry():
    assert evaluate(parse_expression("y2*u"), {"y2": 0.5, "u": -1.0}) == -0.5


def test_eta_at_symmetry_point_and_boundary():
    assert evaluate(parse_expression("abs(th - sin(th))"), {"th": 0.0}) == 0.0
    v = evaluate(parse_expression("2*r*abs(th - sin(th))"), {"r": 1.0, "th": math.pi})
    assert v == pytest.approx(2 * math.pi, abs=1e-15)


def test_sgn_of_zero():
    assert evaluate(parse_expression("sgn(x)"), {"x": 0.0}) == 0.0
    assert evaluate(parse_expression("sgn(x)"), {"x": -3.0}) == -1.0


def test_vectorized_evaluation():
    x = np.linspace(-1, 1, 7)
    out = evaluate(parse_expression("x^2 + 1"), {"x": x})
    np.testing.assert_allclose(out, x ** 2 + 1)


# ---------------------------------------------------------------------------
# precedence and associativity


def test_precedence_table():
    cases = {"-2^2": -4.0, "2^3^2": 512.0, "2^-1": 0.5, "8/4/2": 1.0, "5-3-1": 1.0, "2*3+4": 10.0,
             "2+3*4": 14.0, "-3*-2": 6.0, "(1+2)*3": 9.0}
    for src, want in cases.items():
        assert evaluate(parse_expression(src), {}) == want, src


def test_tree_shapes():
    assert parse_expression("a-b-c") == BinOp("-", BinOp("-", Var("a"), Var("b")), Var("c"))
    assert parse_expression("a^b^c") == BinOp("^", Var("a"), BinOp("^", Var("b"), Var("c")))
    assert parse_expression("-a^2") == Neg(BinOp("^", Var("a"), Num(2.0)))
    assert parse_expression("max(a, 1)") == Call("max", (Var("a"), Num(1.0)))


finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False)


@given(finite, finite, finite)
def test_sum_binds_looser_than_product(a, b, c):
    assert evaluate(parse_expression("a+b*c"), {"a": a, "b": b, "c": c}) == a + (b * c)


# ---------------------------------------------------------------------------
# round trip


@settings(max_examples=150, deadline=None)
@given(st.integers(min_value=0, max_value=2 ** 31))
def test_round_trip(seed):
    src = random_expression(random.Random(seed), 4)
    tree = parse_expression(src)
    assert parse_expression(to_source(tree)) == tree


def test_round_trip_preserves_float_literals():
    tree = parse_expression("0.1 + 1e-300 * 123456.789")
    assert parse_expression(to_source(tree)) == tree


def test_free_variables_lists_every_name():
    assert free_variables(parse_expression("r*cos(th) + pi")) == {"r", "th", "pi"}


# ---------------------------------------------------------------------------
# errors


@pytest.mark.parametrize("src, offset", [("1 +", 3), ("(1", 2), ("2 * * 3", 4), ("1 $ 2", 2), ("", 0)])
def test_syntax_error_offsets(src, offset):
    with pytest.raises(ExprSyntaxError) as info:
        parse_expression(src)
    assert info.value.offset == offset


def test_syntax_error_on_non_ascii_character():
    with pytest.raises(ExprSyntaxError) as info:
        parse_expression("1 + é")
    assert info.value.offset == 4


def test_unknown_function():
    with pytest.raises(ExprSyntaxError, match="unknown function"):
        parse_expression("foo(1)")


def test_arity():
    with pytest.raises(ExprSyntaxError):
        parse_expression("sin(1, 2)")


def test_unbound_variable():
    with pytest.raises(ExprEvalError, match="unbound"):
        evaluate(parse_expression("x + 1"), {})


@pytest.mark.parametrize("src, env", [("log(x)", {"x": 0.0}), ("sqrt(x)", {"x": -1.0}), ("1/x", {"x": 0.0}),
                                      ("x^0.5", {"x": -2.0}), ("log(x)", {"x": np.array([1.0, -1.0])})])
def test_domain_errors_raise(src, env):
    with pytest.raises(ExprEvalError):
        evaluate(parse_expression(src), env)


def test_evaluation_is_side_effect_free():
    tree = parse_expression("x*y + sin(x)")
    env = {"x": 0.3, "y": -1.2}
    first = evaluate(tree, env)
    assert evaluate(tree, env) == first
    assert env == {"x": 0.3, "y": -1.2}
