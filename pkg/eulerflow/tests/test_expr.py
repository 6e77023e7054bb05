# eulerflow/tests/test_expr.py
import math

import numpy as np
import pytest

from eulerflow.app.errors import (
    ArityError,
    ExprEvaluationError,
    ExprSyntaxError,
    UnknownIdentifierError,
)
from eulerflow.app.expr import (
    Z1,
    Z2,
    Add,
    Constant,
    Div,
    Mul,
    Neg,
    Pow,
    Sub,
    call,
    differentiate,
    evaluate,
    evaluate_lenient,
    evaluate_on,
    parse,
    to_text,
    var,
    variables,
)

NAMES = ("t", "z1", "z2")


def _at(text_or_expr, **env):
    e = parse(text_or_expr) if isinstance(text_or_expr, str) else text_or_expr
    return float(evaluate(e, env))


# ─────────────────────────────
# Parsing and precedence
# ─────────────────────────────
def test_parse_and_evaluate_basic():
    assert _at("z1^2 + 3*sin(t)", z1=2.0, t=0.0) == pytest.approx(4.0)
    assert _at("z2^2/2 - z2^3/3", z2=1.0) == pytest.approx(1 / 6)


def test_unary_minus_binds_looser_than_power():
    assert _at("-z1^2", z1=2.0) == pytest.approx(-4.0)
    assert _at("(-z1)^2", z1=2.0) == pytest.approx(4.0)


def test_power_is_right_associative():
    assert _at("2^3^2") == pytest.approx(512.0)


def test_negative_exponent():
    assert _at("2^-1") == pytest.approx(0.5)
    assert _at("z1^(-2)", z1=2.0) == pytest.approx(0.25)


def test_implicit_multiplication_is_rejected_with_position():
    with pytest.raises(ExprSyntaxError) as exc:
        parse("2z1")
    assert exc.value.position == 1
    assert "position 1" in str(exc.value)


def test_unexpected_end():
    with pytest.raises(ExprSyntaxError) as exc:
        parse("z1 +")
    assert exc.value.position == 4


def test_unbalanced_parenthesis():
    with pytest.raises(ExprSyntaxError):
        parse("(z1 + 1")


def test_unknown_identifier():
    with pytest.raises(UnknownIdentifierError) as exc:
        parse("z1 + bar(2)")
    assert exc.value.name == "bar"
    assert exc.value.position == 5


def test_arity_errors():
    with pytest.raises(ArityError):
        parse("sin")
    with pytest.raises(ArityError):
        parse("sin(z1, z2)")
    with pytest.raises(ArityError):
        parse("z1(2)")


def test_exponent_must_be_constant():
    with pytest.raises(ExprSyntaxError):
        parse("z1^z2")


def test_parse_errors_are_value_errors():
    with pytest.raises(ValueError):
        parse("")


def test_variables():
    assert variables(parse("sin(t)*z1 + 1")) == {"t", "z1"}
    assert variables(parse("1/20")) == frozenset()


def test_operator_overloads_build_trees():
    e = Z1 * 2 + 1
    assert _at(e, z1=3.0) == pytest.approx(7.0)
    assert _at(1 - Z1, z1=3.0) == pytest.approx(-2.0)
    assert _at(Z1**2 / Z2, z1=3.0, z2=2.0) == pytest.approx(4.5)


# ─────────────────────────────
# Printing
# ─────────────────────────────
@pytest.mark.parametrize(
    "text",
    [
        "z1 - (z2 - t)",
        "-(z1 + 1)^2",
        "2^(-1)*z1",
        "sin(z1)/(1 + z2^2)",
        "z1/(z2/t)",
        "3*cos(3*z1)/(2 + 2*z1^2)",
        "-sin(3*z2/2)/4 + sin(4*z2)/2",
    ],
)
def test_printed_text_parses_back(text):
    e = parse(text)
    env = {"t": 0.7, "z1": 0.3, "z2": -1.1}
    again = parse(to_text(e))
    assert float(evaluate(again, env)) == float(evaluate(e, env))


def test_str_is_printed_text():
    assert str(parse("z1 + 2*z2")) == "z1 + 2 * z2"


# ─────────────────────────────
# Differentiation
# ─────────────────────────────
def test_derivative_of_power():
    assert _at(differentiate(parse("z1^3"), "z1"), z1=2.0) == pytest.approx(12.0)


def test_second_derivative():
    d2 = differentiate(parse("sin(2*t)"), "t", order=2)
    assert _at(d2, t=0.4) == pytest.approx(-4.0 * math.sin(0.8))


def test_quotient_rule():
    d = differentiate(parse("1/(1 + z2^2)"), "z2")
    assert _at(d, z2=1.0) == pytest.approx(-0.5)


def test_chain_rule_table():
    cases = {
        "tan(t)": (0.0, 1.0),
        "exp(2*t)": (0.0, 2.0),
        "ln(t)": (2.0, 0.5),
        "sqrt(t)": (4.0, 0.25),
        "tanh(t)": (0.0, 1.0),
        "cosh(t)": (0.0, 0.0),
        "sinh(t)": (0.0, 1.0),
    }
    for text, (t, expected) in cases.items():
        assert _at(differentiate(parse(text), "t"), t=t) == pytest.approx(expected), text


def test_derivative_of_other_variable_is_zero():
    d = differentiate(parse("sin(z1)*t"), "z2")
    assert _at(d, z1=0.3, t=1.0) == 0.0


def test_mixed_partial_matches_finite_difference():
    e = parse("sin(z1*z2) + z1^2*z2")
    d12 = differentiate(differentiate(e, "z1"), "z2")
    h = 1e-4
    z1, z2 = 0.4, -0.7

    def f(a, b):
        return _at(e, z1=a, z2=b)

    fd = (f(z1 + h, z2 + h) - f(z1 + h, z2 - h) - f(z1 - h, z2 + h) + f(z1 - h, z2 - h)) / (
        4 * h * h
    )
    assert _at(d12, z1=z1, z2=z2) == pytest.approx(fd, abs=1e-6)


def test_differentiate_unknown_variable():
    with pytest.raises(UnknownIdentifierError):
        differentiate(parse("z1"), "x")


# ─────────────────────────────
# Evaluation
# ─────────────────────────────
def test_evaluate_arrays():
    out = evaluate(parse("z1*z2"), {"z1": np.array([1.0, 2.0]), "z2": 3.0})
    assert np.allclose(out, [3.0, 6.0])


def test_strict_division_by_zero_names_node():
    with pytest.raises(ExprEvaluationError) as exc:
        evaluate(parse("1 + 1/z1"), {"z1": 0.0})
    assert isinstance(exc.value.node, Div)


@pytest.mark.parametrize(
    "text, z1",
    [("ln(z1)", 0.0), ("sqrt(z1)", -1.0), ("z1^0.5", -1.0), ("z1^(-1)", 0.0)],
)
def test_strict_domain_errors(text, z1):
    with pytest.raises(ExprEvaluationError):
        evaluate(parse(text), {"z1": z1})


def test_lenient_evaluation_returns_non_finite():
    assert math.isinf(float(evaluate_lenient(parse("1/z1"), {"z1": 0.0})))
    assert math.isnan(float(evaluate_lenient(parse("sqrt(z1)"), {"z1": -1.0})))


def test_unbound_variable():
    with pytest.raises(ExprEvaluationError):
        evaluate(parse("z1 + t"), {"z1": 1.0})


def test_evaluate_on_broadcasts_constants():
    out = evaluate_on(parse("2"), {"z1": np.zeros((3, 4))}, (3, 4))
    assert out.shape == (3, 4)
    assert np.all(out == 2.0)


# ─────────────────────────────
# Random expressions
# ─────────────────────────────
def _random_expr(rng, depth):
    """Smooth expressions with bounded values on [-1, 1]^3."""
    if depth == 0 or rng.random() < 0.2:
        if rng.random() < 0.3:
            return Constant(float(np.round(rng.uniform(-1, 1), 3)))
        return var(NAMES[rng.integers(3)])
    kind = rng.integers(9)
    a = _random_expr(rng, depth - 1)
    if kind < 4:
        b = _random_expr(rng, depth - 1)
        if kind == 0:
            return Add(a, b)
        if kind == 1:
            return Sub(a, b)
        if kind == 2:
            return Mul(a, b)
        return Div(a, Add(Constant(2.0), Pow(b, 2.0)))
    if kind == 4:
        return Neg(a)
    if kind == 5:
        return Pow(call("tanh", a), float(rng.integers(2, 4)))
    if kind == 6:
        return call("exp", call("sin", a))
    return call(("sin", "cos", "tanh")[kind - 7], a)


@pytest.fixture
def random_exprs(rng):
    return [_random_expr(rng, 3) for _ in range(40)]


def _points(rng, n=100):
    return {name: rng.uniform(-1, 1, n) for name in NAMES}


def test_derivatives_match_central_differences(random_exprs, rng):
    h = 1e-5
    env = _points(rng)
    for e in random_exprs:
        for name in NAMES:
            exact = evaluate(differentiate(e, name), env)
            up = dict(env, **{name: env[name] + h})
            down = dict(env, **{name: env[name] - h})
            fd = (evaluate(e, up) - evaluate(e, down)) / (2 * h)
            bound = 1e-6 * (1 + np.abs(exact))
            assert np.all(np.abs(exact - fd) <= bound), to_text(e)


def test_printed_text_reparses_to_same_values(random_exprs, rng):
    env = _points(rng)
    for e in random_exprs:
        text = to_text(e)
        again = parse(text)
        assert np.all(np.abs(evaluate(again, env) - evaluate(e, env)) <= 1e-12), text
