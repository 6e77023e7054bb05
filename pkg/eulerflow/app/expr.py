# eulerflow/app/expr.py
"""
Expression DSL for the arbitrary functions of t, z1, z2 that parametrise the
solution families.

    parse("z2^2/2 - z2^3/3")      -> Expr
    differentiate(e, "z2")        -> Expr (exact, lightly folded)
    evaluate(e, {"z2": 0.5})      -> float (strict: domain errors raise)
    evaluate_lenient(e, env)      -> float | ndarray, nan/inf where undefined

Grammar (``^`` binds tighter than unary minus, no implicit multiplication):

    expr     := term (('+'|'-') term)*
    term     := factor (('*'|'/') factor)*
    factor   := '-' factor | power
    power    := base ('^' factor)?
    base     := number | ident | ident '(' expr ')' | '(' expr ')'
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import singledispatch, singledispatchmethod
from typing import Any, Callable, Dict, FrozenSet, List, Mapping, NamedTuple, Union

import numpy as np

from .errors import (
    ArityError,
    ExprError,
    ExprEvaluationError,
    ExprSyntaxError,
    UnknownIdentifierError,
)

VARIABLES = ("t", "z1", "z2")

Number = Union[float, np.ndarray]


class Expr:
    """Immutable expression node. Arithmetic operators build new trees."""

    def __add__(self, other: Any) -> "Expr":
        return Add(self, as_expr(other))

    def __radd__(self, other: Any) -> "Expr":
        return Add(as_expr(other), self)

    def __sub__(self, other: Any) -> "Expr":
        return Sub(self, as_expr(other))

    def __rsub__(self, other: Any) -> "Expr":
        return Sub(as_expr(other), self)

    def __mul__(self, other: Any) -> "Expr":
        return Mul(self, as_expr(other))

    def __rmul__(self, other: Any) -> "Expr":
        return Mul(as_expr(other), self)

    def __truediv__(self, other: Any) -> "Expr":
        return Div(self, as_expr(other))

    def __rtruediv__(self, other: Any) -> "Expr":
        return Div(as_expr(other), self)

    def __pow__(self, exponent: float) -> "Expr":
        return Pow(self, float(exponent))

    def __neg__(self) -> "Expr":
        return Neg(self)

    def __str__(self) -> str:
        return to_text(self)


@dataclass(frozen=True)
class Constant(Expr):
    value: float


@dataclass(frozen=True)
class Variable(Expr):
    name: str


@dataclass(frozen=True)
class Add(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Sub(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Mul(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Div(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Neg(Expr):
    operand: Expr


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: float


@dataclass(frozen=True)
class Call(Expr):
    name: str
    arg: Expr


FUNCTIONS: Dict[str, Callable[[Number], Number]] = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "ln": np.log,
    "sinh": np.sinh,
    "cosh": np.cosh,
    "tanh": np.tanh,
    "sqrt": np.sqrt,
}

ZERO = Constant(0.0)
ONE = Constant(1.0)


def as_expr(value: Any) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, (int, float, np.floating, np.integer)) and not isinstance(value, bool):
        return Constant(float(value))
    if isinstance(value, str):
        return parse(value)
    raise TypeError(f"cannot build an expression from {type(value).__name__}")


def var(name: str) -> Variable:
    if name not in VARIABLES:
        raise UnknownIdentifierError(name, 0, name)
    return Variable(name)


def call(name: str, arg: Any) -> Call:
    if name not in FUNCTIONS:
        raise UnknownIdentifierError(name, 0, name)
    return Call(name, as_expr(arg))


def sin(arg: Any) -> Call:
    return call("sin", arg)


def cos(arg: Any) -> Call:
    return call("cos", arg)


def exp(arg: Any) -> Call:
    return call("exp", arg)


T, Z1, Z2 = Variable("t"), Variable("z1"), Variable("z2")


# ──────────────────────────
# Tokenizer / parser
# ──────────────────────────
class Token(NamedTuple):
    kind: str  # "num" | "ident" | "op" | "end"
    text: str
    pos: int


_TOKEN_RE = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),])"
    r")"
)


def tokenize(text: str) -> List[Token]:
    tokens: List[Token] = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            bad = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ExprSyntaxError(f"unexpected character '{text[bad]}'", bad, text)
        kind = m.lastgroup or "op"
        tokens.append(Token(kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(Token("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = tokenize(text)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def _advance(self) -> Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def _error(self, message: str, tok: Token | None = None) -> ExprSyntaxError:
        tok = tok or self.tok
        return ExprSyntaxError(message, tok.pos, self.text)

    def _expect(self, op: str) -> Token:
        if self.tok.kind == "op" and self.tok.text == op:
            return self._advance()
        found = "end of input" if self.tok.kind == "end" else f"'{self.tok.text}'"
        raise self._error(f"expected '{op}', found {found}")

    def parse(self) -> Expr:
        if self.tok.kind == "end":
            raise self._error("empty expression")
        node = self.expr()
        if self.tok.kind != "end":
            raise self._error(f"unexpected '{self.tok.text}'")
        return node

    def expr(self) -> Expr:
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self._advance().text
            rhs = self.term()
            node = Add(node, rhs) if op == "+" else Sub(node, rhs)
        return node

    def term(self) -> Expr:
        node = self.factor()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self._advance().text
            rhs = self.factor()
            node = Mul(node, rhs) if op == "*" else Div(node, rhs)
        return node

    def factor(self) -> Expr:
        if self.tok.kind == "op" and self.tok.text == "-":
            self._advance()
            return Neg(self.factor())
        return self.power()

    def power(self) -> Expr:
        base = self.base()
        if self.tok.kind == "op" and self.tok.text == "^":
            caret = self._advance()
            exponent = self.factor()
            if variables(exponent):
                raise self._error("exponent must be a constant", caret)
            try:
                value = float(evaluate(exponent, {}))
            except ExprError as exc:
                raise self._error(f"invalid exponent ({exc})", caret) from exc
            return Pow(base, value)
        return base

    def base(self) -> Expr:
        tok = self.tok
        if tok.kind == "num":
            self._advance()
            return Constant(float(tok.text))
        if tok.kind == "ident":
            self._advance()
            return self._identifier(tok)
        if tok.kind == "op" and tok.text == "(":
            self._advance()
            node = self.expr()
            self._expect(")")
            return node
        if tok.kind == "end":
            raise self._error("unexpected end of input")
        raise self._error(f"unexpected '{tok.text}'")

    def _identifier(self, tok: Token) -> Expr:
        name = tok.text
        opens_call = self.tok.kind == "op" and self.tok.text == "("
        if name in FUNCTIONS:
            if not opens_call:
                raise ArityError(f"function '{name}' needs one argument", tok.pos, self.text)
            self._advance()
            arg = self.expr()
            if self.tok.kind == "op" and self.tok.text == ",":
                raise ArityError(
                    f"function '{name}' takes exactly one argument", self.tok.pos, self.text
                )
            self._expect(")")
            return Call(name, arg)
        if name in VARIABLES:
            if opens_call:
                raise ArityError(f"'{name}' is a variable, not a function", tok.pos, self.text)
            return Variable(name)
        raise UnknownIdentifierError(name, tok.pos, self.text)


def parse(text: str) -> Expr:
    if not isinstance(text, str) or not text.strip():
        raise ExprSyntaxError("empty expression", 0, text if isinstance(text, str) else "")
    return _Parser(text).parse()


# ──────────────────────────
# Printing
# ──────────────────────────
_PREC = {Add: 1, Sub: 1, Mul: 2, Div: 2, Neg: 3, Pow: 4}


def _prec(node: Expr) -> int:
    if isinstance(node, Constant) and (node.value < 0 or math.copysign(1.0, node.value) < 0):
        return 3
    return _PREC.get(type(node), 5)


def _fmt_number(value: float) -> str:
    if math.isfinite(value) and value == int(value) and abs(value) < 1e15:
        return str(int(value)) if value != 0 or math.copysign(1.0, value) > 0 else "0"
    return repr(float(value))


def _wrap(node: Expr, parens: bool) -> str:
    text = to_text(node)
    return f"({text})" if parens else text


def to_text(node: Expr) -> str:
    """Infix text that parses back to an evaluation-equivalent tree."""
    if isinstance(node, Constant):
        text = _fmt_number(abs(node.value)) if node.value < 0 else _fmt_number(node.value)
        return f"-{text}" if node.value < 0 else text
    if isinstance(node, Variable):
        return node.name
    if isinstance(node, (Add, Sub, Mul, Div)):
        prec = _PREC[type(node)]
        symbol = {Add: "+", Sub: "-", Mul: "*", Div: "/"}[type(node)]
        left = _wrap(node.left, _prec(node.left) < prec)
        # right operand keeps its own grouping so the reparsed tree rounds identically
        right = _wrap(node.right, _prec(node.right) <= prec)
        return f"{left} {symbol} {right}"
    if isinstance(node, Neg):
        return "-" + _wrap(node.operand, _prec(node.operand) <= 3)
    if isinstance(node, Pow):
        exponent = _fmt_number(node.exponent)
        if node.exponent < 0:
            exponent = f"({exponent})"
        return f"{_wrap(node.base, _prec(node.base) <= 4)}^{exponent}"
    if isinstance(node, Call):
        return f"{node.name}({to_text(node.arg)})"
    raise TypeError(f"not an expression node: {node!r}")


# ──────────────────────────
# Structure
# ──────────────────────────
@singledispatch
def variables(node: Expr) -> FrozenSet[str]:
    raise TypeError(f"not an expression node: {node!r}")


@variables.register
def _(node: Constant) -> FrozenSet[str]:
    return frozenset()


@variables.register
def _(node: Variable) -> FrozenSet[str]:
    return frozenset({node.name})


@variables.register(Add)
@variables.register(Sub)
@variables.register(Mul)
@variables.register(Div)
def _(node) -> FrozenSet[str]:
    return variables(node.left) | variables(node.right)


@variables.register
def _(node: Neg) -> FrozenSet[str]:
    return variables(node.operand)


@variables.register
def _(node: Pow) -> FrozenSet[str]:
    return variables(node.base)


@variables.register
def _(node: Call) -> FrozenSet[str]:
    return variables(node.arg)


# ──────────────────────────
# Differentiation
# ──────────────────────────
def _is_const(node: Expr, value: float | None = None) -> bool:
    return isinstance(node, Constant) and (value is None or node.value == value)


def _add(a: Expr, b: Expr) -> Expr:
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    if _is_const(a) and _is_const(b):
        return Constant(a.value + b.value)
    return Add(a, b)


def _sub(a: Expr, b: Expr) -> Expr:
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return _neg(b)
    if _is_const(a) and _is_const(b):
        return Constant(a.value - b.value)
    return Sub(a, b)


def _neg(a: Expr) -> Expr:
    if isinstance(a, Constant):
        return Constant(-a.value)
    if isinstance(a, Neg):
        return a.operand
    return Neg(a)


def _mul(a: Expr, b: Expr) -> Expr:
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return ZERO
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    if _is_const(a) and _is_const(b):
        return Constant(a.value * b.value)
    return Mul(a, b)


def _div(a: Expr, b: Expr) -> Expr:
    if _is_const(a, 0.0):
        return ZERO
    if _is_const(b, 1.0):
        return a
    return Div(a, b)


def _pow(a: Expr, n: float) -> Expr:
    if n == 0.0:
        return ONE
    if n == 1.0:
        return a
    return Pow(a, n)


_CHAIN: Dict[str, Callable[[Expr], Expr]] = {
    "sin": lambda u: Call("cos", u),
    "cos": lambda u: _neg(Call("sin", u)),
    "tan": lambda u: Div(ONE, Pow(Call("cos", u), 2.0)),
    "exp": lambda u: Call("exp", u),
    "ln": lambda u: Div(ONE, u),
    "sinh": lambda u: Call("cosh", u),
    "cosh": lambda u: Call("sinh", u),
    "tanh": lambda u: Sub(ONE, Pow(Call("tanh", u), 2.0)),
    "sqrt": lambda u: Div(ONE, Mul(Constant(2.0), Call("sqrt", u))),
}


@singledispatch
def _diff(node: Expr, var: str) -> Expr:
    raise TypeError(f"not an expression node: {node!r}")


@_diff.register
def _(node: Constant, var: str) -> Expr:
    return ZERO


@_diff.register
def _(node: Variable, var: str) -> Expr:
    return ONE if node.name == var else ZERO


@_diff.register
def _(node: Add, var: str) -> Expr:
    return _add(_diff(node.left, var), _diff(node.right, var))


@_diff.register
def _(node: Sub, var: str) -> Expr:
    return _sub(_diff(node.left, var), _diff(node.right, var))


@_diff.register
def _(node: Mul, var: str) -> Expr:
    du = _diff(node.left, var)
    dv = _diff(node.right, var)
    return _add(_mul(du, node.right), _mul(node.left, dv))


@_diff.register
def _(node: Div, var: str) -> Expr:
    du = _diff(node.left, var)
    dv = _diff(node.right, var)
    if _is_const(dv, 0.0):
        return _div(du, node.right)
    return _div(_sub(_mul(du, node.right), _mul(node.left, dv)), Pow(node.right, 2.0))


@_diff.register
def _(node: Neg, var: str) -> Expr:
    return _neg(_diff(node.operand, var))


@_diff.register
def _(node: Pow, var: str) -> Expr:
    du = _diff(node.base, var)
    return _mul(_mul(Constant(node.exponent), _pow(node.base, node.exponent - 1.0)), du)


@_diff.register
def _(node: Call, var: str) -> Expr:
    du = _diff(node.arg, var)
    if _is_const(du, 0.0):
        return ZERO
    return _mul(_CHAIN[node.name](node.arg), du)


def differentiate(e: Expr, var: str, order: int = 1) -> Expr:
    """Exact symbolic derivative of ``e`` with respect to ``var``."""
    if var not in VARIABLES:
        raise UnknownIdentifierError(var, 0, var)
    for _ in range(order):
        e = _diff(e, var)
    return e


# ──────────────────────────
# Evaluation
# ──────────────────────────
class _Evaluator:
    def __init__(self, env: Mapping[str, Number], strict: bool):
        self.env = env
        self.strict = strict

    def _fail(self, message: str, node: Expr) -> None:
        raise ExprEvaluationError(message, node)

    @singledispatchmethod
    def visit(self, node: Expr) -> Number:
        raise TypeError(f"not an expression node: {node!r}")

    @visit.register
    def _(self, node: Constant) -> Number:
        return np.float64(node.value)

    @visit.register
    def _(self, node: Variable) -> Number:
        try:
            value = self.env[node.name]
        except KeyError:
            raise ExprEvaluationError(f"unbound variable '{node.name}'", node) from None
        return np.asarray(value, dtype=np.float64) if np.ndim(value) else np.float64(value)

    @visit.register
    def _(self, node: Add) -> Number:
        return self.visit(node.left) + self.visit(node.right)

    @visit.register
    def _(self, node: Sub) -> Number:
        return self.visit(node.left) - self.visit(node.right)

    @visit.register
    def _(self, node: Mul) -> Number:
        return self.visit(node.left) * self.visit(node.right)

    @visit.register
    def _(self, node: Div) -> Number:
        num = self.visit(node.left)
        den = self.visit(node.right)
        if self.strict and np.any(den == 0):
            self._fail("division by zero", node)
        return num / den

    @visit.register
    def _(self, node: Neg) -> Number:
        return -self.visit(node.operand)

    @visit.register
    def _(self, node: Pow) -> Number:
        base = self.visit(node.base)
        n = node.exponent
        if self.strict:
            if n != int(n) and np.any(base < 0):
                self._fail("negative base with non-integer exponent", node)
            if n < 0 and np.any(base == 0):
                self._fail("division by zero", node)
        return np.power(base, n)

    @visit.register
    def _(self, node: Call) -> Number:
        arg = self.visit(node.arg)
        if self.strict:
            if node.name == "ln" and np.any(arg <= 0):
                self._fail("logarithm of a non-positive value", node)
            if node.name == "sqrt" and np.any(arg < 0):
                self._fail("square root of a negative value", node)
        return FUNCTIONS[node.name](arg)


def evaluate(e: Expr, env: Mapping[str, Number]) -> Number:
    """Evaluate ``e``; division by zero, ln(x<=0) and sqrt(x<0) raise."""
    with np.errstate(all="ignore"):
        return _Evaluator(env, strict=True).visit(e)


def evaluate_lenient(e: Expr, env: Mapping[str, Number]) -> Number:
    """Like :func:`evaluate` but undefined points come back as nan/inf."""
    with np.errstate(all="ignore"):
        return _Evaluator(env, strict=False).visit(e)


def evaluate_on(e: Expr, env: Mapping[str, Number], shape: tuple) -> np.ndarray:
    """Lenient evaluation broadcast to ``shape`` (constants become full arrays)."""
    value = evaluate_lenient(e, env)
    return np.broadcast_to(np.asarray(value, dtype=np.float64), shape)
