"""Coefficient expression language.

A small arithmetic language over the variables ``x`` and ``t``: numeric
literals, ``pi``, the operators ``+ - * / ^`` and the functions
``sin cos exp sqrt log``. ``^`` is right-associative and binds tighter than
unary minus; ``**`` is read as ``^`` so printed expressions parse back.
Parsed expressions are pymbolic trees, differentiated with pymbolic's
differentiator and evaluated on numpy arrays.
"""

import math
import re
from dataclasses import dataclass
from functools import cached_property
from types import SimpleNamespace
from typing import Any

import numpy as np
import pymbolic as pmbl
import pymbolic.primitives as prim
from pymbolic.mapper.dependency import DependencyMapper
from pymbolic.mapper.differentiator import differentiate
from pymbolic.mapper.evaluator import EvaluationMapper

from stefan_control.errors import ExpressionDomainError, ExpressionSyntaxError, UnknownIdentifierError

VARIABLES = ("x", "t")
FUNCTIONS = ("sin", "cos", "exp", "sqrt", "log")
CONSTANTS = {"pi": math.pi}

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>\*\*|[-+*/^()]))"
)

_SIN, _COS, _EXP, _SQRT = (pmbl.var(name) for name in ("sin", "cos", "exp", "sqrt"))


# --- parser ----------------------------------------------------------------


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    pos: int


def _tokenize(source: str) -> list[_Token]:
    tokens: list[_Token] = []
    pos = 0
    stripped_end = len(source.rstrip())
    while pos < stripped_end:
        match = _TOKEN_RE.match(source, pos)
        if match is None or match.end() == pos:
            bad = pos + (len(source[pos:]) - len(source[pos:].lstrip()))
            raise ExpressionSyntaxError(f"unexpected character {source[bad]!r}", bad)
        kind = match.lastgroup
        text = match.group(kind)
        tokens.append(_Token(kind, "^" if text == "**" else text, match.start(kind)))
        pos = match.end()
    tokens.append(_Token("end", "", len(source)))
    return tokens


class _Parser:
    """Recursive descent over the token list, building pymbolic primitives.

    Division and powers stay symbolic even between literals so that
    ``1/0`` or ``(-8)^(1/3)`` fail at evaluation with a domain error.
    """

    def __init__(self, source: str):
        self.tokens = _tokenize(source)
        self.index = 0

    @property
    def current(self) -> _Token:
        return self.tokens[self.index]

    def _advance(self) -> _Token:
        token = self.tokens[self.index]
        self.index += 1
        return token

    def _expect(self, text: str) -> None:
        token = self.current
        if token.text != text:
            found = token.text or "end of input"
            raise ExpressionSyntaxError(f"expected '{text}', found '{found}'", token.pos)
        self._advance()

    def parse(self):
        expr = self._expr()
        if self.current.kind != "end":
            raise ExpressionSyntaxError(f"unexpected '{self.current.text}'", self.current.pos)
        return expr

    def _expr(self):
        expr = self._term()
        while self.current.text in ("+", "-"):
            op = self._advance().text
            right = self._term()
            expr = expr + right if op == "+" else expr - right
        return expr

    def _term(self):
        expr = self._unary()
        while self.current.text in ("*", "/"):
            op = self._advance().text
            right = self._unary()
            expr = expr * right if op == "*" else prim.Quotient(expr, right)
        return expr

    def _unary(self):
        if self.current.text == "-":
            self._advance()
            return -self._unary()
        if self.current.text == "+":
            self._advance()
            return self._unary()
        return self._power()

    def _power(self):
        base = self._atom()
        if self.current.text == "^":
            self._advance()
            return prim.Power(base, self._unary())
        return base

    def _atom(self):
        token = self.current
        if token.kind == "number":
            self._advance()
            return float(token.text)
        if token.kind == "ident":
            self._advance()
            if token.text in FUNCTIONS:
                self._expect("(")
                arg = self._expr()
                self._expect(")")
                return pmbl.var(token.text)(arg)
            if token.text in VARIABLES:
                return pmbl.var(token.text)
            if token.text in CONSTANTS:
                return CONSTANTS[token.text]
            raise UnknownIdentifierError(token.text, token.pos)
        if token.text == "(":
            self._advance()
            expr = self._expr()
            self._expect(")")
            return expr
        found = token.text or "end of input"
        raise ExpressionSyntaxError(f"unexpected '{found}'", token.pos)


# --- numpy evaluation ------------------------------------------------------


def _checked_sqrt(a):
    a = np.asarray(a, dtype=float)
    if np.any(a < 0.0):
        raise ExpressionDomainError("sqrt of a negative number")
    return np.sqrt(a)


def _checked_log(a):
    a = np.asarray(a, dtype=float)
    if np.any(a <= 0.0):
        raise ExpressionDomainError("log of a non-positive number")
    return np.log(a)


_NUMPY_FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "sqrt": _checked_sqrt, "log": _checked_log}
# derivatives of variable exponents may refer to math.log
_NUMPY_CONTEXT = {**_NUMPY_FUNCTIONS, "math": SimpleNamespace(**_NUMPY_FUNCTIONS)}


class NumpyEvaluationMapper(EvaluationMapper):
    """Evaluation on numpy arrays with domain checks for division and powers."""

    def map_quotient(self, expr, *args, **kwargs):
        denominator = self.rec(expr.denominator)
        if np.any(np.asarray(denominator) == 0.0):
            raise ExpressionDomainError("division by zero")
        return self.rec(expr.numerator) / denominator

    def map_power(self, expr, *args, **kwargs):
        value = np.power(np.asarray(self.rec(expr.base), dtype=float), self.rec(expr.exponent))
        if np.any(np.isnan(value)):
            raise ExpressionDomainError("negative base raised to a non-integer power")
        return value


# --- differentiation -------------------------------------------------------


def _function_derivative(index, function, parameters, allowed_nonsmoothness="none", **kwargs):
    """d f(u) / du for the functions of the language, in the language."""
    (u,) = parameters
    name = getattr(function, "name", str(function))
    if name == "sin":
        return _COS(u)
    if name == "cos":
        return -_SIN(u)
    if name == "exp":
        return _EXP(u)
    if name == "sqrt":
        return prim.Quotient(1.0, 2.0 * _SQRT(u))
    if name == "log":
        return prim.Quotient(1.0, u)
    raise ExpressionSyntaxError(f"cannot differentiate function '{name}'", 0)


# --- public API ------------------------------------------------------------


def _is_number(expr) -> bool:
    return isinstance(expr, int | float | np.number)


def _source(expr) -> str:
    return repr(float(expr)) if _is_number(expr) else str(expr)


@dataclass(frozen=True)
class CoefficientExpr:
    """Parsed expression in x and t; immutable and safe to share."""

    source: str
    expr: Any

    def evaluate(self, x, t) -> np.ndarray:
        """Vectorized evaluation with numpy broadcasting of x and t."""
        x_arr = np.asarray(x, dtype=float)
        t_arr = np.asarray(t, dtype=float)
        with np.errstate(all="ignore"):
            value = NumpyEvaluationMapper({"x": x_arr, "t": t_arr, **_NUMPY_CONTEXT})(self.expr)
        shape = np.broadcast_shapes(x_arr.shape, t_arr.shape)
        result = np.broadcast_to(np.asarray(value, dtype=float), shape).copy()
        if not np.all(np.isfinite(result)):
            raise ExpressionDomainError(f"non-finite value of '{self.source}'")
        return result

    def __call__(self, x, t):
        return self.evaluate(x, t)

    def depends_on(self) -> set[str]:
        deps = DependencyMapper(include_calls="descend_args")(self.expr)
        return {dep.name for dep in deps if isinstance(dep, prim.Variable) and dep.name in VARIABLES}

    @cached_property
    def is_constant(self) -> bool:
        return not self.depends_on()

    def diff(self, var: str) -> "CoefficientExpr":
        return from_pymbolic(differentiate(self.expr, pmbl.var(var), _function_derivative))

    def substitute(self, var: str, replacement: "CoefficientExpr | float") -> "CoefficientExpr":
        value = replacement.expr if isinstance(replacement, CoefficientExpr) else float(replacement)
        return from_pymbolic(pmbl.substitute(self.expr, {pmbl.var(var): value}))

    def to_source(self) -> str:
        return _source(self.expr)

    def __add__(self, other: "CoefficientExpr") -> "CoefficientExpr":
        return from_pymbolic(self.expr + other.expr)

    def __sub__(self, other: "CoefficientExpr") -> "CoefficientExpr":
        return from_pymbolic(self.expr - other.expr)

    def __mul__(self, other: "CoefficientExpr") -> "CoefficientExpr":
        return from_pymbolic(self.expr * other.expr)

    def __neg__(self) -> "CoefficientExpr":
        return from_pymbolic(-self.expr)


def from_pymbolic(expr) -> CoefficientExpr:
    if _is_number(expr):
        expr = float(expr)
    return CoefficientExpr(_source(expr), expr)


def constant(value: float) -> CoefficientExpr:
    return from_pymbolic(float(value))


def parse_expression(source: str) -> CoefficientExpr:
    """Parse ``source`` into a CoefficientExpr.

    Raises ExpressionSyntaxError (with the offending character offset) or
    UnknownIdentifierError.
    """
    if not source or not source.strip():
        raise ExpressionSyntaxError("empty expression", 0)
    expr = _Parser(source).parse()
    if _is_number(expr):
        expr = float(expr)
    return CoefficientExpr(source.strip(), expr)


def eval_coefficient(e: CoefficientExpr, x: float, t: float) -> float:
    return float(e.evaluate(x, t))
