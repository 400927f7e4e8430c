"""Parsing, evaluation, and symbolic differentiation of one-variable expressions.

The expression language covers everything a problem file may contain: arithmetic
over the single variable ``x``, decimal/scientific literals, the constants ``pi``
and ``e``, and the functions ``exp``, ``log``, ``sin``, ``cos``, ``sqrt``.

Grammar (infix)::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := '-' factor | power
    power  := atom ('^' factor)?
    atom   := number | 'x' | 'pi' | 'e' | func '(' expr ')' | '(' expr ')'

``^`` is right-associative and binds tighter than unary minus: ``-x^2`` parses as
``-(x^2)``, while ``x^-2`` is a power with a negated exponent.

Evaluation accepts floats or numpy arrays and is strict about real domains:
``log`` of a non-positive value, ``sqrt`` of a negative value, division by zero,
and a non-integer power of a non-positive base all raise :class:`EvaluationError`
instead of producing nan.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

__all__ = [
    "Expression", "Literal", "Variable", "NamedConstant", "Negate", "BinaryOp",
    "FunctionCall", "ExpressionError", "ParseError", "EvaluationError",
    "parse_expression", "differentiate", "evaluate", "to_source",
    "contains_variable", "constant_value",
]


class ExpressionError(ValueError):
    """Base class for expression failures."""


class ParseError(ExpressionError):
    """Syntax or identifier error, carrying the UTF-8 byte offset."""

    def __init__(self, message: str, offset: int) -> None:
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class EvaluationError(ExpressionError):
    """Raised when an expression leaves its real domain."""


@dataclass(frozen=True)
class Expression:
    """Base AST node.  Build instances with :func:`parse_expression`."""

    def __call__(self, x):
        return evaluate(self, x)

    def diff(self) -> "Expression":
        return differentiate(self)

    def __str__(self) -> str:
        return to_source(self)


@dataclass(frozen=True)
class Literal(Expression):
    value: float


@dataclass(frozen=True)
class Variable(Expression):
    pass


@dataclass(frozen=True)
class NamedConstant(Expression):
    name: str


@dataclass(frozen=True)
class Negate(Expression):
    operand: Expression


@dataclass(frozen=True)
class BinaryOp(Expression):
    op: str
    left: Expression
    right: Expression


@dataclass(frozen=True)
class FunctionCall(Expression):
    name: str
    argument: Expression


_CONSTANTS = {"pi": math.pi, "e": math.e}
_FUNCTIONS = {"exp": np.exp, "log": np.log, "sin": np.sin, "cos": np.cos, "sqrt": np.sqrt}


# ---------------------------------------------------------------------------
# Tokenizer / parser
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _byte_offset(source: str, pos: int) -> int:
    return len(source[:pos].encode("utf-8"))


def _tokenize(source: str) -> list[tuple[str, str, int]]:
    tokens: list[tuple[str, str, int]] = []
    pos = 0
    while pos < len(source):
        match = _TOKEN_RE.match(source, pos)
        if match is None or match.end() == pos:
            stripped = source[pos:].lstrip()
            if not stripped:
                break
            bad_at = len(source) - len(stripped)
            raise ParseError(f"unexpected character {stripped[0]!r}",
                             _byte_offset(source, bad_at))
        kind = match.lastgroup or "op"
        tokens.append((kind, match.group(kind), _byte_offset(source, match.start(kind))))
        pos = match.end()
    tokens.append(("end", "", _byte_offset(source, len(source))))
    return tokens


class _Parser:
    def __init__(self, source: str) -> None:
        self.tokens = _tokenize(source)
        self.index = 0

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.index]

    def advance(self) -> tuple[str, str, int]:
        token = self.tokens[self.index]
        self.index += 1
        return token

    def expect_op(self, symbol: str) -> None:
        kind, text, offset = self.peek()
        if kind != "op" or text != symbol:
            raise ParseError(f"expected {symbol!r}", offset)
        self.advance()

    def parse(self) -> Expression:
        node = self.parse_expr()
        kind, text, offset = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected trailing input {text!r}", offset)
        return node

    def parse_expr(self) -> Expression:
        node = self.parse_term()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "+-":
                self.advance()
                node = BinaryOp(text, node, self.parse_term())
            else:
                return node

    def parse_term(self) -> Expression:
        node = self.parse_factor()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "*/":
                self.advance()
                node = BinaryOp(text, node, self.parse_factor())
            else:
                return node

    def parse_factor(self) -> Expression:
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.advance()
            return Negate(self.parse_factor())
        base = self.parse_atom()
        kind, text, _ = self.peek()
        if kind == "op" and text == "^":
            self.advance()
            return BinaryOp("^", base, self.parse_factor())
        return base

    def parse_atom(self) -> Expression:
        kind, text, offset = self.advance()
        if kind == "number":
            return Literal(float(text))
        if kind == "ident":
            if text == "x":
                return Variable()
            if text in _CONSTANTS:
                return NamedConstant(text)
            if text in _FUNCTIONS:
                self.expect_op("(")
                argument = self.parse_expr()
                self.expect_op(")")
                return FunctionCall(text, argument)
            raise ParseError(f"unknown identifier {text!r}", offset)
        if kind == "op" and text == "(":
            node = self.parse_expr()
            self.expect_op(")")
            return node
        shown = text if text else "end of input"
        raise ParseError(f"unexpected {shown!r}", offset)


def parse_expression(source: str) -> Expression:
    """Parse ``source`` into an AST, or raise :class:`ParseError`."""
    return _Parser(source).parse()


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def evaluate(e: Expression, x) -> Union[float, np.ndarray]:
    """Evaluate ``e`` at ``x`` (float or array); strict about real domains."""
    arr = np.asarray(x, dtype=float)
    with np.errstate(over="ignore", under="ignore", invalid="ignore", divide="ignore"):
        out = _eval(e, arr)
    if arr.ndim == 0:
        return float(out)
    result = np.asarray(out, dtype=float)
    if result.shape != arr.shape:
        result = np.broadcast_to(result, arr.shape).copy()
    return result


def _eval(e: Expression, x):
    if isinstance(e, Literal):
        return e.value
    if isinstance(e, Variable):
        return x
    if isinstance(e, NamedConstant):
        return _CONSTANTS[e.name]
    if isinstance(e, Negate):
        return -_eval(e.operand, x)
    if isinstance(e, BinaryOp):
        a = _eval(e.left, x)
        b = _eval(e.right, x)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            if np.any(np.asarray(b) == 0.0):
                raise EvaluationError("division by zero")
            return a / b
        if e.op == "^":
            return _power(a, b)
        raise EvaluationError(f"unknown operator {e.op!r}")
    if isinstance(e, FunctionCall):
        v = _eval(e.argument, x)
        if e.name == "log" and np.any(np.asarray(v) <= 0.0):
            raise EvaluationError("log of non-positive value")
        if e.name == "sqrt" and np.any(np.asarray(v) < 0.0):
            raise EvaluationError("sqrt of negative value")
        return _FUNCTIONS[e.name](v)
    raise TypeError(f"not an expression node: {e!r}")


def _power(base, exponent):
    exp_arr = np.asarray(exponent)
    integral = bool(np.all(exp_arr == np.floor(exp_arr)) and np.all(np.abs(exp_arr) < 2 ** 53))
    base_arr = np.asarray(base)
    if integral:
        if np.any((base_arr == 0.0) & (exp_arr < 0)):
            raise EvaluationError("zero raised to a negative power")
        return np.power(base, exponent)
    if np.any(base_arr <= 0.0):
        raise EvaluationError("non-integer power requires a positive base")
    return np.power(base, exponent)


# ---------------------------------------------------------------------------
# Structure helpers
# ---------------------------------------------------------------------------

def contains_variable(e: Expression) -> bool:
    if isinstance(e, Variable):
        return True
    if isinstance(e, Negate):
        return contains_variable(e.operand)
    if isinstance(e, BinaryOp):
        return contains_variable(e.left) or contains_variable(e.right)
    if isinstance(e, FunctionCall):
        return contains_variable(e.argument)
    return False


def constant_value(e: Expression):
    """Value of a variable-free expression, or None if it has the variable
    or cannot be evaluated."""
    if contains_variable(e):
        return None
    try:
        return evaluate(e, 0.0)
    except EvaluationError:
        return None


# ---------------------------------------------------------------------------
# Differentiation (with light constant folding to keep results readable)
# ---------------------------------------------------------------------------

def _lit(v: float) -> Literal:
    return Literal(float(v))


def _is_lit(e: Expression, v: float | None = None) -> bool:
    return isinstance(e, Literal) and (v is None or e.value == v)


def _add(a: Expression, b: Expression) -> Expression:
    if _is_lit(a) and _is_lit(b):
        return _lit(a.value + b.value)
    if _is_lit(a, 0.0):
        return b
    if _is_lit(b, 0.0):
        return a
    return BinaryOp("+", a, b)


def _sub(a: Expression, b: Expression) -> Expression:
    if _is_lit(a) and _is_lit(b):
        return _lit(a.value - b.value)
    if _is_lit(b, 0.0):
        return a
    if _is_lit(a, 0.0):
        return _neg(b)
    return BinaryOp("-", a, b)


def _mul(a: Expression, b: Expression) -> Expression:
    if _is_lit(a) and _is_lit(b):
        return _lit(a.value * b.value)
    if _is_lit(a, 0.0) or _is_lit(b, 0.0):
        return _lit(0.0)
    if _is_lit(a, 1.0):
        return b
    if _is_lit(b, 1.0):
        return a
    return BinaryOp("*", a, b)


def _div(a: Expression, b: Expression) -> Expression:
    if _is_lit(a, 0.0):
        return _lit(0.0)
    if _is_lit(b, 1.0):
        return a
    if _is_lit(a) and _is_lit(b) and b.value != 0.0:
        return _lit(a.value / b.value)
    return BinaryOp("/", a, b)


def _pow(a: Expression, b: Expression) -> Expression:
    if _is_lit(b, 1.0):
        return a
    if _is_lit(b, 0.0):
        return _lit(1.0)
    return BinaryOp("^", a, b)


def _neg(a: Expression) -> Expression:
    if isinstance(a, Literal):
        return _lit(-a.value)
    if isinstance(a, Negate):
        return a.operand
    return Negate(a)


def differentiate(e: Expression) -> Expression:
    """Symbolic derivative with respect to ``x``."""
    if isinstance(e, (Literal, NamedConstant)):
        return _lit(0.0)
    if isinstance(e, Variable):
        return _lit(1.0)
    if isinstance(e, Negate):
        return _neg(differentiate(e.operand))
    if isinstance(e, BinaryOp):
        da = differentiate(e.left)
        db = differentiate(e.right)
        if e.op == "+":
            return _add(da, db)
        if e.op == "-":
            return _sub(da, db)
        if e.op == "*":
            return _add(_mul(da, e.right), _mul(e.left, db))
        if e.op == "/":
            num = _sub(_mul(da, e.right), _mul(e.left, db))
            return _div(num, _pow(e.right, _lit(2.0)))
        if e.op == "^":
            c = constant_value(e.right)
            if c is not None:
                return _mul(_mul(_lit(c), _pow(e.left, _lit(c - 1.0))), da)
            # General rule a^b * (b' log a + b a'/a); requires a > 0 at evaluation.
            term = _add(_mul(db, FunctionCall("log", e.left)),
                        _mul(e.right, _div(da, e.left)))
            return _mul(BinaryOp("^", e.left, e.right), term)
    if isinstance(e, FunctionCall):
        du = differentiate(e.argument)
        u = e.argument
        if e.name == "exp":
            return _mul(FunctionCall("exp", u), du)
        if e.name == "log":
            return _div(du, u)
        if e.name == "sin":
            return _mul(FunctionCall("cos", u), du)
        if e.name == "cos":
            return _neg(_mul(FunctionCall("sin", u), du))
        if e.name == "sqrt":
            return _div(du, _mul(_lit(2.0), FunctionCall("sqrt", u)))
    raise TypeError(f"not an expression node: {e!r}")


# ---------------------------------------------------------------------------
# Printing
# ---------------------------------------------------------------------------

_PREC_ADD, _PREC_MUL, _PREC_NEG, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5


def _precedence(e: Expression) -> int:
    if isinstance(e, Literal):
        return _PREC_NEG if e.value < 0 else _PREC_ATOM
    if isinstance(e, (Variable, NamedConstant, FunctionCall)):
        return _PREC_ATOM
    if isinstance(e, Negate):
        return _PREC_NEG
    if isinstance(e, BinaryOp):
        return _PREC_POW if e.op == "^" else (_PREC_ADD if e.op in "+-" else _PREC_MUL)
    raise TypeError(f"not an expression node: {e!r}")


def _wrap(e: Expression, minimum: int) -> str:
    text = to_source(e)
    return f"({text})" if _precedence(e) < minimum else text


def _format_number(v: float) -> str:
    if math.isfinite(v) and v == int(v) and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def to_source(e: Expression) -> str:
    """Render ``e`` back to parseable source (minimal parentheses)."""
    if isinstance(e, Literal):
        return _format_number(e.value)
    if isinstance(e, Variable):
        return "x"
    if isinstance(e, NamedConstant):
        return e.name
    if isinstance(e, Negate):
        return "-" + _wrap(e.operand, _PREC_NEG)
    if isinstance(e, FunctionCall):
        return f"{e.name}({to_source(e.argument)})"
    if isinstance(e, BinaryOp):
        if e.op == "^":
            return _wrap(e.left, _PREC_ATOM) + "^" + _wrap(e.right, _PREC_NEG)
        mine = _PREC_ADD if e.op in "+-" else _PREC_MUL
        return _wrap(e.left, mine) + e.op + _wrap(e.right, mine + 1)
    raise TypeError(f"not an expression node: {e!r}")
