"""Expression trees with exact forward-mode derivatives up to order 3.

Metric components, vector fields and scalar functions are all small
expression trees in the chart coordinates ``x1 .. xn``.  Derivatives are
obtained by propagating truncated Taylor data (a :class:`Jet`) through the
tree, so first, second and third partials are exact up to rounding.
Finite differences appear only in the test suite, as an independent oracle.

Grammar accepted by :func:`parse`::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?       # exponent must fold to an integer
    atom   := NUMBER | IDENT | IDENT '(' expr ')' | '(' expr ')'

Identifiers are the coordinates ``x1 .. xn`` and the functions
``sin cos exp log sqrt``.  Numbers use decimal or scientific notation.
Implicit multiplication is not supported.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Expr", "Const", "Var", "Add", "Mul", "Div", "Pow", "Neg", "Fun",
    "Jet", "ExprSyntaxError", "EvalDomainError",
    "parse", "eval_jet", "eval_jets", "eval_values", "substitute",
]

FUNCTION_NAMES = ("sin", "cos", "exp", "log", "sqrt")


class ExprSyntaxError(ValueError):
    """Raised by the parser, with the character position of the problem."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class EvalDomainError(ArithmeticError):
    """Raised when evaluation leaves the domain of a subexpression.

    Covers division by zero, log of a non-positive value, sqrt of a
    negative value (or of zero when derivatives are requested) and zero
    raised to a negative power.  The offending subexpression is kept on
    the exception for error reporting.
    """

    def __init__(self, message: str, subexpression: "Expr"):
        super().__init__(f"{message} in subexpression '{subexpression}'")
        self.subexpression = subexpression


class Expr:
    """Base class for expression nodes.  Nodes are immutable."""

    __slots__ = ()

    def __str__(self) -> str:
        return _to_str(self, 0)


@dataclass(frozen=True, slots=True)
class Const(Expr):
    value: float

    def __str__(self) -> str:
        return _to_str(self, 0)


@dataclass(frozen=True, slots=True)
class Var(Expr):
    """Coordinate ``x{index+1}``; the index is zero based internally."""

    index: int

    def __str__(self) -> str:
        return _to_str(self, 0)


@dataclass(frozen=True, slots=True)
class Add(Expr):
    left: Expr
    right: Expr

    def __str__(self) -> str:
        return _to_str(self, 0)


@dataclass(frozen=True, slots=True)
class Mul(Expr):
    left: Expr
    right: Expr

    def __str__(self) -> str:
        return _to_str(self, 0)


@dataclass(frozen=True, slots=True)
class Div(Expr):
    left: Expr
    right: Expr

    def __str__(self) -> str:
        return _to_str(self, 0)


@dataclass(frozen=True, slots=True)
class Pow(Expr):
    base: Expr
    exponent: int

    def __str__(self) -> str:
        return _to_str(self, 0)


@dataclass(frozen=True, slots=True)
class Neg(Expr):
    arg: Expr

    def __str__(self) -> str:
        return _to_str(self, 0)


@dataclass(frozen=True, slots=True)
class Fun(Expr):
    name: str
    arg: Expr

    def __post_init__(self):
        if self.name not in FUNCTION_NAMES:
            raise ValueError(f"unknown function '{self.name}'")

    def __str__(self) -> str:
        return _to_str(self, 0)


# ---------------------------------------------------------------------------
# printing

_PREC_ADD, _PREC_MUL, _PREC_UNARY, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5


def _format_number(v: float) -> str:
    if v == int(v) and abs(v) < 1e16:
        return str(int(v))
    return repr(float(v))


def _to_str(node: Expr, context: int) -> str:
    if isinstance(node, Const):
        text = _format_number(node.value)
        prec = _PREC_UNARY if node.value < 0 else _PREC_ATOM
    elif isinstance(node, Var):
        text, prec = f"x{node.index + 1}", _PREC_ATOM
    elif isinstance(node, Add):
        if isinstance(node.right, Neg):
            text = f"{_to_str(node.left, _PREC_ADD)} - {_to_str(node.right.arg, _PREC_ADD + 1)}"
        else:
            text = f"{_to_str(node.left, _PREC_ADD)} + {_to_str(node.right, _PREC_ADD + 1)}"
        prec = _PREC_ADD
    elif isinstance(node, Mul):
        text = f"{_to_str(node.left, _PREC_MUL)}*{_to_str(node.right, _PREC_MUL + 1)}"
        prec = _PREC_MUL
    elif isinstance(node, Div):
        text = f"{_to_str(node.left, _PREC_MUL)}/{_to_str(node.right, _PREC_MUL + 1)}"
        prec = _PREC_MUL
    elif isinstance(node, Neg):
        text = f"-{_to_str(node.arg, _PREC_UNARY)}"
        prec = _PREC_UNARY
    elif isinstance(node, Pow):
        exp = str(node.exponent) if node.exponent >= 0 else f"({node.exponent})"
        text = f"{_to_str(node.base, _PREC_ATOM)}^{exp}"
        prec = _PREC_POW
    elif isinstance(node, Fun):
        text = f"{node.name}({_to_str(node.arg, 0)})"
        prec = _PREC_ATOM
    else:  # pragma: no cover
        raise TypeError(f"not an Expr node: {node!r}")
    if prec < context:
        return f"({text})"
    return text


# ---------------------------------------------------------------------------
# jets

class Jet:
    """Scalar value plus symmetric partial derivative tensors.

    ``d1`` has shape (n,), ``d2`` shape (n, n) and ``d3`` shape (n, n, n);
    entries above ``order`` are ``None``.  The derivative tensors are exactly
    symmetric by construction, not merely up to rounding.
    """

    __slots__ = ("order", "value", "d1", "d2", "d3")

    def __init__(self, order, value, d1=None, d2=None, d3=None):
        self.order = order
        self.value = value
        self.d1 = d1
        self.d2 = d2
        self.d3 = d3

    @classmethod
    def constant(cls, value: float, n: int, order: int) -> "Jet":
        d1 = np.zeros(n) if order >= 1 else None
        d2 = np.zeros((n, n)) if order >= 2 else None
        d3 = np.zeros((n, n, n)) if order >= 3 else None
        return cls(order, float(value), d1, d2, d3)

    @classmethod
    def coordinate(cls, index: int, value: float, n: int, order: int) -> "Jet":
        j = cls.constant(value, n, order)
        if order >= 1:
            j.d1[index] = 1.0
        return j


def _sym3(a2: np.ndarray, b1: np.ndarray) -> np.ndarray:
    # sum of a2 x b1 over the three slot assignments, keeps exact symmetry
    t = np.einsum("ij,k->ijk", a2, b1)
    return t + t.transpose(0, 2, 1) + t.transpose(2, 0, 1)


def _jadd(a: Jet, b: Jet) -> Jet:
    order = a.order
    return Jet(
        order,
        a.value + b.value,
        a.d1 + b.d1 if order >= 1 else None,
        a.d2 + b.d2 if order >= 2 else None,
        a.d3 + b.d3 if order >= 3 else None,
    )


def _jneg(a: Jet) -> Jet:
    order = a.order
    return Jet(
        order,
        -a.value,
        -a.d1 if order >= 1 else None,
        -a.d2 if order >= 2 else None,
        -a.d3 if order >= 3 else None,
    )


def _jmul(a: Jet, b: Jet) -> Jet:
    order = a.order
    out = Jet(order, a.value * b.value)
    if order >= 1:
        out.d1 = a.d1 * b.value + b.d1 * a.value
    if order >= 2:
        cross = np.outer(a.d1, b.d1)
        out.d2 = a.d2 * b.value + cross + cross.T + b.d2 * a.value
    if order >= 3:
        out.d3 = (
            a.d3 * b.value
            + _sym3(a.d2, b.d1)
            + _sym3(b.d2, a.d1)
            + b.d3 * a.value
        )
    return out


def _jcompose(w: Jet, f0: float, f1: float, f2: float, f3: float) -> Jet:
    """Jet of f(w) given scalar derivatives of f at w.value (Faa di Bruno)."""
    order = w.order
    out = Jet(order, f0)
    if order >= 1:
        out.d1 = f1 * w.d1
    if order >= 2:
        out.d2 = f2 * np.outer(w.d1, w.d1) + f1 * w.d2
    if order >= 3:
        out.d3 = (
            f3 * np.einsum("i,j,k->ijk", w.d1, w.d1, w.d1)
            + f2 * _sym3(w.d2, w.d1)
            + f1 * w.d3
        )
    return out


def _reciprocal_coeffs(v: float, order: int, node: Expr):
    if v == 0.0:
        raise EvalDomainError("division by zero", node)
    inv = 1.0 / v
    return inv, -inv * inv, 2.0 * inv ** 3, -6.0 * inv ** 4


def _pow_coeffs(v: float, m: int, order: int, node: Expr):
    coeffs = []
    c = 1.0
    for k in range(order + 1):
        if c == 0.0:
            coeffs.append(0.0)
        else:
            e = m - k
            if v == 0.0 and e < 0:
                raise EvalDomainError("zero raised to a negative power", node)
            coeffs.append(c * v ** e)
        c *= m - k
    while len(coeffs) < 4:
        coeffs.append(0.0)
    return tuple(coeffs)


def _fun_coeffs(name: str, v: float, order: int, node: Expr):
    if name == "sin":
        s, c = math.sin(v), math.cos(v)
        return s, c, -s, -c
    if name == "cos":
        s, c = math.sin(v), math.cos(v)
        return c, -s, -c, s
    if name == "exp":
        e = math.exp(v)
        return e, e, e, e
    if name == "log":
        if v <= 0.0:
            raise EvalDomainError("log of a non-positive value", node)
        inv = 1.0 / v
        return math.log(v), inv, -inv * inv, 2.0 * inv ** 3
    if name == "sqrt":
        if v < 0.0 or (v == 0.0 and order >= 1):
            raise EvalDomainError("sqrt outside its domain", node)
        s = math.sqrt(v)
        if order == 0:
            return s, 0.0, 0.0, 0.0
        return s, 0.5 / s, -0.25 / s ** 3, 0.375 / s ** 5
    raise ValueError(f"unknown function '{name}'")  # pragma: no cover


def _jet_of(node: Expr, point: np.ndarray, order: int, memo: dict) -> Jet:
    cached = memo.get(id(node))
    if cached is not None:
        return cached
    n = point.shape[0]
    if isinstance(node, Const):
        j = Jet.constant(node.value, n, order)
    elif isinstance(node, Var):
        if node.index >= n:
            raise EvalDomainError(
                f"variable x{node.index + 1} exceeds point dimension {n}", node
            )
        j = Jet.coordinate(node.index, float(point[node.index]), n, order)
    elif isinstance(node, Add):
        j = _jadd(_jet_of(node.left, point, order, memo),
                  _jet_of(node.right, point, order, memo))
    elif isinstance(node, Mul):
        j = _jmul(_jet_of(node.left, point, order, memo),
                  _jet_of(node.right, point, order, memo))
    elif isinstance(node, Div):
        num = _jet_of(node.left, point, order, memo)
        den = _jet_of(node.right, point, order, memo)
        j = _jmul(num, _jcompose(den, *_reciprocal_coeffs(den.value, order, node)))
    elif isinstance(node, Neg):
        j = _jneg(_jet_of(node.arg, point, order, memo))
    elif isinstance(node, Pow):
        base = _jet_of(node.base, point, order, memo)
        j = _jcompose(base, *_pow_coeffs(base.value, node.exponent, order, node))
    elif isinstance(node, Fun):
        arg = _jet_of(node.arg, point, order, memo)
        j = _jcompose(arg, *_fun_coeffs(node.name, arg.value, order, node))
    else:  # pragma: no cover
        raise TypeError(f"not an Expr node: {node!r}")
    memo[id(node)] = j
    return j


def eval_jet(expr: Expr, point, order: int = 0) -> Jet:
    """Evaluate ``expr`` at ``point`` with derivatives up to ``order`` (0..3)."""
    if not 0 <= order <= 3:
        raise ValueError("order must be between 0 and 3")
    p = np.asarray(point, dtype=float)
    if p.ndim != 1:
        raise ValueError("point must be a 1-d coordinate array")
    return _jet_of(expr, p, order, {})


def eval_jets(exprs, point, order: int = 0) -> list[Jet]:
    """Evaluate several expressions at one point, sharing subtree work.

    Subtrees shared between the given trees (same object identity) are
    evaluated once, which matters for metrics whose entries reuse a common
    conformal factor.
    """
    if not 0 <= order <= 3:
        raise ValueError("order must be between 0 and 3")
    p = np.asarray(point, dtype=float)
    memo: dict = {}
    return [_jet_of(e, p, order, memo) for e in exprs]


def _values_of(node: Expr, pts: np.ndarray, memo: dict) -> np.ndarray:
    cached = memo.get(id(node))
    if cached is not None:
        return cached
    if isinstance(node, Const):
        v = np.full(pts.shape[0], float(node.value))
    elif isinstance(node, Var):
        if node.index >= pts.shape[1]:
            raise EvalDomainError(
                f"variable x{node.index + 1} exceeds point dimension {pts.shape[1]}",
                node,
            )
        v = pts[:, node.index].copy()
    elif isinstance(node, Add):
        v = _values_of(node.left, pts, memo) + _values_of(node.right, pts, memo)
    elif isinstance(node, Mul):
        v = _values_of(node.left, pts, memo) * _values_of(node.right, pts, memo)
    elif isinstance(node, Div):
        den = _values_of(node.right, pts, memo)
        if np.any(den == 0.0):
            raise EvalDomainError("division by zero", node)
        v = _values_of(node.left, pts, memo) / den
    elif isinstance(node, Neg):
        v = -_values_of(node.arg, pts, memo)
    elif isinstance(node, Pow):
        base = _values_of(node.base, pts, memo)
        if node.exponent < 0 and np.any(base == 0.0):
            raise EvalDomainError("zero raised to a negative power", node)
        v = base ** float(node.exponent)
    elif isinstance(node, Fun):
        arg = _values_of(node.arg, pts, memo)
        if node.name == "log":
            if np.any(arg <= 0.0):
                raise EvalDomainError("log of a non-positive value", node)
            v = np.log(arg)
        elif node.name == "sqrt":
            if np.any(arg < 0.0):
                raise EvalDomainError("sqrt outside its domain", node)
            v = np.sqrt(arg)
        elif node.name == "sin":
            v = np.sin(arg)
        elif node.name == "cos":
            v = np.cos(arg)
        else:
            v = np.exp(arg)
    else:  # pragma: no cover
        raise TypeError(f"not an Expr node: {node!r}")
    memo[id(node)] = v
    return v


def eval_values(expr: Expr, points) -> np.ndarray:
    """Vectorized order-0 evaluation over an (m, n) array of points."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2:
        raise ValueError("points must be an (m, n) array")
    return _values_of(expr, pts, {})


def eval_values_many(exprs, points) -> np.ndarray:
    """Stacked order-0 evaluation of several expressions, (k, m) result.

    One memo spans all trees, so expression objects shared between them
    (metric factors, repeated field components) are evaluated once.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2:
        raise ValueError("points must be an (m, n) array")
    memo: dict = {}
    return np.stack([_values_of(e, pts, memo) for e in exprs])


def substitute(expr: Expr, replacements: dict[int, Expr]) -> Expr:
    """Replace coordinates by expressions (indices are zero based).

    Unreplaced subtrees are returned as the same objects, so sharing is
    preserved for the jet memoization.
    """
    if isinstance(expr, Var):
        return replacements.get(expr.index, expr)
    if isinstance(expr, (Const,)):
        return expr
    if isinstance(expr, Add):
        left, right = substitute(expr.left, replacements), substitute(expr.right, replacements)
        return expr if left is expr.left and right is expr.right else Add(left, right)
    if isinstance(expr, Mul):
        left, right = substitute(expr.left, replacements), substitute(expr.right, replacements)
        return expr if left is expr.left and right is expr.right else Mul(left, right)
    if isinstance(expr, Div):
        left, right = substitute(expr.left, replacements), substitute(expr.right, replacements)
        return expr if left is expr.left and right is expr.right else Div(left, right)
    if isinstance(expr, Neg):
        arg = substitute(expr.arg, replacements)
        return expr if arg is expr.arg else Neg(arg)
    if isinstance(expr, Pow):
        base = substitute(expr.base, replacements)
        return expr if base is expr.base else Pow(base, expr.exponent)
    if isinstance(expr, Fun):
        arg = substitute(expr.arg, replacements)
        return expr if arg is expr.arg else Fun(expr.name, arg)
    raise TypeError(f"not an Expr node: {expr!r}")  # pragma: no cover


# ---------------------------------------------------------------------------
# parser

_TOKEN_RE = re.compile(
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[()+\-*/^])"
)
_VAR_RE = re.compile(r"^x([1-9][0-9]*)$")


def _tokenize(src: str):
    tokens = []
    pos = 0
    while pos < len(src):
        if src[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(src, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character '{src[pos]}'", pos)
        if m.lastgroup == "num":
            tokens.append(("num", m.group(), pos))
        elif m.lastgroup == "ident":
            tokens.append(("ident", m.group(), pos))
        else:
            tokens.append(("op", m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", len(src)))
    return tokens


def _const_fold(node: Expr):
    """Value of a variable-free subtree, or None if it contains coordinates."""
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        return None
    if isinstance(node, Neg):
        v = _const_fold(node.arg)
        return None if v is None else -v
    if isinstance(node, (Add, Mul, Div)):
        a, b = _const_fold(node.left), _const_fold(node.right)
        if a is None or b is None:
            return None
        if isinstance(node, Add):
            return a + b
        if isinstance(node, Mul):
            return a * b
        return a / b if b != 0 else None
    if isinstance(node, Pow):
        a = _const_fold(node.base)
        return None if a is None else a ** node.exponent
    if isinstance(node, Fun):
        a = _const_fold(node.arg)
        if a is None:
            return None
        return _fun_coeffs(node.name, a, 0, node)[0]
    return None  # pragma: no cover


class _Parser:
    def __init__(self, src: str, dim: int):
        self.src = src
        self.dim = dim
        self.tokens = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, text: str):
        kind, value, pos = self.peek()
        if kind != "op" or value != text:
            raise ExprSyntaxError(f"expected '{text}'", pos)
        return self.take()

    def parse(self) -> Expr:
        node = self.parse_expr()
        kind, value, pos = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected trailing input '{value}'", pos)
        return node

    def parse_expr(self) -> Expr:
        node = self.parse_term()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "+-":
                self.take()
                rhs = self.parse_term()
                node = Add(node, rhs if value == "+" else Neg(rhs))
            else:
                return node

    def parse_term(self) -> Expr:
        node = self.parse_unary()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "*/":
                self.take()
                rhs = self.parse_unary()
                node = Mul(node, rhs) if value == "*" else Div(node, rhs)
            else:
                return node

    def parse_unary(self) -> Expr:
        kind, value, _ = self.peek()
        if kind == "op" and value == "-":
            self.take()
            return Neg(self.parse_unary())
        return self.parse_power()

    def parse_power(self) -> Expr:
        base = self.parse_atom()
        kind, value, pos = self.peek()
        if kind == "op" and value == "^":
            self.take()
            exp_pos = self.peek()[2]
            exponent = self.parse_unary()
            folded = _const_fold(exponent)
            if folded is None:
                raise ExprSyntaxError("exponent must be a constant integer", exp_pos)
            rounded = round(folded)
            if abs(folded - rounded) > 1e-12 or abs(rounded) > 1000:
                raise ExprSyntaxError("exponent must be a (small) integer", exp_pos)
            return Pow(base, int(rounded))
        return base

    def parse_atom(self) -> Expr:
        kind, value, pos = self.take()
        if kind == "num":
            return Const(float(value))
        if kind == "ident":
            nk, nv, _ = self.peek()
            if nk == "op" and nv == "(":
                if value not in FUNCTION_NAMES:
                    raise ExprSyntaxError(f"unknown function '{value}'", pos)
                self.take()
                arg = self.parse_expr()
                self.expect_op(")")
                return Fun(value, arg)
            m = _VAR_RE.match(value)
            if m is None:
                raise ExprSyntaxError(f"unknown identifier '{value}'", pos)
            index = int(m.group(1)) - 1
            if index >= self.dim:
                raise ExprSyntaxError(
                    f"variable {value} exceeds chart dimension {self.dim}", pos
                )
            return Var(index)
        if kind == "op" and value == "(":
            node = self.parse_expr()
            self.expect_op(")")
            return node
        raise ExprSyntaxError(f"unexpected token '{value}'" if value else "unexpected end of input", pos)


def parse(source: str, dim: int) -> Expr:
    """Parse an expression in coordinates ``x1 .. x{dim}``.

    Raises :class:`ExprSyntaxError` with a character position on malformed
    input, unknown identifiers, or coordinate indices beyond ``dim``.
    """
    if dim < 1:
        raise ValueError("dim must be at least 1")
    return _Parser(source, dim).parse()
