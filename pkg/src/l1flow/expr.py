"""Residual expressions: parsing, evaluation, and forward-mode derivatives.

Residuals are entered as text like ``"x1^3 - 3*x1"`` over variables
``x1 ... xN``. They are parsed once into an immutable tree and evaluated
many times along a solve, so the tree is compiled to a closure on first
use. Derivatives are exact (forward-mode dual numbers), never numeric:
first order in a single vector-tangent pass, second order by nesting
duals, one pass per variable.

Grammar (whitespace insignificant)::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := "-" unary | power
    power  := base ("^" unary)?          # right-associative
    base   := number | "pi" | var | func "(" expr ")" | "(" expr ")"
    var    := "x" digits                 # 1-based index
    func   := sin | cos | exp | ln | sqrt

``^`` binds tighter than unary minus: ``-x1^2`` is ``-(x1^2)``. Integer
exponents (after constant folding) are evaluated by repeated
multiplication, so negative bases are fine; non-integer exponents
require a positive base at evaluation time.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ResidualExpr",
    "DualValue",
    "Dual",
    "parse",
    "eval_value",
    "eval_dual",
    "ExpressionError",
    "ExpressionSyntaxError",
    "UnknownIdentifierError",
    "VariableIndexError",
    "ExpressionDomainError",
]

_FUNCTIONS = ("sin", "cos", "exp", "ln", "sqrt")


class ExpressionError(ValueError):
    """Base class for expression parsing and evaluation errors."""


class ExpressionSyntaxError(ExpressionError):
    """Malformed expression text; carries the offending character offset."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class UnknownIdentifierError(ExpressionSyntaxError):
    """Identifier is neither a known function, ``pi``, nor ``x<digits>``."""


class VariableIndexError(ExpressionSyntaxError):
    """Variable index outside ``[1, n_vars]``."""


class ExpressionDomainError(ExpressionError):
    """Evaluation hit an invalid operand (ln/sqrt domain, division by zero).

    ``subexpression`` holds the printed form of the offending node.
    """

    def __init__(self, message: str, subexpression: str):
        super().__init__(f"{message} in '{subexpression}'")
        self.subexpression = subexpression


# --------------------------------------------------------------------------
# AST nodes

class Num:
    __slots__ = ("value",)

    def __init__(self, value: float):
        self.value = float(value)

    def __eq__(self, other):
        return type(other) is Num and other.value == self.value

    def __hash__(self):
        return hash((Num, self.value))


class Var:
    __slots__ = ("index",)  # 1-based, as written in the source text

    def __init__(self, index: int):
        self.index = index

    def __eq__(self, other):
        return type(other) is Var and other.index == self.index

    def __hash__(self):
        return hash((Var, self.index))


class Neg:
    __slots__ = ("operand",)

    def __init__(self, operand):
        self.operand = operand

    def __eq__(self, other):
        return type(other) is Neg and other.operand == self.operand

    def __hash__(self):
        return hash((Neg, self.operand))


class BinOp:
    __slots__ = ("op", "left", "right")  # op in "+-*/"

    def __init__(self, op, left, right):
        self.op = op
        self.left = left
        self.right = right

    def __eq__(self, other):
        return (
            type(other) is BinOp
            and other.op == self.op
            and other.left == self.left
            and other.right == self.right
        )

    def __hash__(self):
        return hash((BinOp, self.op, self.left, self.right))


class PowInt:
    __slots__ = ("base", "exponent")  # exponent: Python int

    def __init__(self, base, exponent: int):
        self.base = base
        self.exponent = exponent

    def __eq__(self, other):
        return (
            type(other) is PowInt
            and other.exponent == self.exponent
            and other.base == self.base
        )

    def __hash__(self):
        return hash((PowInt, self.base, self.exponent))


class Pow:
    __slots__ = ("base", "exponent")  # exponent: arbitrary subtree

    def __init__(self, base, exponent):
        self.base = base
        self.exponent = exponent

    def __eq__(self, other):
        return (
            type(other) is Pow
            and other.base == self.base
            and other.exponent == self.exponent
        )

    def __hash__(self):
        return hash((Pow, self.base, self.exponent))


class Call:
    __slots__ = ("func", "arg")

    def __init__(self, func: str, arg):
        self.func = func
        self.arg = arg

    def __eq__(self, other):
        return type(other) is Call and other.func == self.func and other.arg == self.arg

    def __hash__(self):
        return hash((Call, self.func, self.arg))


# --------------------------------------------------------------------------
# Tokenizer

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()]))"
)

_VAR_RE = re.compile(r"^x(\d+)$")


def _tokenize(text: str):
    # U+2212 minus sign is accepted as a synonym for ASCII '-'
    text = text.replace("−", "-")
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            at = n - len(stripped)
            raise ExpressionSyntaxError(f"unexpected character '{stripped[0]}'", at)
        if m.group("num") is not None:
            tokens.append(("num", m.group("num"), m.start("num")))
        elif m.group("ident") is not None:
            tokens.append(("ident", m.group("ident"), m.start("ident")))
        else:
            tokens.append(("op", m.group("op"), m.start("op")))
        pos = m.end()
    tokens.append(("end", "", n))
    return tokens


# --------------------------------------------------------------------------
# Parser

class _Parser:
    def __init__(self, text: str, n_vars: int):
        self.tokens = _tokenize(text)
        self.i = 0
        self.n_vars = n_vars

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op: str):
        kind, value, pos = self.peek()
        if kind != "op" or value != op:
            raise ExpressionSyntaxError(f"expected '{op}'", pos)
        self.advance()

    def parse(self):
        node = self.expr()
        kind, value, pos = self.peek()
        if kind != "end":
            raise ExpressionSyntaxError(f"unexpected token '{value}'", pos)
        return node

    def expr(self):
        node = self.term()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "+-":
                self.advance()
                node = BinOp(value, node, self.term())
            else:
                return node

    def term(self):
        node = self.unary()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "*/":
                self.advance()
                node = BinOp(value, node, self.unary())
            else:
                return node

    def unary(self):
        kind, value, _ = self.peek()
        if kind == "op" and value == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self):
        node = self.base()
        kind, value, _ = self.peek()
        if kind == "op" and value == "^":
            self.advance()
            exponent = self.unary()  # exponent may carry a unary minus
            return _make_pow(node, exponent)
        return node

    def base(self):
        kind, value, pos = self.advance()
        if kind == "num":
            return Num(float(value))
        if kind == "ident":
            if value == "pi":
                return Num(math.pi)
            if value in _FUNCTIONS:
                self.expect_op("(")
                arg = self.expr()
                self.expect_op(")")
                return Call(value, arg)
            m = _VAR_RE.match(value)
            if m:
                index = int(m.group(1))
                if index < 1 or index > self.n_vars:
                    raise VariableIndexError(
                        f"variable '{value}' out of range 1..{self.n_vars}", pos
                    )
                return Var(index)
            raise UnknownIdentifierError(f"unknown identifier '{value}'", pos)
        if kind == "op" and value == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        if kind == "op" and value == "-":
            return Neg(self.base())
        if kind == "end":
            raise ExpressionSyntaxError("unexpected end of expression", pos)
        raise ExpressionSyntaxError(f"unexpected token '{value}'", pos)


def _try_const(node):
    """Value of a variable-free subtree, or None."""
    try:
        return _compile(node)([])
    except (ExpressionError, IndexError, OverflowError, ZeroDivisionError):
        return None


def _contains_var(node) -> bool:
    if isinstance(node, Var):
        return True
    if isinstance(node, Num):
        return False
    if isinstance(node, Neg):
        return _contains_var(node.operand)
    if isinstance(node, BinOp):
        return _contains_var(node.left) or _contains_var(node.right)
    if isinstance(node, (Pow, PowInt)):
        return _contains_var(node.base) or (
            not isinstance(node, PowInt) and _contains_var(node.exponent)
        )
    return _contains_var(node.arg)


def _make_pow(base, exponent):
    # Constant integer exponents become PowInt (repeated multiplication,
    # exact derivatives, negative bases allowed). Everything else is the
    # general positive-base power.
    if not _contains_var(exponent):
        value = _try_const(exponent)
        if value is not None and math.isfinite(value) and value == int(value):
            return PowInt(base, int(value))
    return Pow(base, exponent)


# --------------------------------------------------------------------------
# Canonical printing

_PREC_ADD, _PREC_MUL, _PREC_UNARY, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5


def _precedence(node) -> int:
    if isinstance(node, (Num, Var, Call)):
        return _PREC_ATOM
    if isinstance(node, (Pow, PowInt)):
        return _PREC_POW
    if isinstance(node, Neg):
        return _PREC_UNARY
    return _PREC_MUL if node.op in "*/" else _PREC_ADD


def _format_number(value: float) -> str:
    if value == int(value) and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


def to_string(node) -> str:
    """Canonical text form; re-parsing it reproduces the identical tree."""
    if isinstance(node, Num):
        return _format_number(node.value)
    if isinstance(node, Var):
        return f"x{node.index}"
    if isinstance(node, Call):
        return f"{node.func}({to_string(node.arg)})"
    if isinstance(node, Neg):
        inner = to_string(node.operand)
        if _precedence(node.operand) < _PREC_UNARY:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(node, (Pow, PowInt)):
        base = to_string(node.base)
        if _precedence(node.base) < _PREC_ATOM:
            base = f"({base})"  # covers nested powers: right-associativity
        if isinstance(node, PowInt):
            return f"{base}^{node.exponent}"
        exponent = to_string(node.exponent)
        if _precedence(node.exponent) < _PREC_UNARY:
            exponent = f"({exponent})"
        return f"{base}^{exponent}"
    left = to_string(node.left)
    if _precedence(node.left) < _precedence(node):
        left = f"({left})"
    right = to_string(node.right)
    # parenthesize same-precedence right operands to keep left associativity
    if _precedence(node.right) <= _precedence(node):
        right = f"({right})"
    return f"{left} {node.op} {right}"


# --------------------------------------------------------------------------
# Dual numbers (nestable: components are floats, arrays, or Duals)

class Dual:
    """Forward-mode scalar: value plus tangent.

    ``eps`` may be a float (directional derivative), an ndarray (full
    gradient), or another Dual (second-order nesting). Arithmetic recurses
    through whatever the components are.
    """

    __slots__ = ("val", "eps")

    def __init__(self, val, eps):
        self.val = val
        self.eps = eps

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val + other.val, self.eps + other.eps)
        return Dual(self.val + other, self.eps)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val - other.val, self.eps - other.eps)
        return Dual(self.val - other, self.eps)

    def __rsub__(self, other):
        return Dual(other - self.val, -self.eps)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(
                self.val * other.val, self.eps * other.val + self.val * other.eps
            )
        return Dual(self.val * other, self.eps * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            q = self.val / other.val
            return Dual(q, (self.eps - q * other.eps) / other.val)
        return Dual(self.val / other, self.eps / other)

    def __rtruediv__(self, other):
        q = other / self.val
        return Dual(q, -q * self.eps / self.val)

    def __neg__(self):
        return Dual(-self.val, -self.eps)

    def __repr__(self):
        return f"Dual({self.val!r}, {self.eps!r})"


def _sin(u):
    if isinstance(u, Dual):
        return Dual(_sin(u.val), _cos(u.val) * u.eps)
    return math.sin(u)


def _cos(u):
    if isinstance(u, Dual):
        return Dual(_cos(u.val), -_sin(u.val) * u.eps)
    return math.cos(u)


def _exp(u):
    if isinstance(u, Dual):
        e = _exp(u.val)
        return Dual(e, e * u.eps)
    return math.exp(u)


def _ln(u):
    if isinstance(u, Dual):
        return Dual(_ln(u.val), u.eps / u.val)
    if u <= 0.0:
        raise ValueError("ln of a non-positive argument")
    return math.log(u)


def _sqrt(u):
    if isinstance(u, Dual):
        root = _sqrt(u.val)
        if not isinstance(root, Dual) and root == 0.0:
            raise ValueError("sqrt derivative at zero")
        return Dual(root, u.eps / (2.0 * root))
    if u < 0.0:
        raise ValueError("sqrt of a negative argument")
    return math.sqrt(u)


def _ipow(u, k: int):
    # repeated multiplication (binary exponentiation); k != 0
    if k < 0:
        return 1.0 / _ipow(u, -k)
    result = None
    factor = u
    while True:
        if k & 1:
            result = factor if result is None else result * factor
        k >>= 1
        if not k:
            return result
        factor = factor * factor


_CALL_IMPL = {"sin": _sin, "cos": _cos, "exp": _exp, "ln": _ln, "sqrt": _sqrt}


# --------------------------------------------------------------------------
# Compilation to closures

def _guard(fn, node):
    text = to_string(node)

    def wrapped(v):
        try:
            return fn(v)
        except ZeroDivisionError:
            raise ExpressionDomainError("division by zero", text) from None
        except (ValueError, OverflowError) as err:
            raise ExpressionDomainError(str(err), text) from None

    return wrapped


def _compile(node):
    if isinstance(node, Num):
        value = node.value
        return lambda v: value
    if isinstance(node, Var):
        j = node.index - 1
        return lambda v: v[j]
    if isinstance(node, Neg):
        operand = _compile(node.operand)
        return lambda v: -operand(v)
    if isinstance(node, BinOp):
        left = _compile(node.left)
        right = _compile(node.right)
        if node.op == "+":
            return lambda v: left(v) + right(v)
        if node.op == "-":
            return lambda v: left(v) - right(v)
        if node.op == "*":
            return lambda v: left(v) * right(v)
        return _guard(lambda v: left(v) / right(v), node)
    if isinstance(node, PowInt):
        base = _compile(node.base)
        k = node.exponent
        if k == 0:
            return lambda v: base(v) * 0.0 + 1.0  # keeps dual structure
        return _guard(lambda v: _ipow(base(v), k), node)
    if isinstance(node, Pow):
        base = _compile(node.base)
        exponent = _compile(node.exponent)

        def general_pow(v):
            b = base(v)
            b_val = b.val if isinstance(b, Dual) else b
            while isinstance(b_val, Dual):
                b_val = b_val.val
            if b_val <= 0.0:
                raise ValueError("non-integer power of a non-positive base")
            return _exp(exponent(v) * _ln(b))

        return _guard(general_pow, node)
    impl = _CALL_IMPL[node.func]
    arg = _compile(node.arg)
    return _guard(lambda v: impl(arg(v)), node)


# --------------------------------------------------------------------------
# Public value types and API

@dataclass
class DualValue:
    """Value plus exact derivatives of a residual at one point."""

    value: float
    first: np.ndarray
    second: np.ndarray | None = None


class ResidualExpr:
    """A parsed residual: expression tree over ``n_vars`` variables.

    Immutable after parse; safe to share across threads. Evaluation goes
    through a closure compiled lazily on first use.
    """

    __slots__ = ("root", "n_vars", "_fn")

    def __init__(self, root, n_vars: int):
        self.root = root
        self.n_vars = n_vars
        self._fn = None

    @property
    def compiled(self):
        if self._fn is None:
            self._fn = _compile(self.root)
        return self._fn

    def __str__(self):
        return to_string(self.root)

    def __repr__(self):
        return f"ResidualExpr({to_string(self.root)!r}, n_vars={self.n_vars})"

    def __eq__(self, other):
        return (
            isinstance(other, ResidualExpr)
            and other.n_vars == self.n_vars
            and other.root == self.root
        )


def parse(text: str, n_vars: int) -> ResidualExpr:
    """Parse expression text over variables ``x1 ... x<n_vars>``.

    Raises
    ------
    ExpressionSyntaxError
        Malformed input (with character position), unknown identifier,
        or a variable index outside ``[1, n_vars]``.
    """
    if n_vars < 1:
        raise ValueError("n_vars must be a positive integer")
    root = _Parser(text, n_vars).parse()
    return ResidualExpr(root, n_vars)


def eval_value(expr: ResidualExpr, x) -> float:
    """Plain float evaluation at x (length ``n_vars``)."""
    v = [float(c) for c in x]
    if len(v) != expr.n_vars:
        raise ValueError(f"expected {expr.n_vars} variables, got {len(v)}")
    return float(expr.compiled(v))


def eval_dual(expr: ResidualExpr, x, order: int = 1) -> DualValue:
    """Evaluate value, gradient, and optionally the Hessian at x.

    Parameters
    ----------
    expr : ResidualExpr
    x : sequence of length ``n_vars``
    order : 1 or 2
        With ``order=2`` the symmetric Hessian is computed by n nested
        forward passes (one per variable).

    Raises
    ------
    ExpressionDomainError
        Invalid operand somewhere in the tree; the message names the
        offending subexpression.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    xs = [float(c) for c in x]
    n = expr.n_vars
    if len(xs) != n:
        raise ValueError(f"expected {n} variables, got {len(xs)}")
    fn = expr.compiled

    eye = np.eye(n)
    if order == 1:
        out = fn([Dual(xs[j], eye[j]) for j in range(n)])
        if not isinstance(out, Dual):
            return DualValue(float(out), np.zeros(n))
        return DualValue(float(out.val), np.asarray(out.eps, dtype=float).copy())

    hessian = np.zeros((n, n))
    value = 0.0
    first = np.zeros(n)
    for k in range(n):
        seeds = [
            Dual(Dual(xs[j], eye[j]), Dual(1.0 if j == k else 0.0, np.zeros(n)))
            for j in range(n)
        ]
        out = fn(seeds)
        if not isinstance(out, Dual):
            return DualValue(float(out), np.zeros(n), np.zeros((n, n)))
        value = float(out.val.val)
        first = np.asarray(out.val.eps, dtype=float).copy()
        hessian[k] = np.asarray(out.eps.eps, dtype=float)
    hessian = 0.5 * (hessian + hessian.T)
    return DualValue(value, first, hessian)
