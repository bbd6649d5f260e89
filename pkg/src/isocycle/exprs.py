"""Tiny expression language for model right-hand sides, plus forward-mode
dual numbers.

Grammar (infix, 1-based offsets in error messages count from 0):

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('-' | '+') unary | power
    power  := atom (('^' | '**') nonneg-integer)?
    atom   := number | 'pi' | name | name '(' expr ')' | '(' expr ')'

Functions: sin, cos, exp, sqrt. Exponents are literal nonnegative integers
(negative powers are spelled with division). `pi` is a constant, not a
variable.

Evaluation is polymorphic: any value type closed under +, -, *, /, integer
powers and providing sin/cos/exp/sqrt works. Floats and numpy arrays go
through numpy; richer types (Dual below, the jet ring in isocycle.jets)
supply methods of those names. This single evaluator is what lets the same
model definition drive plain samples, derivative seeds, and power-series
coefficients.
"""

from __future__ import annotations

import math

import numpy as np

from isocycle.errors import ModelError

__all__ = [
    "Expr",
    "Num",
    "Var",
    "Neg",
    "Add",
    "Sub",
    "Mul",
    "Div",
    "Pow",
    "Call",
    "parse_expr",
    "eval_expr",
    "expr_variables",
    "expr_has_div",
    "subst",
    "to_source",
    "Dual",
    "dual_env",
]

FUNCTIONS = ("sin", "cos", "exp", "sqrt")


# ---------------------------------------------------------------------------
# AST


class Expr:
    __slots__ = ()


class Num(Expr):
    __slots__ = ("value",)

    def __init__(self, value):
        self.value = float(value)


class Var(Expr):
    __slots__ = ("name",)

    def __init__(self, name):
        self.name = name


class Neg(Expr):
    __slots__ = ("arg",)

    def __init__(self, arg):
        self.arg = arg


class _Bin(Expr):
    __slots__ = ("left", "right")

    def __init__(self, left, right):
        self.left = left
        self.right = right


class Add(_Bin):
    __slots__ = ()


class Sub(_Bin):
    __slots__ = ()


class Mul(_Bin):
    __slots__ = ()


class Div(_Bin):
    __slots__ = ()


class Pow(Expr):
    __slots__ = ("base", "exponent")

    def __init__(self, base, exponent):
        self.base = base
        self.exponent = int(exponent)


class Call(Expr):
    __slots__ = ("fn", "arg")

    def __init__(self, fn, arg):
        self.fn = fn
        self.arg = arg


# ---------------------------------------------------------------------------
# parser


class _Parser:
    def __init__(self, text):
        self.text = text
        self.pos = 0

    def error(self, message, pos=None):
        where = self.pos if pos is None else pos
        raise ModelError(f"{message} at offset {where} in {self.text!r}")

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self):
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def take(self, lit):
        self.skip_ws()
        if self.text.startswith(lit, self.pos):
            self.pos += len(lit)
            return True
        return False

    def parse(self):
        e = self.expr()
        self.skip_ws()
        if self.pos != len(self.text):
            self.error("trailing input")
        return e

    def expr(self):
        e = self.term()
        while True:
            if self.take("+"):
                e = Add(e, self.term())
            elif self.peek() == "-":
                self.pos += 1
                e = Sub(e, self.term())
            else:
                return e

    def term(self):
        e = self.unary()
        while True:
            self.skip_ws()
            if self.text.startswith("**", self.pos):
                return e  # power token, handled below us
            if self.take("*"):
                e = Mul(e, self.unary())
            elif self.take("/"):
                e = Div(e, self.unary())
            else:
                return e

    def unary(self):
        if self.take("-"):
            return Neg(self.unary())
        if self.take("+"):
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        self.skip_ws()
        if self.take("**") or self.take("^"):
            self.skip_ws()
            start = self.pos
            while self.pos < len(self.text) and self.text[self.pos].isdigit():
                self.pos += 1
            if self.pos == start:
                self.error("nonnegative integer exponent expected", start)
            return Pow(base, int(self.text[start : self.pos]))
        return base

    def atom(self):
        self.skip_ws()
        if self.pos >= len(self.text):
            self.error("unexpected end of input")
        ch = self.text[self.pos]
        if ch == "(":
            self.pos += 1
            e = self.expr()
            if not self.take(")"):
                self.error("missing ')'")
            return e
        if ch.isdigit() or ch == ".":
            return self.number()
        if ch.isalpha() or ch == "_":
            start = self.pos
            while self.pos < len(self.text) and (
                self.text[self.pos].isalnum() or self.text[self.pos] == "_"
            ):
                self.pos += 1
            name = self.text[start : self.pos]
            if self.take("("):
                if name not in FUNCTIONS:
                    self.error(f"unknown function {name!r}", start)
                e = self.expr()
                if not self.take(")"):
                    self.error("missing ')'")
                return Call(name, e)
            if name == "pi":
                return Num(math.pi)
            return Var(name)
        self.error(f"unexpected character {ch!r}")

    def number(self):
        start = self.pos
        text = self.text
        while self.pos < len(text) and (text[self.pos].isdigit() or text[self.pos] == "."):
            self.pos += 1
        if self.pos < len(text) and text[self.pos] in "eE":
            mark = self.pos
            self.pos += 1
            if self.pos < len(text) and text[self.pos] in "+-":
                self.pos += 1
            if self.pos < len(text) and text[self.pos].isdigit():
                while self.pos < len(text) and text[self.pos].isdigit():
                    self.pos += 1
            else:
                self.pos = mark  # 'e' belonged to something else
        try:
            return Num(float(text[start : self.pos]))
        except ValueError:
            self.error("malformed number", start)


def parse_expr(text):
    """Parse source text into an Expr; raises ModelError with an offset."""
    if not isinstance(text, str):
        raise ModelError(f"expression must be a string, got {type(text).__name__}")
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# evaluation and inspection


def _fn_apply(name, v):
    if hasattr(v, name):
        return getattr(v, name)()
    return getattr(np, name)(v)


def eval_expr(e, env):
    """Evaluate over any ring; `env` maps variable names to values."""
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        try:
            return env[e.name]
        except KeyError:
            raise ModelError(f"unknown variable {e.name!r}") from None
    if isinstance(e, Neg):
        return -eval_expr(e.arg, env)
    if isinstance(e, Add):
        return eval_expr(e.left, env) + eval_expr(e.right, env)
    if isinstance(e, Sub):
        return eval_expr(e.left, env) - eval_expr(e.right, env)
    if isinstance(e, Mul):
        return eval_expr(e.left, env) * eval_expr(e.right, env)
    if isinstance(e, Div):
        return eval_expr(e.left, env) / eval_expr(e.right, env)
    if isinstance(e, Pow):
        base = eval_expr(e.base, env)
        k = e.exponent
        if k == 0:
            return 1.0
        acc = None
        while k:  # binary exponentiation: works in any ring
            if k & 1:
                acc = base if acc is None else acc * base
            k >>= 1
            if k:
                base = base * base
        return acc
    if isinstance(e, Call):
        return _fn_apply(e.fn, eval_expr(e.arg, env))
    raise TypeError(f"not an Expr: {e!r}")


def expr_variables(e):
    """Set of free variable names."""
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Neg):
        return expr_variables(e.arg)
    if isinstance(e, _Bin):
        return expr_variables(e.left) | expr_variables(e.right)
    if isinstance(e, Pow):
        return expr_variables(e.base)
    if isinstance(e, Call):
        return expr_variables(e.arg)
    return set()


def expr_has_div(e):
    if isinstance(e, Div):
        return True
    if isinstance(e, Neg):
        return expr_has_div(e.arg)
    if isinstance(e, _Bin):
        return expr_has_div(e.left) or expr_has_div(e.right)
    if isinstance(e, Pow):
        return expr_has_div(e.base)
    if isinstance(e, Call):
        return expr_has_div(e.arg)
    return False


def subst(e, mapping):
    """Replace variables by sub-expressions (used to pull a cartesian delay
    law back through a change of coordinates)."""
    if isinstance(e, Var):
        return mapping.get(e.name, e)
    if isinstance(e, Num):
        return e
    if isinstance(e, Neg):
        return Neg(subst(e.arg, mapping))
    if isinstance(e, Add):
        return Add(subst(e.left, mapping), subst(e.right, mapping))
    if isinstance(e, Sub):
        return Sub(subst(e.left, mapping), subst(e.right, mapping))
    if isinstance(e, Mul):
        return Mul(subst(e.left, mapping), subst(e.right, mapping))
    if isinstance(e, Div):
        return Div(subst(e.left, mapping), subst(e.right, mapping))
    if isinstance(e, Pow):
        return Pow(subst(e.base, mapping), e.exponent)
    if isinstance(e, Call):
        return Call(e.fn, subst(e.arg, mapping))
    raise TypeError(f"not an Expr: {e!r}")


def to_source(e):
    """Render back to parseable text (fully parenthesized where needed)."""
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"-({to_source(e.arg)})"
    if isinstance(e, Add):
        return f"({to_source(e.left)} + {to_source(e.right)})"
    if isinstance(e, Sub):
        return f"({to_source(e.left)} - {to_source(e.right)})"
    if isinstance(e, Mul):
        return f"({to_source(e.left)} * {to_source(e.right)})"
    if isinstance(e, Div):
        return f"({to_source(e.left)} / {to_source(e.right)})"
    if isinstance(e, Pow):
        return f"({to_source(e.base)})^{e.exponent}"
    if isinstance(e, Call):
        return f"{e.fn}({to_source(e.arg)})"
    raise TypeError(f"not an Expr: {e!r}")


# ---------------------------------------------------------------------------
# forward-mode duals


class Dual:
    """value + directional derivatives, over any coefficient ring.

    `val` and the entries of `grad` may be floats, arrays, or jets —
    anything the expression evaluator accepts. Arithmetic follows the chain
    rule; mixing with plain ring elements lifts them with zero derivative.
    """

    __slots__ = ("val", "grad")

    # keep numpy from broadcasting us into object arrays: binary ufuncs with
    # an ndarray on the left must fall through to our reflected operators
    __array_ufunc__ = None

    def __init__(self, val, grad):
        self.val = val
        self.grad = tuple(grad)

    def _lift(self, other):
        if isinstance(other, Dual):
            return other
        return Dual(other, (0.0,) * len(self.grad))

    def __add__(self, other):
        o = self._lift(other)
        return Dual(self.val + o.val, tuple(a + b for a, b in zip(self.grad, o.grad)))

    __radd__ = __add__

    def __sub__(self, other):
        o = self._lift(other)
        return Dual(self.val - o.val, tuple(a - b for a, b in zip(self.grad, o.grad)))

    def __rsub__(self, other):
        return self._lift(other).__sub__(self)

    def __mul__(self, other):
        o = self._lift(other)
        return Dual(
            self.val * o.val,
            tuple(a * o.val + self.val * b for a, b in zip(self.grad, o.grad)),
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._lift(other)
        q = self.val / o.val
        return Dual(q, tuple((a - q * b) / o.val for a, b in zip(self.grad, o.grad)))

    def __rtruediv__(self, other):
        return self._lift(other).__truediv__(self)

    def __neg__(self):
        return Dual(-self.val, tuple(-a for a in self.grad))

    def sin(self):
        c = _fn_apply("cos", self.val)
        return Dual(_fn_apply("sin", self.val), tuple(c * a for a in self.grad))

    def cos(self):
        s = _fn_apply("sin", self.val)
        return Dual(_fn_apply("cos", self.val), tuple(-(s * a) for a in self.grad))

    def exp(self):
        v = _fn_apply("exp", self.val)
        return Dual(v, tuple(v * a for a in self.grad))

    def sqrt(self):
        v = _fn_apply("sqrt", self.val)
        half = 0.5 / v
        return Dual(v, tuple(half * a for a in self.grad))


def dual_env(env, wrt):
    """Wrap `env` so that the variables named in `wrt` become derivative
    seeds (unit directions, in order); returns the new environment."""
    out = dict(env)
    m = len(wrt)
    for i, name in enumerate(wrt):
        seed = tuple(1.0 if j == i else 0.0 for j in range(m))
        out[name] = Dual(env[name], seed)
    return out
