"""Scalar expressions over chart coordinates.

Expressions are immutable trees built from constants, coordinate variables,
the unary functions ``exp log sin cos sqrt``, negation, and the binary
operators ``+ - * / ^`` (the exponent must fold to a constant).

Grammar (EBNF)::

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := "-" unary | power
    power   := atom ("^" unary)?
    atom    := number | name | func "(" expr ")" | "(" expr ")"
    func    := "exp" | "log" | "sin" | "cos" | "sqrt"
    number  := digits ["." digits] [("e" | "E") ["+" | "-"] digits]

Differentiation is symbolic; only light simplification is applied
(constant folding and absorption of 0 and 1).
"""
from __future__ import annotations

import math
import re
from typing import Iterable, Mapping, Sequence

__all__ = [
    "Expr", "Const", "Var", "Unary", "Binary",
    "ExprError", "ExprSyntaxError", "UnknownVariable", "DomainError", "NonFinite",
    "parse", "evaluate", "derive", "to_string", "compile_expr",
    "const", "var", "add", "sub", "mul", "div", "power", "neg", "func",
]

FUNCTIONS = ("exp", "log", "sin", "cos", "sqrt")


class ExprError(Exception):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, position: int, expected: str, source: str = ""):
        self.position = position
        self.expected = expected
        self.source = source
        super().__init__(f"syntax error at position {position}: expected {expected}")


class UnknownVariable(ExprError):
    def __init__(self, name: str, position: int | None = None):
        self.name = name
        self.position = position
        super().__init__(f"unknown variable {name!r}")


class DomainError(ExprError, ArithmeticError):
    pass


class NonFinite(ExprError, ArithmeticError):
    pass


class Expr:
    __slots__ = ("_hash",)

    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __truediv__(self, other):
        return div(self, _lift(other))

    def __rtruediv__(self, other):
        return div(_lift(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __str__(self):
        return to_string(self)

    def __repr__(self):
        return f"Expr({to_string(self)!r})"

    def variables(self) -> frozenset[str]:
        out: set[str] = set()
        stack = [self]
        while stack:
            node = stack.pop()
            if isinstance(node, Var):
                out.add(node.name)
            elif isinstance(node, Unary):
                stack.append(node.arg)
            elif isinstance(node, Binary):
                stack.extend((node.left, node.right))
        return frozenset(out)


class Const(Expr):
    __slots__ = ("value",)

    def __init__(self, value: float):
        self.value = float(value)
        self._hash = hash(("c", self.value))

    def __eq__(self, other):
        return isinstance(other, Const) and other.value == self.value

    def __hash__(self):
        return self._hash


class Var(Expr):
    __slots__ = ("name",)

    def __init__(self, name: str):
        self.name = name
        self._hash = hash(("v", name))

    def __eq__(self, other):
        return isinstance(other, Var) and other.name == self.name

    def __hash__(self):
        return self._hash


class Unary(Expr):
    """``op`` is one of ``neg`` or a name in FUNCTIONS."""

    __slots__ = ("op", "arg")

    def __init__(self, op: str, arg: Expr):
        self.op = op
        self.arg = arg
        self._hash = hash(("u", op, arg))

    def __eq__(self, other):
        return (self is other) or (
            isinstance(other, Unary) and other._hash == self._hash
            and other.op == self.op and other.arg == self.arg)

    def __hash__(self):
        return self._hash


class Binary(Expr):
    __slots__ = ("op", "left", "right")

    def __init__(self, op: str, left: Expr, right: Expr):
        self.op = op
        self.left = left
        self.right = right
        self._hash = hash(("b", op, left, right))

    def __eq__(self, other):
        return (self is other) or (
            isinstance(other, Binary) and other._hash == self._hash
            and other.op == self.op and other.left == self.left
            and other.right == self.right)

    def __hash__(self):
        return self._hash


# -- smart constructors -------------------------------------------------------

ZERO = Const(0.0)
ONE = Const(1.0)


def _lift(value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, (int, float)):
        return Const(value)
    raise TypeError(f"cannot use {type(value).__name__} in an expression")


def const(value: float) -> Const:
    return Const(value)


def var(name: str) -> Var:
    return Var(name)


def _is(e: Expr, value: float) -> bool:
    return isinstance(e, Const) and e.value == value


def add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    if _is(a, 0.0):
        return b
    if _is(b, 0.0):
        return a
    return Binary("+", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    if _is(b, 0.0):
        return a
    if _is(a, 0.0):
        return neg(b)
    return Binary("-", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    if _is(a, 0.0) or _is(b, 0.0):
        return ZERO
    if _is(a, 1.0):
        return b
    if _is(b, 1.0):
        return a
    return Binary("*", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const) and b.value != 0.0:
        return Const(a.value / b.value)
    if _is(b, 1.0):
        return a
    if _is(a, 0.0) and not _is(b, 0.0):
        return ZERO
    return Binary("/", a, b)


def power(base: Expr, exponent) -> Expr:
    exponent = _lift(exponent)
    if not isinstance(exponent, Const):
        raise ExprError("exponent must be a constant")
    n = exponent.value
    if isinstance(base, Const):
        try:
            return Const(_pow(base.value, n))
        except ExprError:
            pass
    if n == 0.0:
        return ONE
    if n == 1.0:
        return base
    return Binary("^", base, exponent)


def neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Unary) and a.op == "neg":
        return a.arg
    return Unary("neg", a)


def func(name: str, a: Expr) -> Expr:
    if name not in FUNCTIONS:
        raise ExprError(f"unknown function {name!r}")
    if isinstance(a, Const):
        try:
            return Const(_apply(name, a.value))
        except ExprError:
            pass
    return Unary(name, a)


# -- parsing ------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))")


def _tokenize(src: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    n = len(src)
    while pos < n:
        if src[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(src, pos)
        if m is None or m.end() == pos:
            raise ExprSyntaxError(pos, "number, name, operator or parenthesis", src)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(src)))
    return tokens


class _Parser:
    def __init__(self, src: str, coords: Sequence[str] | None):
        self.src = src
        self.tokens = _tokenize(src)
        self.i = 0
        self.coords = None if coords is None else set(coords)

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, text, pos = self.peek()
        if text != value or kind == "end":
            raise ExprSyntaxError(pos, value, self.src)
        self.i += 1

    def parse(self) -> Expr:
        e = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ExprSyntaxError(pos, "operator or end of input", self.src)
        return e

    def expr(self) -> Expr:
        left = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.next()[1]
            right = self.term()
            left = add(left, right) if op == "+" else sub(left, right)
        return left

    def term(self) -> Expr:
        left = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.next()[1]
            right = self.unary()
            left = mul(left, right) if op == "*" else div(left, right)
        return left

    def unary(self) -> Expr:
        if self.peek()[0] == "op" and self.peek()[1] == "-":
            self.next()
            return neg(self.unary())
        return self.pow()

    def pow(self) -> Expr:
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            pos = self.next()[2]
            exponent = self.unary()
            if not isinstance(exponent, Const):
                raise ExprSyntaxError(pos + 1, "constant exponent", self.src)
            return power(base, exponent)
        return base

    def atom(self) -> Expr:
        kind, text, pos = self.next()
        if kind == "num":
            return Const(float(text))
        if kind == "name":
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return func(text, arg)
            if self.coords is not None and text not in self.coords:
                raise UnknownVariable(text, pos)
            return Var(text)
        if kind == "op" and text == "(":
            e = self.expr()
            self.expect(")")
            return e
        expected = "expression"
        raise ExprSyntaxError(pos, expected, self.src)


def parse(src: str, coords: Sequence[str] | None = None) -> Expr:
    """Parse ``src``; names must be in ``coords`` when it is given."""
    if not isinstance(src, str) or not src.strip():
        raise ExprSyntaxError(0, "nonempty expression", src if isinstance(src, str) else "")
    return _Parser(src, coords).parse()


# -- printing -----------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def _fmt_const(value: float) -> str:
    if value.is_integer() and abs(value) < 1e15:
        text = str(int(value))
    else:
        text = repr(value)
    return f"({text})" if value < 0 or text.startswith("-") else text


def _prec(e: Expr) -> int:
    if isinstance(e, Binary):
        return _PREC[e.op]
    if isinstance(e, Unary) and e.op == "neg":
        return _PREC["neg"]
    return 5


def to_string(e: Expr) -> str:
    """Render ``e`` so that ``parse`` rebuilds an equal tree."""
    if isinstance(e, Const):
        return _fmt_const(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Unary):
        if e.op == "neg":
            inner = to_string(e.arg)
            # "-x*y" would reparse as (-x)*y
            if _prec(e.arg) < _PREC["^"]:
                inner = f"({inner})"
            return "-" + inner
        return f"{e.op}({to_string(e.arg)})"
    p = _PREC[e.op]
    left = to_string(e.left)
    right = to_string(e.right)
    if e.op == "^":
        if _prec(e.left) <= p:
            left = f"({left})"
        return f"{left}^{right}"
    if _prec(e.left) < p:
        left = f"({left})"
    # left-associative: equal precedence on the right needs parentheses
    if _prec(e.right) <= p and not (isinstance(e.right, Unary) and e.right.op == "neg"):
        right = f"({right})"
    sep = f" {e.op} " if e.op in "+-" else e.op
    return f"{left}{sep}{right}"


# -- evaluation ---------------------------------------------------------------

def _apply(op: str, x: float) -> float:
    if op == "neg":
        return -x
    if op == "exp":
        try:
            return math.exp(x)
        except OverflowError:
            raise NonFinite("exp overflow") from None
    if op == "log":
        if not x > 0.0:
            raise DomainError(f"log of nonpositive value {x!r}")
        return math.log(x)
    if op == "sqrt":
        if x < 0.0:
            raise DomainError(f"sqrt of negative value {x!r}")
        return math.sqrt(x)
    if op == "sin":
        return math.sin(x)
    if op == "cos":
        return math.cos(x)
    raise ExprError(f"unknown function {op!r}")


def _pow(x: float, n: float) -> float:
    if float(n).is_integer():
        k = int(n)
        if x == 0.0 and k < 0:
            raise NonFinite("zero to a negative power")
        try:
            return x ** k
        except OverflowError:
            raise NonFinite("power overflow") from None
    if not x > 0.0:
        raise DomainError(f"real power of nonpositive base {x!r}")
    try:
        return x ** n
    except OverflowError:
        raise NonFinite("power overflow") from None


def _div(a: float, b: float) -> float:
    if b == 0.0:
        raise NonFinite("division by zero")
    return a / b


def _check(x: float) -> float:
    if not math.isfinite(x):
        raise NonFinite(f"non-finite value {x!r}")
    return x


def evaluate(e: Expr, point: Mapping[str, float]) -> float:
    """Evaluate ``e`` at ``point`` (a name -> value mapping)."""
    memo: dict[Expr, float] = {}

    def ev(node: Expr) -> float:
        if isinstance(node, Const):
            return node.value
        if isinstance(node, Var):
            try:
                return float(point[node.name])
            except KeyError:
                raise UnknownVariable(node.name) from None
        hit = memo.get(node)
        if hit is not None:
            return hit
        if isinstance(node, Unary):
            out = _apply(node.op, ev(node.arg))
        else:
            a = ev(node.left)
            b = ev(node.right)
            if node.op == "+":
                out = a + b
            elif node.op == "-":
                out = a - b
            elif node.op == "*":
                out = a * b
            elif node.op == "/":
                out = _div(a, b)
            else:
                out = _pow(a, b)
        out = _check(out)
        memo[node] = out
        return out

    return _check(ev(e))


_RUNTIME = {"_apply": _apply, "_pow": _pow, "_div": _div, "_check": _check,
            "_exp": math.exp, "_sin": math.sin, "_cos": math.cos, "_isfinite": math.isfinite}


def compile_expr(exprs: Iterable[Expr], coords: Sequence[str]):
    """Compile expressions into one function ``f(x) -> list[float]``.

    ``x`` is indexed in ``coords`` order.  Shared subtrees are evaluated once;
    error semantics match :func:`evaluate`.
    """
    exprs = list(exprs)
    index = {name: i for i, name in enumerate(coords)}
    names: dict[Expr, str] = {}
    lines: list[str] = []

    def emit(node: Expr) -> str:
        if isinstance(node, Const):
            return repr(node.value)
        if isinstance(node, Var):
            if node.name not in index:
                raise UnknownVariable(node.name)
            return f"x{index[node.name]}"
        hit = names.get(node)
        if hit is not None:
            return hit
        guarded = True
        if isinstance(node, Unary):
            a = emit(node.arg)
            if node.op == "neg":
                code = f"-{a}"
                guarded = False
            elif node.op in ("sin", "cos"):
                code = f"_{node.op}({a})"
            else:
                code = f"_apply({node.op!r}, {a})"
        else:
            a = emit(node.left)
            b = emit(node.right)
            if node.op == "/":
                code = f"_div({a}, {b})"
            elif node.op == "^":
                n = node.right.value if isinstance(node.right, Const) else None
                if n == 2.0:
                    code = f"{a} * {a}"
                else:
                    code = f"_pow({a}, {b})"
            else:
                # overflow here propagates to the checked outputs
                code = f"{a} {node.op} {b}"
                guarded = False
        name = f"t{len(names)}"
        names[node] = name
        lines.append((name, code, guarded))
        return name

    outs = [emit(e) for e in exprs]
    header = "".join(f"    x{i} = float(x[{i}])\n" for i in range(len(coords)))
    checked = "".join(f"    {n} = _check({c})\n" if g else f"    {n} = {c}\n" for n, c, g in lines)
    # The fast variant skips the per-node checks.  A sum over every guarded
    # node and output is non-finite whenever one of them is, and only then
    # is the checked variant re-run to raise the precise error.
    watched = [n for n, _, g in lines if g] + outs
    sums = "".join(f"    _s {'=' if i == 0 else '+='} {' + '.join(watched[i:i + 64])}\n"
                   for i in range(0, len(watched), 64))
    src = ("def _checked(x):\n" + header + checked
           + f"    return [{', '.join(f'_check({o})' for o in outs)}]\n\n"
           + "def _f(x):\n" + header + "".join(f"    {n} = {c}\n" for n, c, _ in lines)
           + sums + "    if not _isfinite(_s):\n        return _checked(x)\n"
           + f"    return [{', '.join(f'float({o})' for o in outs)}]\n")
    namespace = dict(_RUNTIME)
    exec(compile(src, "<polarmetric.expr>", "exec"), namespace)
    return namespace["_f"]


# -- differentiation ----------------------------------------------------------

def derive(e: Expr, coord: str, _memo: dict | None = None) -> Expr:
    """Exact partial derivative of ``e`` with respect to ``coord``."""
    memo = {} if _memo is None else _memo
    hit = memo.get(e)
    if hit is not None:
        return hit
    if isinstance(e, Const):
        out: Expr = ZERO
    elif isinstance(e, Var):
        out = ONE if e.name == coord else ZERO
    elif isinstance(e, Unary):
        da = derive(e.arg, coord, memo)
        if _is(da, 0.0):
            out = ZERO
        elif e.op == "neg":
            out = neg(da)
        elif e.op == "exp":
            out = mul(e, da)
        elif e.op == "log":
            out = div(da, e.arg)
        elif e.op == "sin":
            out = mul(func("cos", e.arg), da)
        elif e.op == "cos":
            out = neg(mul(func("sin", e.arg), da))
        else:  # sqrt
            out = div(da, mul(Const(2.0), e))
    else:
        a, b = e.left, e.right
        if e.op == "^":
            da = derive(a, coord, memo)
            n = b.value
            out = ZERO if _is(da, 0.0) else mul(mul(Const(n), power(a, n - 1.0)), da)
        else:
            da = derive(a, coord, memo)
            db = derive(b, coord, memo)
            if e.op == "+":
                out = add(da, db)
            elif e.op == "-":
                out = sub(da, db)
            elif e.op == "*":
                out = add(mul(da, b), mul(a, db))
            else:
                # (a/b)' = a'/b - a b'/b^2
                out = sub(div(da, b), div(mul(a, db), power(b, 2.0)))
    memo[e] = out
    return out
