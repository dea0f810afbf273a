"""Scalar expressions of coordinates and parameters.

Small infix language used everywhere a potential, metric entry or vector
field component has to be entered by hand.  Supports exact forward-mode
differentiation up to second order (gradients and Hessians) through
second-order dual numbers; no symbolic rewriting takes place.

Grammar (loosest to tightest binding)::

    expr   :=  term (('+'|'-') term)*
    term   :=  unary (('*'|'/') unary)*
    unary  :=  '-' unary | power
    power  :=  atom ('^' unary)?          # right associative
    atom   :=  NUMBER | NAME | NAME '(' expr (',' expr)* ')' | '(' expr ')'

Known function names: sin, cos, sinh, cosh, exp, log, sqrt, abs and the
radius shorthand ``r(x, y, z)`` which expands to ``sqrt(x^2 + y^2 + z^2)``
at parse time.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "Expr",
    "Num",
    "Var",
    "Param",
    "Unary",
    "Binary",
    "ParseDiagnostic",
    "ParseError",
    "EvalError",
    "JetDomainError",
    "SecondOrderJet",
    "parse_expression",
    "expr_to_str",
    "evaluate",
    "free_variables",
    "free_parameters",
    "jet2",
    "is_finite",
    "compile_value",
    "compile_value_grad",
]

_FUNCTIONS = ("sin", "cos", "sinh", "cosh", "exp", "log", "sqrt", "abs")


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------

class Expr:
    """Base class for expression nodes.  Nodes are immutable."""

    __slots__ = ()

    def __str__(self) -> str:
        return expr_to_str(self)


@dataclass(frozen=True)
class Num(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Param(Expr):
    name: str


@dataclass(frozen=True)
class Unary(Expr):
    op: str  # 'neg' or a function name
    operand: Expr


@dataclass(frozen=True)
class Binary(Expr):
    op: str  # '+', '-', '*', '/', '^'
    left: Expr
    right: Expr


@dataclass(frozen=True)
class ParseDiagnostic:
    """Where and why a parse failed.  Offsets are byte offsets into the input."""

    offset: int
    message: str
    token: str


class ParseError(ValueError):
    def __init__(self, diagnostic: ParseDiagnostic):
        super().__init__(f"at offset {diagnostic.offset}: {diagnostic.message} "
                         f"(near {diagnostic.token!r})")
        self.diagnostic = diagnostic


class EvalError(ValueError):
    """A binding is missing or otherwise unusable."""


class JetDomainError(ValueError):
    """A primitive is not twice differentiable at the evaluation point."""

    def __init__(self, primitive: str, point_value: float):
        super().__init__(f"{primitive} is not C^2 at argument {point_value!r}")
        self.primitive = primitive


# ---------------------------------------------------------------------------
# Lexer / parser
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            # skip over whitespace-only tail
            rest = text[pos:]
            if rest.strip() == "":
                break
            bad = rest.strip()[0]
            off = pos + rest.index(bad)
            raise ParseError(ParseDiagnostic(off, "unexpected character", bad))
        if m.lastgroup == "num":
            tokens.append(("num", m.group("num"), m.start("num")))
        elif m.lastgroup == "name":
            tokens.append(("name", m.group("name"), m.start("name")))
        else:
            tokens.append(("op", m.group("op"), m.start("op")))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, variables: frozenset, parameters: frozenset):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.variables = variables
        self.parameters = parameters

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, message: str) -> ParseError:
        kind, value, offset = self.peek()
        token = value if kind != "end" else "<end of input>"
        return ParseError(ParseDiagnostic(offset, message, token))

    def expect_op(self, op: str):
        kind, value, _ = self.peek()
        if kind != "op" or value != op:
            raise self.fail(f"expected {op!r}")
        self.next()

    def parse(self) -> Expr:
        e = self.expr()
        if self.peek()[0] != "end":
            raise self.fail("unexpected trailing input")
        return e

    def expr(self) -> Expr:
        e = self.term()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "+-":
                self.next()
                e = Binary(value, e, self.term())
            else:
                return e

    def term(self) -> Expr:
        e = self.unary()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "*/":
                self.next()
                e = Binary(value, e, self.unary())
            else:
                return e

    def unary(self) -> Expr:
        kind, value, _ = self.peek()
        if kind == "op" and value == "-":
            self.next()
            inner = self.unary()
            if isinstance(inner, Num):
                # fold so that printed negative literals re-parse identically
                return Num(-inner.value)
            return Unary("neg", inner)
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        kind, value, _ = self.peek()
        if kind == "op" and value == "^":
            self.next()
            return Binary("^", base, self.unary())
        return base

    def atom(self) -> Expr:
        kind, value, offset = self.peek()
        if kind == "num":
            self.next()
            return Num(float(value))
        if kind == "op" and value == "(":
            self.next()
            e = self.expr()
            self.expect_op(")")
            return e
        if kind == "name":
            self.next()
            nkind, nvalue, _ = self.peek()
            if nkind == "op" and nvalue == "(":
                return self.call(value, offset)
            if value in self.variables:
                return Var(value)
            if value in self.parameters:
                return Param(value)
            raise ParseError(ParseDiagnostic(offset, "unknown name", value))
        raise self.fail("expected a number, name or parenthesized expression")

    def call(self, fname: str, offset: int) -> Expr:
        self.expect_op("(")
        args = [self.expr()]
        while self.peek()[:2] == ("op", ","):
            self.next()
            args.append(self.expr())
        self.expect_op(")")
        if fname in _FUNCTIONS:
            if len(args) != 1:
                raise ParseError(ParseDiagnostic(
                    offset, f"{fname} takes exactly one argument", fname))
            return Unary(fname, args[0])
        if fname == "r":
            # radius shorthand: r(x, y, z) == sqrt(x^2 + y^2 + z^2)
            if not args:
                raise ParseError(ParseDiagnostic(offset, "r needs arguments", fname))
            total: Expr = Binary("^", args[0], Num(2.0))
            for a in args[1:]:
                total = Binary("+", total, Binary("^", a, Num(2.0)))
            return Unary("sqrt", total)
        raise ParseError(ParseDiagnostic(offset, "unknown function", fname))


def parse_expression(text: str,
                     variables: Iterable[str] = (),
                     parameters: Iterable[str] = ()) -> Expr:
    """Parse ``text`` over the given coordinate and parameter names.

    Any name that is neither a variable, a parameter nor a known function
    is a parse error.  Raises :class:`ParseError` carrying a
    :class:`ParseDiagnostic`.
    """
    if not text or not text.strip():
        raise ParseError(ParseDiagnostic(0, "empty expression", ""))
    var_set = frozenset(variables)
    par_set = frozenset(parameters)
    clash = var_set & par_set
    if clash:
        raise ValueError(f"names used both as variable and parameter: {sorted(clash)}")
    return _Parser(text, var_set, par_set).parse()


# ---------------------------------------------------------------------------
# Printing
# ---------------------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def _prec(e: Expr) -> int:
    if isinstance(e, Binary):
        return _PREC[e.op]
    if isinstance(e, Unary) and e.op == "neg":
        return _PREC["neg"]
    return 9


def expr_to_str(e: Expr) -> str:
    """Print so that re-parsing yields a structurally identical tree."""
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, (Var, Param)):
        return e.name
    if isinstance(e, Unary):
        if e.op == "neg":
            inner = expr_to_str(e.operand)
            if _prec(e.operand) < _PREC["neg"]:
                inner = f"({inner})"
            return f"-{inner}"
        return f"{e.op}({expr_to_str(e.operand)})"
    if isinstance(e, Binary):
        op = e.op
        lhs, rhs = expr_to_str(e.left), expr_to_str(e.right)
        lp, rp = _prec(e.left), _prec(e.right)
        if op == "^":
            if lp <= _PREC["^"]:  # ^ is right associative
                lhs = f"({lhs})"
            if rp < _PREC["^"]:
                rhs = f"({rhs})"
            return f"{lhs}^{rhs}"
        myp = _PREC[op]
        if lp < myp:
            lhs = f"({lhs})"
        # -, / are not associative on the right
        if rp < myp or (rp == myp and op in "-/"):
            rhs = f"({rhs})"
        return f"{lhs} {op} {rhs}" if op in "+-" else f"{lhs}{op}{rhs}"
    raise TypeError(f"not an Expr: {e!r}")


def free_variables(e: Expr) -> set[str]:
    out: set[str] = set()
    _collect(e, Var, out)
    return out


def free_parameters(e: Expr) -> set[str]:
    out: set[str] = set()
    _collect(e, Param, out)
    return out


def _collect(e: Expr, kind: type, out: set[str]) -> None:
    if isinstance(e, kind):
        out.add(e.name)
    elif isinstance(e, Unary):
        _collect(e.operand, kind, out)
    elif isinstance(e, Binary):
        _collect(e.left, kind, out)
        _collect(e.right, kind, out)


# ---------------------------------------------------------------------------
# Plain evaluation
# ---------------------------------------------------------------------------

def is_finite(x: float) -> bool:
    """Validity predicate for evaluation results (False for NaN and +-Inf)."""
    return math.isfinite(x)


_UNARY_EVAL = {
    "neg": np.negative,
    "sin": np.sin,
    "cos": np.cos,
    "sinh": np.sinh,
    "cosh": np.cosh,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
}


def evaluate(e: Expr, binding: Mapping[str, float]) -> float:
    """IEEE double evaluation.  NaN/Inf are returned, not trapped."""
    with np.errstate(all="ignore"):
        return float(_eval(e, binding))


def _eval(e: Expr, binding: Mapping[str, float]):
    if isinstance(e, Num):
        return np.float64(e.value)
    if isinstance(e, (Var, Param)):
        try:
            return np.float64(binding[e.name])
        except KeyError:
            raise EvalError(f"unbound name: {e.name}") from None
    if isinstance(e, Unary):
        return _UNARY_EVAL[e.op](_eval(e.operand, binding))
    if isinstance(e, Binary):
        a = _eval(e.left, binding)
        b = _eval(e.right, binding)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            return a / b
        return np.power(a, b)
    raise TypeError(f"not an Expr: {e!r}")


# ---------------------------------------------------------------------------
# Second-order jets (value, gradient, Hessian)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SecondOrderJet:
    """Value, exact gradient, exact symmetric Hessian at a point."""

    value: float
    gradient: np.ndarray
    hessian: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.hessian, dtype=float)
        # rebuild from the upper triangle so symmetry is exact
        sym = np.triu(h) + np.triu(h, 1).T
        object.__setattr__(self, "gradient", np.asarray(self.gradient, dtype=float))
        object.__setattr__(self, "hessian", sym)


class _Jet:
    __slots__ = ("v", "g", "h")

    def __init__(self, v, g, h):
        self.v = v
        self.g = g
        self.h = h


def _jet_const(v: float, n: int) -> _Jet:
    return _Jet(float(v), np.zeros(n), np.zeros((n, n)))


def _jet_add(a: _Jet, b: _Jet) -> _Jet:
    return _Jet(a.v + b.v, a.g + b.g, a.h + b.h)


def _jet_sub(a: _Jet, b: _Jet) -> _Jet:
    return _Jet(a.v - b.v, a.g - b.g, a.h - b.h)


def _jet_mul(a: _Jet, b: _Jet) -> _Jet:
    outer = np.outer(a.g, b.g)
    return _Jet(a.v * b.v,
                a.g * b.v + a.v * b.g,
                a.h * b.v + a.v * b.h + outer + outer.T)


def _jet_chain(a: _Jet, f0: float, f1: float, f2: float) -> _Jet:
    """Jet of f(a) given f, f', f'' at a.v."""
    return _Jet(f0, f1 * a.g, f1 * a.h + f2 * np.outer(a.g, a.g))


def _jet_unary(op: str, a: _Jet) -> _Jet:
    v = a.v
    if op == "neg":
        return _Jet(-v, -a.g, -a.h)
    if op == "sin":
        return _jet_chain(a, math.sin(v), math.cos(v), -math.sin(v))
    if op == "cos":
        return _jet_chain(a, math.cos(v), -math.sin(v), -math.cos(v))
    if op == "sinh":
        return _jet_chain(a, math.sinh(v), math.cosh(v), math.sinh(v))
    if op == "cosh":
        return _jet_chain(a, math.cosh(v), math.sinh(v), math.cosh(v))
    if op == "exp":
        ev = math.exp(v)
        return _jet_chain(a, ev, ev, ev)
    if op == "log":
        logv = np.log(v)  # nan for v < 0, -inf at 0 (IEEE semantics)
        return _jet_chain(a, float(logv), 1.0 / v if v != 0 else math.inf,
                          -1.0 / (v * v) if v != 0 else -math.inf)
    if op == "sqrt":
        if v == 0.0:
            raise JetDomainError("sqrt", v)
        sv = float(np.sqrt(v))
        return _jet_chain(a, sv, 0.5 / sv, -0.25 / (sv * v))
    if op == "abs":
        if v == 0.0:
            raise JetDomainError("abs", v)
        s = math.copysign(1.0, v)
        return _jet_chain(a, abs(v), s, 0.0)
    raise ValueError(f"unknown unary op {op!r}")


def _jet_pow_const(a: _Jet, c: float) -> _Jet:
    v = a.v
    if c == 0.0:
        return _Jet(1.0, np.zeros_like(a.g), np.zeros_like(a.h))
    if c == 1.0:
        return a
    if float(c).is_integer():
        k = int(c)
        with np.errstate(all="ignore"):  # IEEE at poles (0^-k -> inf)
            f0 = float(np.power(v, float(k)))
            f1 = float(k * np.power(v, float(k - 1)))
            f2 = float(k * (k - 1) * np.power(v, float(k - 2)))
        return _jet_chain(a, f0, f1, f2)
    if v == 0.0 and c < 2.0:
        raise JetDomainError("^", v)
    with np.errstate(all="ignore"):
        f0 = float(np.power(v, c))
        f1 = float(c * np.power(v, c - 1.0))
        f2 = float(c * (c - 1.0) * np.power(v, c - 2.0))
    return _jet_chain(a, f0, f1, f2)


def _jet_binary(op: str, a: _Jet, b: _Jet) -> _Jet:
    if op == "+":
        return _jet_add(a, b)
    if op == "-":
        return _jet_sub(a, b)
    if op == "*":
        return _jet_mul(a, b)
    if op == "/":
        recip = _jet_chain(b, 1.0 / b.v if b.v != 0 else math.inf,
                           -1.0 / (b.v * b.v) if b.v != 0 else math.inf,
                           2.0 / (b.v ** 3) if b.v != 0 else math.inf)
        return _jet_mul(a, recip)
    if op == "^":
        # general exponent: a^b = exp(b*log(a)); constant exponents are
        # intercepted in _jet_eval and use the power rule instead
        la = _jet_unary("log", a)
        return _jet_unary("exp", _jet_mul(b, la))
    raise ValueError(f"unknown binary op {op!r}")


def _jet_eval(e: Expr, env: Mapping[str, _Jet], n: int) -> _Jet:
    if isinstance(e, Num):
        return _jet_const(e.value, n)
    if isinstance(e, (Var, Param)):
        try:
            return env[e.name]
        except KeyError:
            raise EvalError(f"unbound name: {e.name}") from None
    if isinstance(e, Unary):
        return _jet_unary(e.op, _jet_eval(e.operand, env, n))
    if isinstance(e, Binary):
        if e.op == "^" and isinstance(e.right, Num):
            return _jet_pow_const(_jet_eval(e.left, env, n), e.right.value)
        return _jet_binary(e.op, _jet_eval(e.left, env, n),
                           _jet_eval(e.right, env, n))
    raise TypeError(f"not an Expr: {e!r}")


def jet2(e: Expr,
         variables: Sequence[str],
         point: Sequence[float],
         params: Mapping[str, float] | None = None) -> SecondOrderJet:
    """Exact value/gradient/Hessian of ``e`` w.r.t. ``variables`` at ``point``.

    All other names must be supplied through ``params`` (held constant).
    Raises :class:`JetDomainError` when a non-smooth primitive (abs, sqrt,
    fractional power) is hit exactly at its kink.
    """
    point = np.asarray(point, dtype=float)
    n = len(variables)
    if point.shape != (n,):
        raise ValueError(f"point has shape {point.shape}, expected ({n},)")
    env: dict[str, _Jet] = {}
    for i, name in enumerate(variables):
        g = np.zeros(n)
        g[i] = 1.0
        env[name] = _Jet(float(point[i]), g, np.zeros((n, n)))
    for name, value in (params or {}).items():
        if name not in env:
            env[name] = _jet_const(value, n)
    with np.errstate(all="ignore"):
        out = _jet_eval(e, env, n)
    return SecondOrderJet(out.v, out.g, out.h)


# ---------------------------------------------------------------------------
# Compiled first-order fast path
# ---------------------------------------------------------------------------
#
# Integrators evaluate gradients millions of times; a tree walk with numpy
# carriers is too slow for that.  Here we unroll forward-mode accumulation
# into straight-line Python source once per expression and exec it.  The
# arithmetic is identical to the dual-number rules above, just first order
# and with sparsity (only partials that can be nonzero are materialized).

class _CG:
    def __init__(self):
        self.lines: list[str] = []
        self.count = 0

    def tmp(self) -> str:
        self.count += 1
        return f"_t{self.count}"

    def emit(self, name: str, rhs: str) -> str:
        self.lines.append(f"    {name} = {rhs}")
        return name


def _cg_walk(e: Expr, cg: _CG, var_index: Mapping[str, int],
             params: Mapping[str, float]):
    """Return (const_value | None, value_src, {var: grad_src}).

    Either const_value is a float (and the other fields are unused) or
    value_src is an emitted temp/atom and the dict maps variable indices to
    gradient source strings.
    """
    if isinstance(e, Num):
        return e.value, None, None
    if isinstance(e, Param):
        try:
            return float(params[e.name]), None, None
        except KeyError:
            raise EvalError(f"unbound parameter: {e.name}") from None
    if isinstance(e, Var):
        try:
            i = var_index[e.name]
        except KeyError:
            raise EvalError(f"unbound name: {e.name}") from None
        return None, f"_q{i}", {i: "1.0"}

    if isinstance(e, Unary):
        c, v, g = _cg_walk(e.operand, cg, var_index, params)
        if c is not None:
            return _fold_unary(e.op, c), None, None
        return _cg_unary(e.op, v, g, cg)

    if isinstance(e, Binary):
        ca, va, ga = _cg_walk(e.left, cg, var_index, params)
        cb, vb, gb = _cg_walk(e.right, cg, var_index, params)
        if ca is not None and cb is not None:
            return _fold_binary(e.op, ca, cb), None, None
        return _cg_binary(e.op, ca, va, ga, cb, vb, gb, cg)

    raise TypeError(f"not an Expr: {e!r}")


def _fold_unary(op: str, c: float) -> float:
    fns = {"neg": lambda x: -x, "sin": math.sin, "cos": math.cos,
           "sinh": math.sinh, "cosh": math.cosh, "exp": math.exp,
           "log": math.log, "sqrt": math.sqrt, "abs": abs}
    return fns[op](c)


def _fold_binary(op: str, a: float, b: float) -> float:
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        return a / b
    return math.pow(a, b)


_CG_UNARY = {
    # op: (value template, derivative template using {x}=arg, {v}=value temp)
    "sin": ("math.sin({x})", "math.cos({x})"),
    "cos": ("math.cos({x})", "-math.sin({x})"),
    "sinh": ("math.sinh({x})", "math.cosh({x})"),
    "cosh": ("math.cosh({x})", "math.sinh({x})"),
    "exp": ("math.exp({x})", "{v}"),
    "log": ("math.log({x})", "1.0/{x}"),
    "sqrt": ("math.sqrt({x})", "0.5/{v}"),
    "abs": ("abs({x})", "math.copysign(1.0, {x})"),
}


def _cg_unary(op: str, v: str, g: dict, cg: _CG):
    if op == "neg":
        nv = cg.emit(cg.tmp(), f"-{v}")
        ng = {i: cg.emit(cg.tmp(), f"-{s}") for i, s in g.items()}
        return None, nv, ng
    val_t, der_t = _CG_UNARY[op]
    nv = cg.emit(cg.tmp(), val_t.format(x=v))
    if g:
        d = cg.emit(cg.tmp(), der_t.format(x=v, v=nv))
        ng = {i: cg.emit(cg.tmp(), f"{d}*{s}") for i, s in g.items()}
    else:
        ng = {}
    return None, nv, ng


def _cg_binary(op: str, ca, va, ga, cb, vb, gb, cg: _CG):
    a = repr(ca) if ca is not None else va
    b = repr(cb) if cb is not None else vb
    ga = ga or {}
    gb = gb or {}

    if op in "+-":
        nv = cg.emit(cg.tmp(), f"{a} {op} {b}")
        ng = {}
        for i in ga.keys() | gb.keys():
            if i in ga and i in gb:
                ng[i] = cg.emit(cg.tmp(), f"{ga[i]} {op} {gb[i]}")
            elif i in ga:
                ng[i] = ga[i]
            else:
                ng[i] = gb[i] if op == "+" else cg.emit(cg.tmp(), f"-{gb[i]}")
        return None, nv, ng

    if op == "*":
        nv = cg.emit(cg.tmp(), f"{a}*{b}")
        ng = {}
        for i in ga.keys() | gb.keys():
            terms = []
            if i in ga:
                terms.append(f"{ga[i]}*{b}")
            if i in gb:
                terms.append(f"{a}*{gb[i]}")
            ng[i] = cg.emit(cg.tmp(), " + ".join(terms))
        return None, nv, ng

    if op == "/":
        nv = cg.emit(cg.tmp(), f"{a}/{b}")
        ng = {}
        if gb:
            inv = cg.emit(cg.tmp(), f"1.0/{b}")
            for i in ga.keys() | gb.keys():
                if i in ga and i in gb:
                    ng[i] = cg.emit(cg.tmp(), f"({ga[i]} - {nv}*{gb[i]})*{inv}")
                elif i in ga:
                    ng[i] = cg.emit(cg.tmp(), f"{ga[i]}*{inv}")
                else:
                    ng[i] = cg.emit(cg.tmp(), f"-{nv}*{gb[i]}*{inv}")
        else:
            inv = repr(1.0 / cb) if cb is not None else None
            for i in ga:
                ng[i] = cg.emit(cg.tmp(), f"{ga[i]}*{inv}")
        return None, nv, ng

    if op == "^":
        if cb is not None:
            return _cg_pow_const(a, ga, cb, cg)
        # general power via exp(b*log(a))
        lg = cg.emit(cg.tmp(), f"math.log({a})")
        nv = cg.emit(cg.tmp(), f"math.exp({b}*{lg})")
        ng = {}
        for i in ga.keys() | gb.keys():
            terms = []
            if i in gb:
                terms.append(f"{gb[i]}*{lg}")
            if i in ga:
                terms.append(f"{b}*{ga[i]}/{a}")
            ng[i] = cg.emit(cg.tmp(), f"{nv}*(" + " + ".join(terms) + ")")
        return None, nv, ng

    raise ValueError(f"unknown binary op {op!r}")


def _cg_pow_const(a: str, ga: dict, c: float, cg: _CG):
    if c == 0.0:
        return 1.0, None, None
    if c == 1.0:
        return None, a, dict(ga)
    if float(c).is_integer() and 2 <= c <= 4:
        k = int(c)
        nv = cg.emit(cg.tmp(), "*".join([a] * k))
        dcoef = cg.emit(cg.tmp(), f"{float(k)!r}*" + ("*".join([a] * (k - 1))))
    else:
        nv = cg.emit(cg.tmp(), f"math.pow({a}, {c!r})")
        dcoef = cg.emit(cg.tmp(), f"{c!r}*math.pow({a}, {c - 1.0!r})")
    ng = {i: cg.emit(cg.tmp(), f"{dcoef}*{s}") for i, s in ga.items()}
    return None, nv, ng


def _compile(e: Expr, variables: Sequence[str], params: Mapping[str, float],
             want_grad: bool) -> Callable:
    var_index = {name: i for i, name in enumerate(variables)}
    cg = _CG()
    c, v, g = _cg_walk(e, cg, var_index, params or {})
    n = len(variables)
    header = ["def _compiled(q):"]
    header += [f"    _q{i} = q[{i}]" for i in range(n)]
    if c is not None:
        v = repr(float(c))
        g = {}
    if want_grad:
        grad_src = ", ".join((g or {}).get(i, "0.0") for i in range(n))
        ret = f"    return {v}, ({grad_src}{',' if n == 1 else ''})"
    else:
        ret = f"    return {v}"
    src = "\n".join(header + cg.lines + [ret])
    ns: dict = {"math": math}
    exec(src, ns)  # noqa: S102 - generated from a closed grammar
    fn = ns["_compiled"]
    fn.__source__ = src
    return fn


def compile_value(e: Expr, variables: Sequence[str],
                  params: Mapping[str, float] | None = None) -> Callable:
    """Compile to ``f(q) -> value`` with parameters bound now."""
    return _compile(e, variables, params or {}, want_grad=False)


def compile_value_grad(e: Expr, variables: Sequence[str],
                       params: Mapping[str, float] | None = None) -> Callable:
    """Compile to ``f(q) -> (value, grad_tuple)`` with parameters bound now.

    Same forward-mode arithmetic as :func:`jet2` truncated at first order;
    used on integrator hot paths.  Unlike :func:`evaluate` this path raises
    (ZeroDivisionError/ValueError/OverflowError) on singular points instead
    of returning IEEE specials; integrators treat that as trajectory
    truncation.
    """
    return _compile(e, variables, params or {}, want_grad=True)
