"""A small arithmetic expression language for config-defined fields.

Grammar (highest precedence first):

    function call           exp  ln  sqrt  sin  cos  pow  min
    unary minus             -x        (binds tighter than '^': -x^2 == (-x)^2)
    '^'                     right-associative
    '*'  '/'                left-associative
    '+'  '-'                left-associative

``pi`` and ``e`` are reserved literals.  ``min`` is intended for diagnostic
fields only.  Parsing either returns an AST or raises ``ParseError`` with a
1-based byte offset and an expected-token description; it never crashes on
arbitrary input.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Sequence

from . import calculus
from .calculus import Number, ScalarField
from .errors import EvalError, ParseError

FUNCTIONS = {"exp": 1, "ln": 1, "sqrt": 1, "sin": 1, "cos": 1, "pow": 2, "min": 2}
CONSTANTS = {"pi": math.pi, "e": math.e}


# -- AST ----------------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class Bin:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    fn: str
    args: tuple


Expr = Num | Var | Neg | Bin | Call


# -- tokenizer ----------------------------------------------------------------

_TOKEN = re.compile(
    r"""(?P<ws>\s+)
      | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
      | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
      | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Tok:
    kind: str  # num | name | op | end
    text: str
    offset: int  # 1-based byte offset


def _tokenize(text: str) -> list[_Tok]:
    toks: list[_Tok] = []
    i = 0
    boff = 1  # running 1-based byte offset
    n = len(text)
    while i < n:
        m = _TOKEN.match(text, i)
        if m is None:
            raise ParseError(boff, f"a token (unexpected character {text[i]!r})")
        span = m.end() - m.start()
        if m.lastgroup != "ws":
            toks.append(_Tok(m.lastgroup, m.group(), boff))
        boff += len(text[i:m.end()].encode("utf-8"))
        i = m.end()
    toks.append(_Tok("end", "", boff))
    return toks


# -- recursive-descent parser ---------------------------------------------------


class _Parser:
    def __init__(self, toks: list[_Tok]):
        self.toks = toks
        self.pos = 0

    @property
    def cur(self) -> _Tok:
        return self.toks[self.pos]

    def advance(self) -> _Tok:
        t = self.cur
        self.pos += 1
        return t

    def expect_op(self, op: str) -> None:
        if self.cur.kind == "op" and self.cur.text == op:
            self.advance()
            return
        raise ParseError(self.cur.offset, f'"{op}"')

    def parse(self) -> Expr:
        e = self.sum()
        if self.cur.kind != "end":
            raise ParseError(self.cur.offset, "end of input")
        return e

    def sum(self) -> Expr:
        left = self.term()
        while self.cur.kind == "op" and self.cur.text in "+-":
            op = self.advance().text
            left = Bin(op, left, self.term())
        return left

    def term(self) -> Expr:
        left = self.power()
        while self.cur.kind == "op" and self.cur.text in "*/":
            op = self.advance().text
            left = Bin(op, left, self.power())
        return left

    def power(self) -> Expr:
        base = self.unary()
        if self.cur.kind == "op" and self.cur.text == "^":
            self.advance()
            return Bin("^", base, self.power())  # right-associative
        return base

    def unary(self) -> Expr:
        if self.cur.kind == "op" and self.cur.text == "-":
            self.advance()
            return Neg(self.unary())
        return self.atom()

    def atom(self) -> Expr:
        t = self.cur
        if t.kind == "num":
            self.advance()
            return Num(float(t.text))
        if t.kind == "name":
            self.advance()
            if self.cur.kind == "op" and self.cur.text == "(":
                if t.text not in FUNCTIONS:
                    raise ParseError(t.offset, f"a known function name (got {t.text!r})")
                self.advance()
                args = [self.sum()]
                while self.cur.kind == "op" and self.cur.text == ",":
                    self.advance()
                    args.append(self.sum())
                self.expect_op(")")
                arity = FUNCTIONS[t.text]
                if len(args) != arity:
                    raise ParseError(t.offset, f"{arity} argument(s) to {t.text}")
                return Call(t.text, tuple(args))
            if t.text in CONSTANTS:
                return Num(CONSTANTS[t.text])
            return Var(t.text)
        if t.kind == "op" and t.text == "(":
            self.advance()
            e = self.sum()
            self.expect_op(")")
            return e
        raise ParseError(t.offset, "a number, name, or parenthesized expression")


def parse(text: str | bytes) -> Expr:
    """Parse UTF-8 text into an AST, or raise a positioned ParseError."""
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(exc.start + 1, "valid UTF-8") from None
    return _Parser(_tokenize(text)).parse()


# -- evaluation, free variables, printing --------------------------------------

_FN_IMPL = {
    "exp": calculus.pexp,
    "ln": calculus.pln,
    "sqrt": calculus.psqrt,
    "sin": calculus.psin,
    "cos": calculus.pcos,
}


def evaluate(e: Expr, bindings: Mapping[str, Number]) -> Number:
    """Evaluate over floats or DNums; raises EvalError for unbound names."""
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        try:
            return bindings[e.name]
        except KeyError:
            raise EvalError(f"unbound variable {e.name!r}") from None
    if isinstance(e, Neg):
        return -evaluate(e.arg, bindings)
    if isinstance(e, Bin):
        a = evaluate(e.left, bindings)
        b = evaluate(e.right, bindings)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            return calculus.pdiv(a, b)
        return calculus.power(a, b)
    args = [evaluate(a, bindings) for a in e.args]
    if e.fn == "pow":
        return calculus.power(args[0], args[1])
    if e.fn == "min":
        return calculus.pmin(args[0], args[1])
    return _FN_IMPL[e.fn](args[0])


def free_variables(e: Expr) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Neg):
        return free_variables(e.arg)
    if isinstance(e, Bin):
        return free_variables(e.left) | free_variables(e.right)
    if isinstance(e, Call):
        out: set[str] = set()
        for a in e.args:
            out |= free_variables(a)
        return out
    return set()


def contains_min(e: Expr) -> bool:
    if isinstance(e, Call):
        return e.fn == "min" or any(contains_min(a) for a in e.args)
    if isinstance(e, Bin):
        return contains_min(e.left) or contains_min(e.right)
    if isinstance(e, Neg):
        return contains_min(e.arg)
    return False


# precedence levels for minimal-parenthesis printing
_SUM, _TERM, _POW, _UNARY, _ATOM = 1, 2, 3, 4, 5


def _fmt_num(v: float) -> str:
    if v == int(v) and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def _pp(e: Expr, level: int) -> str:
    if isinstance(e, Num):
        s = _fmt_num(e.value)
        return s if e.value >= 0 else f"({s})"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        s = f"-{_pp(e.arg, _UNARY)}"
        return s if level <= _UNARY else f"({s})"
    if isinstance(e, Call):
        return f"{e.fn}({', '.join(_pp(a, 0) for a in e.args)})"
    if e.op in "+-":
        s = f"{_pp(e.left, _SUM)} {e.op} {_pp(e.right, _TERM)}"
        mine = _SUM
    elif e.op in "*/":
        s = f"{_pp(e.left, _TERM)}{e.op}{_pp(e.right, _POW)}"
        mine = _TERM
    else:  # '^', right-associative, operands are unaries
        s = f"{_pp(e.left, _UNARY)}^{_pp(e.right, _POW)}"
        mine = _POW
    return s if mine >= level else f"({s})"


def pretty(e: Expr) -> str:
    """Minimal-parenthesis rendering; parse(pretty(parse(s))) == parse(s)."""
    return _pp(e, 0)


def _compile(e: Expr, fixed: Mapping[str, float]):
    """Fold fixed parameters and build a closure tree (faster than walking)."""
    if isinstance(e, Num):
        v = e.value
        return lambda env: v
    if isinstance(e, Var):
        if e.name in fixed:
            v = float(fixed[e.name])
            return lambda env: v
        n = e.name
        return lambda env: env[n]
    if isinstance(e, Neg):
        f = _compile(e.arg, fixed)
        return lambda env: -f(env)
    if isinstance(e, Bin):
        lf = _compile(e.left, fixed)
        rf = _compile(e.right, fixed)
        if e.op == "+":
            return lambda env: lf(env) + rf(env)
        if e.op == "-":
            return lambda env: lf(env) - rf(env)
        if e.op == "*":
            return lambda env: lf(env) * rf(env)
        if e.op == "/":
            _d = calculus.pdiv
            return lambda env: _d(lf(env), rf(env))
        _p = calculus.power
        return lambda env: _p(lf(env), rf(env))
    args = [_compile(a, fixed) for a in e.args]
    if e.fn == "pow":
        a0, a1 = args
        _p = calculus.power
        return lambda env: _p(a0(env), a1(env))
    if e.fn == "min":
        a0, a1 = args
        _m = calculus.pmin
        return lambda env: _m(a0(env), a1(env))
    impl = _FN_IMPL[e.fn]
    a0 = args[0]
    return lambda env: impl(a0(env))


def as_field(source: str | Expr, names: Sequence[str],
             params: Mapping[str, float] | None = None,
             label: str | None = None) -> ScalarField:
    """Turn expression text (or an AST) into a ScalarField over ``names``.

    ``params`` are fixed numbers folded in as constants.  Free variables
    must be covered by ``names`` plus ``params``.
    """
    expr = parse(source) if isinstance(source, (str, bytes)) else source
    fixed = dict(params or {})
    allowed = set(names) | fixed.keys()
    unknown = free_variables(expr) - allowed
    if unknown:
        raise EvalError(f"expression uses undeclared names {sorted(unknown)}")
    return ScalarField(names, _compile(expr, fixed), label=label or pretty(expr))
