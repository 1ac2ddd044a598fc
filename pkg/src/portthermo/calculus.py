"""Forward-mode automatic differentiation, scalar fields, and bracket algebra.

``DNum`` carries a value plus a tuple of partial derivatives, one slot per
seeded independent variable.  All arithmetic is written generically so the
slots (and the value) may themselves be ``DNum`` instances; that nesting is
what gives exact directional Jacobians for the canonical-transformation
checks without a second implementation.

``ScalarField`` wraps a deterministic evaluation rule over named coordinates
that works unchanged over plain floats and over ``DNum`` values.  Gradients
are exact to machine precision for the composed elementary operations;
finite differences are used only as an independent oracle in the test suite.
"""

from __future__ import annotations

import math
from typing import Any, Callable, Iterable, Mapping, Sequence

from .errors import DomainError, EvalError

Number = Any  # float or DNum, possibly nested


def scalar_value(x: Number) -> float:
    """Strip any derivative decoration and return the underlying float."""
    while isinstance(x, DNum):
        x = x.v
    return x


class DNum:
    """First-order derivative number: a value and a tuple of partials."""

    __slots__ = ("v", "d")

    def __init__(self, v: Number, d: Iterable[Number]):
        self.v = v
        self.d = tuple(d)

    @staticmethod
    def seed(value: Number, index: int, width: int) -> "DNum":
        d = [0.0] * width
        d[index] = 1.0
        return DNum(value, d)

    def __repr__(self) -> str:
        return f"DNum({self.v!r}, {self.d!r})"

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, o):
        if isinstance(o, DNum):
            return DNum(self.v + o.v, [a + b for a, b in zip(self.d, o.d)])
        if isinstance(o, (int, float)):
            return DNum(self.v + o, self.d)
        return NotImplemented

    def __radd__(self, o):
        if isinstance(o, (int, float)):
            return DNum(o + self.v, self.d)
        return NotImplemented

    def __sub__(self, o):
        if isinstance(o, DNum):
            return DNum(self.v - o.v, [a - b for a, b in zip(self.d, o.d)])
        if isinstance(o, (int, float)):
            return DNum(self.v - o, self.d)
        return NotImplemented

    def __rsub__(self, o):
        if isinstance(o, (int, float)):
            return DNum(o - self.v, [-a for a in self.d])
        return NotImplemented

    def __mul__(self, o):
        if isinstance(o, DNum):
            sv, ov = self.v, o.v
            return DNum(sv * ov, [sv * b + a * ov for a, b in zip(self.d, o.d)])
        if isinstance(o, (int, float)):
            return DNum(self.v * o, [a * o for a in self.d])
        return NotImplemented

    def __rmul__(self, o):
        if isinstance(o, (int, float)):
            return DNum(o * self.v, [o * a for a in self.d])
        return NotImplemented

    def __truediv__(self, o):
        if isinstance(o, DNum):
            if scalar_value(o.v) == 0.0:
                raise DomainError("division by zero")
            q = self.v / o.v
            return DNum(q, [(a - q * b) / o.v for a, b in zip(self.d, o.d)])
        if isinstance(o, (int, float)):
            if o == 0:
                raise DomainError("division by zero")
            return DNum(self.v / o, [a / o for a in self.d])
        return NotImplemented

    def __rtruediv__(self, o):
        if isinstance(o, (int, float)):
            if scalar_value(self.v) == 0.0:
                raise DomainError("division by zero")
            q = o / self.v
            return DNum(q, [(-q) * b / self.v for b in self.d])
        return NotImplemented

    def __neg__(self):
        return DNum(-self.v, [-a for a in self.d])

    def __pos__(self):
        return self

    def __pow__(self, k):
        if isinstance(k, DNum):
            return pexp(k * pln(self))
        if not isinstance(k, (int, float)):
            return NotImplemented
        return power(self, k)

    def __rpow__(self, base):
        if isinstance(base, (int, float)):
            return pexp(self * pln(base))
        return NotImplemented

    # -- comparisons act on the underlying value ----------------------------

    def __lt__(self, o):
        return scalar_value(self) < scalar_value(o)

    def __le__(self, o):
        return scalar_value(self) <= scalar_value(o)

    def __gt__(self, o):
        return scalar_value(self) > scalar_value(o)

    def __ge__(self, o):
        return scalar_value(self) >= scalar_value(o)


# -- elementary functions, generic over floats and DNums ---------------------


def pexp(x: Number) -> Number:
    if isinstance(x, DNum):
        ev = pexp(x.v)
        return DNum(ev, [ev * a for a in x.d])
    return math.exp(x)


def pln(x: Number) -> Number:
    if scalar_value(x) <= 0.0:
        raise DomainError("ln of a non-positive argument")
    if isinstance(x, DNum):
        return DNum(pln(x.v), [a / x.v for a in x.d])
    return math.log(x)


def psqrt(x: Number) -> Number:
    sv = scalar_value(x)
    if sv < 0.0:
        raise DomainError("sqrt of a negative argument")
    if isinstance(x, DNum):
        if sv == 0.0:
            raise DomainError("sqrt derivative singular at zero")
        r = psqrt(x.v)
        return DNum(r, [a / (2.0 * r) for a in x.d])
    return math.sqrt(x)


def psin(x: Number) -> Number:
    if isinstance(x, DNum):
        c = pcos(x.v)
        return DNum(psin(x.v), [c * a for a in x.d])
    return math.sin(x)


def pcos(x: Number) -> Number:
    if isinstance(x, DNum):
        s = psin(x.v)
        return DNum(pcos(x.v), [-s * a for a in x.d])
    return math.cos(x)


def pdiv(a: Number, b: Number) -> Number:
    if scalar_value(b) == 0.0:
        raise DomainError("division by zero")
    return a / b


def power(base: Number, expo: Number) -> Number:
    """base ** expo with real-domain rules (no complex results)."""
    if isinstance(expo, DNum):
        return pexp(expo * pln(base))
    k = float(expo)
    if isinstance(base, DNum):
        bv = scalar_value(base.v)
        if bv < 0.0 and not k.is_integer():
            raise DomainError("negative base with non-integer exponent")
        if bv == 0.0:
            if k < 0.0:
                raise DomainError("zero base with negative exponent")
            if 0.0 < k < 1.0:
                raise DomainError("power derivative singular at zero base")
        if k == 0.0:
            return 1.0
        val = power(base.v, k)
        coef = 1.0 if k == 1.0 else k * power(base.v, k - 1.0)
        return DNum(val, [coef * a for a in base.d])
    if base < 0.0 and not k.is_integer():
        raise DomainError("negative base with non-integer exponent")
    if base == 0.0 and k < 0.0:
        raise DomainError("zero base with negative exponent")
    if k == 0.0:
        return 1.0
    return base ** k


def pmin(a: Number, b: Number) -> Number:
    """Branch minimum (ties take the first argument); for diagnostics only."""
    return a if scalar_value(a) <= scalar_value(b) else b


# -- scalar fields ------------------------------------------------------------


class Overlay(dict):
    """Mutable view over a base mapping: writes stay local, reads fall back.

    Used to seed derivative numbers (or bind a port input) without copying
    the whole environment, and without defeating lazily-computed entries of
    the base mapping.
    """

    __slots__ = ("base",)

    def __init__(self, base: Mapping):
        super().__init__()
        self.base = base

    def __missing__(self, key):
        return self.base[key]

    def __contains__(self, key):
        return dict.__contains__(self, key) or key in self.base


class ScalarField:
    """Deterministic scalar function of named coordinates.

    The evaluation rule receives a dict binding at least ``names``; extra
    keys are permitted and ignored.  The same rule is evaluated over floats
    and over DNums, which is what makes every field differentiable.
    """

    __slots__ = ("names", "fn", "label")

    def __init__(self, names: Sequence[str], fn: Callable[[Mapping[str, Number]], Number],
                 label: str = "field"):
        self.names = tuple(names)
        self.fn = fn
        self.label = label

    def __repr__(self) -> str:
        return f"ScalarField({self.label!r}, names={self.names})"

    def _check(self, bindings: Mapping[str, Number]) -> None:
        for n in self.names:
            if n not in bindings:
                missing = [m for m in self.names if m not in bindings]
                raise EvalError(f"{self.label}: unbound coordinates {missing}")

    def value(self, bindings: Mapping[str, Number]) -> Number:
        self._check(bindings)
        return self.fn(bindings)

    def __call__(self, **bindings: Number) -> Number:
        return self.value(bindings)

    def value_and_gradient(self, bindings: Mapping[str, Number],
                           wrt: Sequence[str] | None = None):
        """Evaluate and differentiate in one pass.

        Returns ``(value, partials)`` with one partial per entry of ``wrt``
        (default: ``self.names``).  Names in ``wrt`` that the rule does not
        use get an exact zero.
        """
        self._check(bindings)
        names = self.names if wrt is None else tuple(wrt)
        width = len(names)
        env = Overlay(bindings)
        for i, name in enumerate(names):
            if name in bindings:
                env[name] = DNum.seed(bindings[name], i, width)
        out = self.fn(env)
        if isinstance(out, DNum):
            return out.v, list(out.d)
        return out, [0.0] * width

    def gradient(self, bindings: Mapping[str, Number],
                 wrt: Sequence[str] | None = None) -> list:
        return self.value_and_gradient(bindings, wrt)[1]

    def partial(self, bindings: Mapping[str, Number], name: str) -> Number:
        return self.value_and_gradient(bindings, (name,))[1][0]


def constant_field(names: Sequence[str], value: float = 0.0, label: str = "0") -> ScalarField:
    return ScalarField(names, lambda env: value, label=label)


def sum_fields(names: Sequence[str], fields: Sequence[ScalarField], label: str) -> ScalarField:
    parts = tuple(fields)

    def fn(env):
        total = 0.0
        for f in parts:
            total = total + f.fn(env)
        return total

    return ScalarField(names, fn, label=label)


# -- operations on fields over phase-space coordinates ------------------------


def gradient(f: ScalarField, at: Mapping[str, float]) -> list:
    """Exact gradient of ``f`` at ``at``, ordered by ``f.names``."""
    return f.gradient(at)


def poisson_bracket(F: ScalarField, G: ScalarField, bindings: Mapping[str, Number],
                    pairs: Sequence[tuple[str, str]]) -> float:
    """Canonical bracket {F, G} = sum dF/dq dG/dp - dF/dp dG/dq.

    ``pairs`` lists conjugate (coordinate, momentum) names; with this sign
    convention dC/dt along the flow of K equals {C, K}.
    """
    coords = [c for c, _ in pairs]
    momenta = [m for _, m in pairs]
    seeds = coords + momenta
    n = len(pairs)
    gf = F.gradient(bindings, seeds)
    gg = G.gradient(bindings, seeds)
    total = 0.0
    for i in range(n):
        total += gf[i] * gg[n + i] - gf[n + i] * gg[i]
    return total


def euler_residual(K: ScalarField, bindings: Mapping[str, Number],
                   momentum_names: Sequence[str]) -> float:
    """K - sum_p p dK/dp; zero exactly when K is degree-1 homogeneous in p."""
    val, grad = K.value_and_gradient(bindings, momentum_names)
    acc = val
    for name, g in zip(momentum_names, grad):
        acc = acc - bindings[name] * g
    return acc


def homogeneity_scale_check(K: ScalarField, bindings: Mapping[str, Number],
                            momentum_names: Sequence[str],
                            scales: Sequence[float] = (0.5, 2.0, -3.0)) -> float:
    """Max relative defect of K(q, lam*p) = lam*K(q, p) over the given scales."""
    for lam in scales:
        if lam == 0.0 or not math.isfinite(lam):
            raise ValueError("scales must be finite and nonzero")
    k0 = K.value(bindings)
    worst = 0.0
    momenta = set(momentum_names)
    for lam in scales:
        scaled = {k: (lam * v if k in momenta else v) for k, v in bindings.items()}
        resid = abs(K.value(scaled) - lam * k0) / (1.0 + abs(lam * k0))
        worst = max(worst, resid)
    return worst
