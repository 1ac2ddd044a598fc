"""Coordinates of the symplectized phase space and lifted state manifolds.

A system's extensive variables are (E, S, q) with co-extensive (momentum)
partners (p_E, p_S, p).  State properties are a generating function in
either the energy form E = Ebar(S, q) or the entropy form S = Sbar(E, q);
lifting a base point attaches the co-extensive ray on which the canonical
one-form  p_E dE + p_S dS + p dq  vanishes.  The co-extensive vector is a
homogeneous coordinate: rescaling it by any nonzero factor stays on the
lifted manifold, and all intensive quantities are ratios that are invariant
under that rescaling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .calculus import ScalarField, scalar_value
from .errors import DomainError, GaugeError
from .rng import Xoshiro256

ENERGY = "energy"
ENTROPY = "entropy"


@dataclass(frozen=True)
class ExtensivePoint:
    """Extensive coordinates: energy, entropy, and the remaining variables q."""

    E: float
    S: float
    q: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "q", tuple(float(v) for v in self.q))


@dataclass(frozen=True)
class CoextensivePoint:
    """Co-extensive (cotangent) coordinates; never the zero vector."""

    p_E: float
    p_S: float
    p: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "p", tuple(float(v) for v in self.p))
        if self.p_E == 0.0 and self.p_S == 0.0 and all(v == 0.0 for v in self.p):
            raise ValueError("co-extensive vector must be nonzero")

    def vector(self) -> np.ndarray:
        return np.array([self.p_E, self.p_S, *self.p])


@dataclass(frozen=True)
class PhasePoint:
    """A point of the cotangent bundle minus its zero section."""

    x: ExtensivePoint
    px: CoextensivePoint

    def __post_init__(self):
        if len(self.x.q) != len(self.px.p):
            raise ValueError("extensive and co-extensive dimensions disagree")

    @property
    def n(self) -> int:
        return len(self.x.q)


@dataclass(frozen=True)
class PhaseChart:
    """Naming convention for one system's phase-space coordinates.

    ``energy`` and ``entropy`` are the labels of the two distinguished
    extensive variables; ``q_names`` label the rest.  Momentum names are
    derived as ``p_<name>``.
    """

    energy: str = "E"
    entropy: str = "S"
    q_names: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "q_names", tuple(self.q_names))
        names = self.extensive_names
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate coordinate names in {names}")
        clash = set(names) & {self.momentum(n) for n in names}
        if clash:
            raise ValueError(f"coordinate names collide with momentum names: {sorted(clash)}")

    @staticmethod
    def momentum(name: str) -> str:
        return f"p_{name}"

    @property
    def extensive_names(self) -> tuple[str, ...]:
        return (self.energy, self.entropy, *self.q_names)

    @property
    def momentum_names(self) -> tuple[str, ...]:
        return tuple(self.momentum(n) for n in self.extensive_names)

    @property
    def phase_names(self) -> tuple[str, ...]:
        return self.extensive_names + self.momentum_names

    @property
    def pairs(self) -> tuple[tuple[str, str], ...]:
        return tuple((n, self.momentum(n)) for n in self.extensive_names)

    def bindings(self, pt: PhasePoint) -> dict[str, float]:
        b = {self.energy: pt.x.E, self.entropy: pt.x.S}
        b.update(zip(self.q_names, pt.x.q))
        b[self.momentum(self.energy)] = pt.px.p_E
        b[self.momentum(self.entropy)] = pt.px.p_S
        for name, val in zip(self.q_names, pt.px.p):
            b[self.momentum(name)] = val
        return b

    def point(self, bindings: Mapping[str, float]) -> PhasePoint:
        x = ExtensivePoint(
            E=bindings[self.energy],
            S=bindings[self.entropy],
            q=tuple(bindings[n] for n in self.q_names),
        )
        px = CoextensivePoint(
            p_E=bindings[self.momentum(self.energy)],
            p_S=bindings[self.momentum(self.entropy)],
            p=tuple(bindings[self.momentum(n)] for n in self.q_names),
        )
        return PhasePoint(x, px)


@dataclass(frozen=True)
class StateManifold:
    """State properties as a generating function, lifted homogeneously.

    ``representation`` selects which distinguished variable is dependent:
    the energy form uses a generator over (S, q), the entropy form over
    (E, q).  ``domain`` is an explicit admissibility predicate on base
    bindings (violations are hard errors, never silent NaNs).  The role
    tuples list every coordinate that counts toward the energy/entropy
    totals used by the conservation and production checks; for a plain
    single-entropy system they are just the distinguished names.
    """

    chart: PhaseChart
    representation: str
    generator: ScalarField
    domain: Callable[[Mapping[str, float]], bool] | None = None
    domain_desc: str = "all real base points"
    energy_roles: tuple[str, ...] = ()
    entropy_roles: tuple[str, ...] = ()
    sample_box: Mapping[str, tuple[float, float]] | None = None

    def __post_init__(self):
        if self.representation not in (ENERGY, ENTROPY):
            raise ValueError(f"unknown representation {self.representation!r}")
        if tuple(self.generator.names) != self.base_names:
            raise ValueError(
                f"generator names {self.generator.names} must equal base names {self.base_names}")
        if not self.energy_roles:
            object.__setattr__(self, "energy_roles", (self.chart.energy,))
        if not self.entropy_roles:
            object.__setattr__(self, "entropy_roles", (self.chart.entropy,))
        known = set(self.chart.extensive_names)
        for role in (*self.energy_roles, *self.entropy_roles):
            if role not in known:
                raise ValueError(f"role coordinate {role!r} is not a coordinate of the chart")

    @property
    def n(self) -> int:
        return len(self.chart.q_names)

    @property
    def dependent_name(self) -> str:
        return self.chart.energy if self.representation == ENERGY else self.chart.entropy

    @property
    def base_names(self) -> tuple[str, ...]:
        if self.representation == ENERGY:
            return (self.chart.entropy, *self.chart.q_names)
        return (self.chart.energy, *self.chart.q_names)

    def base_bindings(self, base) -> dict[str, float]:
        """Normalize a mapping or ordered sequence into base-coordinate bindings."""
        if isinstance(base, Mapping):
            missing = [n for n in self.base_names if n not in base]
            if missing:
                raise ValueError(f"base point is missing coordinates {missing}")
            return {n: float(base[n]) for n in self.base_names}
        vals = tuple(base)
        if len(vals) != len(self.base_names):
            raise ValueError(
                f"base point has {len(vals)} coordinates, expected {len(self.base_names)}")
        return {n: float(v) for n, v in zip(self.base_names, vals)}

    def admissible(self, base: Mapping[str, float]) -> bool:
        return self.domain is None or bool(self.domain(base))

    def require_admissible(self, base: Mapping[str, float]) -> None:
        if not self.admissible(base):
            raise DomainError(
                f"base point {dict(base)} violates the admissible domain ({self.domain_desc})")

    def base_of(self, pt: PhasePoint) -> dict[str, float]:
        b = self.chart.bindings(pt)
        return {n: b[n] for n in self.base_names}


def lift(manifold: StateManifold, base, scale: float = 1.0) -> PhasePoint:
    """Lift a base point onto the manifold's co-extensive ray.

    Energy form:  (E=Ebar, p_E=-scale, p_S=scale*dEbar/dS, p=scale*dEbar/dq).
    Entropy form: (S=Sbar, p_S=-scale, p_E=scale*dSbar/dE, p=scale*dSbar/dq).
    The canonical one-form vanishes on every tangent of the lifted manifold.
    """
    if scale == 0.0:
        raise ValueError("lift scale must be nonzero")
    bb = manifold.base_bindings(base)
    manifold.require_admissible(bb)
    value, grad = manifold.generator.value_and_gradient(bb)
    g = dict(zip(manifold.base_names, grad))
    ch = manifold.chart
    if manifold.representation == ENERGY:
        x = ExtensivePoint(E=value, S=bb[ch.entropy], q=tuple(bb[n] for n in ch.q_names))
        px = CoextensivePoint(
            p_E=-scale,
            p_S=scale * g[ch.entropy],
            p=tuple(scale * g[n] for n in ch.q_names),
        )
    else:
        x = ExtensivePoint(E=bb[ch.energy], S=value, q=tuple(bb[n] for n in ch.q_names))
        px = CoextensivePoint(
            p_E=scale * g[ch.energy],
            p_S=-scale,
            p=tuple(scale * g[n] for n in ch.q_names),
        )
    return PhasePoint(x, px)


def rescale(pt: PhasePoint, lam: float) -> PhasePoint:
    """Multiply the co-extensive part by a nonzero factor; extensives unchanged."""
    if lam == 0.0:
        raise ValueError("rescale factor must be nonzero")
    px = pt.px
    return PhasePoint(pt.x, CoextensivePoint(lam * px.p_E, lam * px.p_S,
                                             tuple(lam * v for v in px.p)))


def membership_residual(manifold: StateManifold, pt: PhasePoint) -> float:
    """Projective distance of ``pt`` from the lifted manifold.

    Max of the generator-constraint residual (e.g. |E - Ebar(S, q)|) and the
    angular deviation of the co-extensive vector from the lifted ray at the
    same base point.  Exactly zero on the manifold and insensitive to
    rescaling the co-extensive part by any nonzero factor.
    """
    if pt.n != manifold.n:
        raise ValueError("phase point dimension does not match manifold")
    bb = manifold.base_of(pt)
    manifold.require_admissible(bb)
    value = scalar_value(manifold.generator.value(bb))
    dep = pt.x.E if manifold.representation == ENERGY else pt.x.S
    constraint = abs(dep - value)

    ray = lift(manifold, bb, 1.0).px.vector()
    v = pt.px.vector()
    vn = v / np.linalg.norm(v)
    rn = ray / np.linalg.norm(ray)
    perp = vn - np.dot(vn, rn) * rn
    return max(constraint, float(np.linalg.norm(perp)))


def intensives(manifold: StateManifold, pt: PhasePoint, side: str | None = None,
               tol: float = 1e-9) -> dict[str, float]:
    """Intensive variables as degree-zero co-extensive ratios.

    Energy side: {"T": p_S/(-p_E)} plus one entry per q coordinate with
    value p_i/(-p_E).  Entropy side: {"1/T": p_E/(-p_S)} plus p_i/(-p_S).
    Requires ``pt`` to lie on the manifold within ``tol``.
    """
    resid = membership_residual(manifold, pt)
    if resid > tol:
        raise DomainError(f"point is off the manifold (residual {resid:.3g} > {tol:.3g})")
    side = side or manifold.representation
    ch = manifold.chart
    if side == ENERGY:
        if pt.px.p_E == 0.0:
            raise GaugeError("energy-side ratios undefined where p_E = 0")
        den = -pt.px.p_E
        out = {"T": pt.px.p_S / den}
    elif side == ENTROPY:
        if pt.px.p_S == 0.0:
            raise GaugeError("entropy-side ratios undefined where p_S = 0")
        den = -pt.px.p_S
        out = {"1/T": pt.px.p_E / den}
    else:
        raise ValueError(f"unknown side {side!r}")
    for name, val in zip(ch.q_names, pt.px.p):
        out[name] = val / den
    return out


def liouville_defect(manifold: StateManifold, base, scale: float = 1.0) -> float:
    """Max |alpha(v)| over a spanning set of tangents of the lifted manifold.

    Tangents are the derivatives of ``lift`` along each base coordinate and
    along the scale direction; only their extensive components enter the
    canonical one-form, so first derivatives of the generator suffice.
    """
    pt = lift(manifold, base, scale)
    bb = manifold.base_bindings(base)
    _, grad = manifold.generator.value_and_gradient(bb)
    ch = manifold.chart
    pb = ch.bindings(pt)
    mom = {n: pb[ch.momentum(n)] for n in ch.extensive_names}
    dep = manifold.dependent_name
    worst = 0.0
    for bname, g in zip(manifold.base_names, grad):
        # tangent along bname: d(dependent) = g, d(bname) = 1, others 0
        alpha = mom[dep] * g + mom[bname]
        worst = max(worst, abs(alpha))
    # scale direction: extensive components all vanish
    return worst


def sample_base(manifold: StateManifold, rng: Xoshiro256, count: int = 1,
                max_tries: int = 1000) -> list[dict[str, float]]:
    """Draw admissible base points uniformly from the manifold's sample box."""
    if manifold.sample_box is None:
        raise ValueError(f"{manifold.generator.label}: no sample box declared")
    box = manifold.sample_box
    missing = [n for n in manifold.base_names if n not in box]
    if missing:
        raise ValueError(f"sample box is missing coordinates {missing}")
    out = []
    for _ in range(count):
        for _ in range(max_tries):
            cand = {n: rng.uniform(*box[n]) for n in manifold.base_names}
            if manifold.admissible(cand):
                out.append(cand)
                break
        else:
            raise DomainError("could not draw an admissible sample from the box")
    return out
