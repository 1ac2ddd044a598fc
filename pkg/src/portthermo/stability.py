"""Conserved quantities, canonical point transformations, and Lyapunov checks.

A conserved quantity C of the internal dynamics (zero Poisson bracket with
the internal Hamiltonian) generates a canonical point transformation that
shifts the dependent extensive variable by C and the conjugate momenta by
the corresponding gradient terms, leaving the canonical one-form invariant.
Pushing a system through that transformation shapes its generating function
to Ebar + C, which is where Lyapunov candidates with strict minima at a
chosen set-point come from.  The entropy-side dual swaps the roles of
energy and entropy, and the availability function provides the candidate in
the entropy form.

Certificates here are numerical: positivity is sampled on a shell around
the equilibrium and decay is evaluated along a simulated trajectory.  They
are evidence on the sampled region, not proofs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .calculus import DNum, Overlay, ScalarField, poisson_bracket, scalar_value
from .core import ENERGY, PhaseChart, PhasePoint, StateManifold, lift, sample_base
from .dynamics import Trajectory, reduced_vector_field
from .errors import ConservationError, DomainError
from .rng import Xoshiro256
from .system import PortThermoSystem, require_valid

# -- conserved quantities ------------------------------------------------------


@dataclass(frozen=True)
class ConservedQuantity:
    """A function of base coordinates whose bracket with K vanishes."""

    name: str
    field: ScalarField  # over (S, q)-side or (E, q)-side base names
    side: str = ENERGY


@dataclass(frozen=True)
class ConservationCheck:
    system: str
    quantity: str
    bracket_worst: float
    strong_first_law_worst: float
    strong_first_law: bool
    n_samples: int


def check_conserved(C: ConservedQuantity, sys: PortThermoSystem,
                    samples: Sequence | None = None, n_samples: int = 50,
                    rng: Xoshiro256 | None = None, tol: float = 1e-10) -> ConservationCheck:
    """Verify {K_internal, C} = 0 at sampled lifted points.

    Also probes whether the energy-conservation partial of the internal
    Hamiltonian vanishes at off-manifold momenta (the stronger hypothesis
    the shaping construction relies on) and records which version holds.
    """
    rng = rng or Xoshiro256(0)
    if samples is None:
        samples = sample_base(sys.manifold, rng, n_samples)
    chart = sys.chart
    unknown = set(C.field.names) - set(chart.extensive_names)
    if unknown:
        raise ValueError(f"conserved quantity uses unknown coordinates {sorted(unknown)}")
    worst = 0.0
    strong_worst = 0.0
    e_momentum = chart.momentum(chart.energy)
    for bb in samples:
        bb = sys.manifold.base_bindings(bb)
        env = chart.bindings(lift(sys.manifold, bb, 1.0))
        worst = max(worst, abs(poisson_bracket(sys.internal, C.field, env, chart.pairs)))
        # randomized momenta probe the everywhere-version of dK/dp_E = 0
        off = dict(env)
        for m in chart.momentum_names:
            off[m] = rng.uniform(-2.0, 2.0)
        strong_worst = max(strong_worst, abs(sys.internal.partial(off, e_momentum)))
    if worst > tol:
        raise ConservationError(
            f"{C.name!r} is not conserved for {sys.name!r}: worst bracket {worst:.3g}")
    return ConservationCheck(sys.name, C.name, worst, strong_worst,
                             strong_worst <= 1e-9, len(samples))


# -- canonical point transformations -------------------------------------------


@dataclass(frozen=True)
class PointTransformation:
    """Canonical point transformation generated by a conserved quantity.

    Energy side (direction +1):
        E -> E + C(S, q),  p_S -> p_S - p_E dC/dS,  p -> p - p_E dC/dq.
    Entropy side swaps (E, p_E) with (S, p_S).  The inverse is the
    transformation generated by -C, so forward-then-inverse is the identity.
    """

    generator: ConservedQuantity
    chart: PhaseChart
    direction: int = 1
    check: ConservationCheck | None = None
    system: str = ""

    def __post_init__(self):
        if self.direction not in (1, -1):
            raise ValueError("direction must be +1 or -1")

    def inverse(self) -> "PointTransformation":
        return PointTransformation(self.generator, self.chart, -self.direction,
                                   self.check, self.system)

    def _shift_names(self) -> tuple[str, str]:
        """(shifted extensive, momentum doing the shifting)."""
        ch = self.chart
        if self.generator.side == ENERGY:
            return ch.energy, ch.momentum(ch.energy)
        return ch.entropy, ch.momentum(ch.entropy)

    def apply_env(self, env: Mapping) -> Mapping:
        """Transform phase bindings; generic over floats and DNums."""
        ch = self.chart
        shifted, mom = self._shift_names()
        cnames = self.generator.field.names
        cval, grad = self.generator.field.value_and_gradient(
            {n: env[n] for n in cnames})
        d = self.direction
        out = Overlay(env)
        out[shifted] = env[shifted] + d * cval
        pshift = env[mom]
        for cname, g in zip(cnames, grad):
            pm = ch.momentum(cname)
            out[pm] = env[pm] - d * pshift * g
        return out

    def apply(self, pt: PhasePoint) -> PhasePoint:
        return self.chart.point(self.apply_env(self.chart.bindings(pt)))


def point_transformation(C: ConservedQuantity, sys: PortThermoSystem,
                         samples: Sequence | None = None,
                         rng: Xoshiro256 | None = None,
                         tol: float = 1e-10) -> PointTransformation:
    """Build a transformation from C after verifying it is conserved for sys."""
    check = check_conserved(C, sys, samples=samples, rng=rng, tol=tol)
    return PointTransformation(C, sys.chart, 1, check, sys.name)


def apply_transform(T: PointTransformation, pt: PhasePoint) -> PhasePoint:
    return T.apply(pt)


def verify_canonical(T: PointTransformation, pt: PhasePoint,
                     tangents: Sequence[Sequence[float]] | None = None) -> float:
    """Max defect of the canonical one-form under pushforward by T.

    For each tangent v the directional image DT.v is computed exactly with
    nested derivative numbers, and alpha evaluated at the image point on
    DT.v is compared with alpha at pt on v.  Valid transformations give
    residuals at rounding level.
    """
    ch = T.chart
    names = ch.phase_names
    env0 = ch.bindings(pt)
    if tangents is None:
        dim = len(names)
        tangents = [[1.0 if j == i else 0.0 for j in range(dim)] for i in range(dim)]
    worst = 0.0
    for v in tangents:
        vmap = dict(zip(names, v))
        env = {n: DNum(env0[n], (vmap[n],)) for n in names}
        image = T.apply_env(env)
        alpha_img = 0.0
        alpha_src = 0.0
        for x in ch.extensive_names:
            mom = ch.momentum(x)
            w = image[x]
            dw = w.d[0] if isinstance(w, DNum) else 0.0
            alpha_img += scalar_value(image[mom]) * scalar_value(dw)
            alpha_src += env0[mom] * vmap[x]
        worst = max(worst, abs(alpha_img - alpha_src))
    return worst


def transform_system(sys: PortThermoSystem, T: PointTransformation,
                     validate_result: bool = True) -> PortThermoSystem:
    """Rewrite a system in the coordinates shaped by a conserved quantity.

    The manifold's generator becomes Ebar + C (energy side; the dual adds C
    to Sbar), the Hamiltonians are composed with the inverse transformation,
    and the ports keep their labels so the transformed outputs are simply
    the same partials in the new coordinates.
    """
    if T.system != sys.name or T.check is None:
        raise ConservationError(
            "transform_system requires a transformation verified for this system "
            "(build it with point_transformation)")
    man = sys.manifold
    C = T.generator
    if (C.side == ENERGY) != (man.representation == ENERGY):
        raise ConservationError("transformation side does not match the representation")

    cfield = C.field

    def shaped_gen(env):
        return man.generator.fn(env) + cfield.fn(env)

    generator = ScalarField(man.generator.names, shaped_gen,
                            label=f"{man.generator.label}+{C.name}")
    manifold = StateManifold(
        chart=man.chart, representation=man.representation, generator=generator,
        domain=man.domain, domain_desc=man.domain_desc,
        energy_roles=man.energy_roles, entropy_roles=man.entropy_roles,
        sample_box=man.sample_box)

    inv = T.inverse()

    def pullback(fld: ScalarField) -> ScalarField:
        return ScalarField(sys.chart.phase_names,
                           lambda env, _f=fld.fn, _inv=inv: _f(_inv.apply_env(env)),
                           label=f"{fld.label}~")

    controls = tuple(
        type(c)(field=pullback(c.field), port=c.port,
                linear_in_u=c.linear_in_u, input_name=c.input_name)
        for c in sys.controls)
    out = type(sys)(name=f"{sys.name}~shaped", manifold=manifold,
                    internal=pullback(sys.internal), controls=controls)
    if validate_result and man.sample_box is not None:
        require_valid(out, rng=Xoshiro256(2))
    return out


# -- availability ----------------------------------------------------------------


def availability(Sbar: ScalarField, setpoint: Mapping[str, float],
                 at: Mapping[str, float]) -> float:
    """Sbar(set) - Sbar(at) + grad Sbar(set) . (at - set).

    Zero at the set-point and nonnegative wherever Sbar is concave on the
    connecting segment; the natural entropy-side Lyapunov candidate.
    """
    return availability_field(Sbar, setpoint).value(at)


def availability_field(Sbar: ScalarField, setpoint: Mapping[str, float]) -> ScalarField:
    """The availability as a reusable field over Sbar's coordinates."""
    names = Sbar.names
    set_vals = {n: float(setpoint[n]) for n in names}
    s_star, grad_star = Sbar.value_and_gradient(set_vals)

    def fn(env):
        acc = s_star - Sbar.fn(env)
        for n, g in zip(names, grad_star):
            acc = acc + g * (env[n] - set_vals[n])
        return acc

    return ScalarField(names, fn, label=f"availability[{Sbar.label}]")


# -- Lyapunov certificates -------------------------------------------------------


@dataclass(frozen=True)
class LyapunovReport:
    """Numerical certificate for one candidate around one equilibrium."""

    candidate: str
    system: str
    equilibrium: dict[str, float]
    shell: tuple[float, float]
    n_shell: int
    margin: float
    max_dvdt: float
    hessian_min_eig: float
    decay_tol: float

    @property
    def verdict(self) -> bool:
        return self.margin > 0.0 and self.max_dvdt <= self.decay_tol

    def lines(self) -> list[str]:
        r0, r1 = self.shell
        return [
            f"lyapunov candidate {self.candidate!r} for {self.system!r}",
            f"  equilibrium        {self.equilibrium}",
            f"  shell radii        [{r0:g}, {r1:g}] with {self.n_shell} samples",
            f"  positivity margin  {self.margin:.6e}",
            f"  max dV/dt          {self.max_dvdt:.6e}",
            f"  hessian min eig    {self.hessian_min_eig:.6e}",
            f"  verdict            {'pass' if self.verdict else 'FAIL'}",
        ]


def lyapunov_certificate(V: ScalarField, equilibrium: Mapping[str, float],
                         trajectory: Trajectory, sys: PortThermoSystem,
                         shell: tuple[float, float] = (1e-3, 0.5),
                         n_shell: int = 500, rng: Xoshiro256 | None = None,
                         decay_tol: float = 1e-9) -> LyapunovReport:
    """Sample positivity on a shell and decay along a trajectory.

    The shell lives in the coordinates V actually depends on (unregulated
    coordinates, such as a damper entropy without a set-point, are pinned
    at their equilibrium entry or simply not part of V).  dV/dt is the
    analytic chain rule against the reduced vector field, evaluated at the
    trajectory's recorded inputs.
    """
    rng = rng or Xoshiro256(0)
    r0, r1 = shell
    if not (0 <= r0 < r1):
        raise ValueError("empty shell")
    if trajectory.system != sys.name:
        raise ValueError("trajectory was produced for a different system")
    if len(trajectory) == 0:
        raise ValueError("empty trajectory")
    names = V.names
    missing = [n for n in names if n not in equilibrium]
    if missing:
        raise ValueError(f"equilibrium does not bind {missing}")
    eq = {n: float(equilibrium[n]) for n in names}
    v_eq = scalar_value(V.value(eq))

    margin = np.inf
    drawn = 0
    attempts = 0
    while drawn < n_shell:
        attempts += 1
        if attempts > 50 * n_shell:
            raise DomainError("could not draw shell samples inside the domain")
        direction = rng.direction(len(names))
        r = rng.uniform(r0, r1)
        pointb = {n: eq[n] + r * d for n, d in zip(names, direction)}
        try:
            val = scalar_value(V.value(pointb))
        except DomainError:
            continue
        drawn += 1
        margin = min(margin, val - v_eq)

    # decay along the trajectory, using the recorded inputs per sample
    base_idx = {n: i for i, n in enumerate(sys.manifold.base_names)}
    vidx = [base_idx[n] for n in names if n in base_idx]
    if len(vidx) != len(names):
        raise ValueError("candidate uses coordinates outside the system's base")
    max_dvdt = -np.inf
    ports = sys.ports
    for i in range(len(trajectory)):
        state = trajectory.state_bindings(i)
        u = {p: trajectory.channels[f"u_{p}"][i] for p in ports}
        f = reduced_vector_field(sys, state, u)
        grad = V.gradient({n: state[n] for n in names})
        dv = float(sum(g * f[j] for g, j in zip(grad, vidx)))
        max_dvdt = max(max_dvdt, dv)

    # auxiliary curvature diagnostic: finite differences of the exact gradient
    hmin = _hessian_min_eig(V, eq)
    return LyapunovReport(candidate=V.label, system=sys.name, equilibrium=eq,
                          shell=(r0, r1), n_shell=n_shell, margin=float(margin),
                          max_dvdt=float(max_dvdt), hessian_min_eig=hmin,
                          decay_tol=decay_tol)


def _hessian_min_eig(V: ScalarField, eq: Mapping[str, float], h: float = 1e-5) -> float:
    names = V.names
    dim = len(names)
    H = np.zeros((dim, dim))
    for i, n in enumerate(names):
        hi = dict(eq)
        lo = dict(eq)
        hi[n] = eq[n] + h
        lo[n] = eq[n] - h
        gp = np.array(V.gradient(hi), dtype=float)
        gm = np.array(V.gradient(lo), dtype=float)
        H[i, :] = (gp - gm) / (2 * h)
    H = 0.5 * (H + H.T)
    return float(np.min(np.linalg.eigvalsh(H)))
