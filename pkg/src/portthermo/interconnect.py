"""Composition of two port-thermodynamic systems through their ports.

Power composition identifies the two energy momenta (one shared p_E), sums
the energy generators, and substitutes the port inputs by a
power-preserving feedback law; entropy composition does the dual with the
entropy momenta and an entropy-nonnegative law.  Input substitution uses
frozen-input semantics: the feedback inputs are resolved numerically at the
evaluation point and then treated as constants inside the Hamiltonian.
Because every control Hamiltonian vanishes on the lifted manifold and the
substituted inputs are degree-0 in the momenta, all on-manifold quantities
(values, partials, Euler sums) are exact under this convention.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

from .calculus import ScalarField, scalar_value
from .core import ENERGY, ENTROPY, PhaseChart, StateManifold, lift, sample_base
from .errors import CompositionError, DomainError
from .rng import Xoshiro256
from .system import ControlHamiltonian, PortThermoSystem, require_valid

log = logging.getLogger("portthermo")


@dataclass(frozen=True)
class FeedbackLaw:
    """Interconnection rule on two scalar ports.

    Kinds: ``negative_feedback`` (u1 = -y2 + v, u2 = y1; keeps v as the
    residual external port), ``gyrative`` (u = J y with J skew-symmetric),
    and ``custom`` (an arbitrary map (y1, y2) -> (u1, u2), checked
    numerically against the declared conservation type).
    """

    kind: str
    conserves: str = "power"
    J: tuple[tuple[float, float], tuple[float, float]] | None = None
    rule: Callable[[float, float], tuple[float, float]] | None = None
    v_port: str | None = None

    def __post_init__(self):
        if self.kind not in ("negative_feedback", "gyrative", "custom"):
            raise ValueError(f"unknown feedback kind {self.kind!r}")
        if self.conserves not in ("power", "entropy"):
            raise ValueError(f"unknown conservation type {self.conserves!r}")
        if self.kind == "gyrative":
            j = self.J
            if j is None or j[0][0] != 0.0 or j[1][1] != 0.0 or j[0][1] != -j[1][0]:
                raise ValueError("gyrative law needs a skew-symmetric 2x2 matrix")
        if self.kind == "custom" and self.rule is None:
            raise ValueError("custom law needs a rule")

    @staticmethod
    def negative_feedback(conserves: str = "power", v_port: str = "v") -> "FeedbackLaw":
        return FeedbackLaw("negative_feedback", conserves=conserves, v_port=v_port)

    @staticmethod
    def gyrative(coupling: float, conserves: str = "power") -> "FeedbackLaw":
        return FeedbackLaw("gyrative", conserves=conserves,
                           J=((0.0, coupling), (-coupling, 0.0)))

    @staticmethod
    def custom(rule: Callable[[float, float], tuple[float, float]],
               conserves: str = "power") -> "FeedbackLaw":
        return FeedbackLaw("custom", conserves=conserves, rule=rule)

    @staticmethod
    def decoupled(conserves: str = "power") -> "FeedbackLaw":
        return FeedbackLaw.custom(lambda y1, y2: (0.0, 0.0), conserves=conserves)

    def resolve(self, y1: float, y2_of_u: Callable[[float], float],
                v: float = 0.0) -> tuple[float, float, float, float]:
        """Return (u1, u2, y1, y2) for the substituted inputs."""
        if self.kind == "negative_feedback":
            u2 = y1
            y2 = y2_of_u(u2)
            return -y2 + v, u2, y1, y2
        y2 = y2_of_u(0.0)
        if self.kind == "gyrative":
            u1 = self.J[0][0] * y1 + self.J[0][1] * y2
            u2 = self.J[1][0] * y1 + self.J[1][1] * y2
        else:
            u1, u2 = self.rule(y1, y2)
        return u1, u2, y1, y2


@dataclass(frozen=True)
class ComposedSystem(PortThermoSystem):
    """A port-thermodynamic system remembering how it was composed."""

    parts: tuple[PortThermoSystem, PortThermoSystem] | None = None
    law: FeedbackLaw | None = None
    port_pair: tuple[str, str] = ("", "")
    renames: tuple[Mapping[str, str], Mapping[str, str]] = ({}, {})
    flavor: str = "power"

    def constituent_names(self, side: int) -> Mapping[str, str]:
        """Map of one constituent's base names to composed coordinate names."""
        return self.renames[side]


def _unique_names(taken: set[str], wanted: Sequence[str], suffix: str) -> dict[str, str]:
    out = {}
    for name in wanted:
        new = name
        if new in taken:
            new = f"{name}{suffix}"
        while new in taken:
            new = new + "_"
        taken.add(new)
        out[name] = new
    return out


def _fresh(taken: set[str], *candidates: str) -> str:
    for cand in candidates:
        if cand not in taken:
            taken.add(cand)
            return cand
    cand = candidates[-1]
    while cand in taken:
        cand = cand + "_"
    taken.add(cand)
    return cand


class _LazyDependent(dict):
    """Env dict that computes one constituent's dependent extensive on demand.

    Interconnection requires the Hamiltonians not to read the shared
    dependent coordinate, so in the common case the generator is never
    evaluated here; a field that does read it still gets the correct
    on-manifold value.
    """

    __slots__ = ("dep", "gen")

    def __missing__(self, key):
        if key == self.dep:
            val = self.gen(self)
            self[key] = val
            return val
        raise KeyError(key)

    def __contains__(self, key):
        return dict.__contains__(self, key) or key == self.dep


class _SubEnv:
    """Rebuild one constituent's phase bindings from composed bindings."""

    def __init__(self, sys: PortThermoSystem, rename: Mapping[str, str],
                 shared_momentum: str, composed_momentum: str):
        man = sys.manifold
        self.base_names = man.base_names
        self.rename = dict(rename)
        self.dependent = man.dependent_name
        self.generator = man.generator
        self.pairs = [(b, PhaseChart.momentum(b), self.rename[b],
                       PhaseChart.momentum(self.rename[b])) for b in self.base_names]
        self.dep_momentum = PhaseChart.momentum(self.dependent)
        self.composed_momentum = composed_momentum

    def base_env(self, env: Mapping) -> dict:
        return {base: env[rbase] for base, _, rbase, _ in self.pairs}

    def __call__(self, env: Mapping) -> dict:
        out = _LazyDependent()
        out.dep = self.dependent
        out.gen = self.generator.fn
        for base, mom, rbase, rmom in self.pairs:
            out[base] = env[rbase]
            out[mom] = env[rmom]
        out[self.dep_momentum] = env[self.composed_momentum]
        return out


def _port_partial(sys: PortThermoSystem, ctrl: ControlHamiltonian, fenv: dict,
                  wrt: str, u: float) -> float:
    return ctrl.field.partial(ctrl.env_with_input(fenv, u), wrt)


def _independence_check(sys: PortThermoSystem, coord: str, rng: Xoshiro256,
                        n: int = 10, bound: float = 1e-9) -> None:
    """The Hamiltonians must not read the extensive coordinate being shared."""
    try:
        samples = sample_base(sys.manifold, rng, n)
    except ValueError:
        log.debug("skipping independence sampling for %s (no sample box)", sys.name)
        return
    fields = [("internal", sys.internal)] + [(c.port, c.field) for c in sys.controls]
    for bb in samples:
        env = sys.chart.bindings(lift(sys.manifold, bb, 1.0))
        for c in sys.controls:
            if not c.linear_in_u:
                env[c.input_name] = 1.0
        for label, fld in fields:
            d = abs(fld.partial(env, coord))
            if d > bound:
                raise CompositionError(
                    f"{sys.name}:{label} depends on shared coordinate {coord!r} "
                    f"(|d/d{coord}| = {d:.3g} at {bb})")


def _compose(sys1: PortThermoSystem, sys2: PortThermoSystem, law: FeedbackLaw,
             port1: str | None, port2: str | None, flavor: str,
             name: str | None, rng: Xoshiro256 | None,
             check_law_samples: int = 20, validate_result: bool = True) -> ComposedSystem:
    rng = rng or Xoshiro256(0)
    rep = ENERGY if flavor == "power" else ENTROPY
    for s in (sys1, sys2):
        if s.manifold.representation != rep:
            raise CompositionError(
                f"{flavor} composition needs the {rep} form, but {s.name!r} "
                f"is in the {s.manifold.representation} form")

    def pick(sys, port):
        if port is not None:
            return sys.control(port)
        if len(sys.controls) != 1:
            raise CompositionError(f"{sys.name!r}: port must be named explicitly")
        return sys.controls[0]

    c1, c2 = pick(sys1, port1), pick(sys2, port2)
    if not c1.linear_in_u:
        raise CompositionError(
            f"port {c1.port!r} of {sys1.name!r} is input-dependent; it must be "
            "the second port of the interconnection")
    if law.kind != "negative_feedback" and not c2.linear_in_u:
        raise CompositionError(f"law {law.kind!r} requires input-independent ports")

    man1, man2 = sys1.manifold, sys2.manifold
    shared1 = man1.dependent_name
    shared2 = man2.dependent_name
    _independence_check(sys1, shared1, rng)
    _independence_check(sys2, shared2, rng)

    # composed coordinate names: both bases, collision-suffixed, plus a fresh
    # name for the shared dependent total; q order is base order of sys1 then
    # sys2 with the composed distinguished coordinate pulled out front
    taken: set[str] = set()
    ren1 = _unique_names(taken, man1.base_names, "_1")
    ren2 = _unique_names(taken, man2.base_names, "_2")
    dep_name = _fresh(taken, "E" if flavor == "power" else "S",
                      "E_total" if flavor == "power" else "S_total")
    if flavor == "power":
        distinguished = ren1[man1.chart.entropy]
    else:
        distinguished = ren1[man1.chart.energy]
    ordered = [ren1[n] for n in man1.base_names] + [ren2[n] for n in man2.base_names]
    q_names = tuple(n for n in ordered if n != distinguished)
    if flavor == "power":
        chart = PhaseChart(energy=dep_name, entropy=distinguished, q_names=q_names)
        roles1 = [ren1[r] for r in man1.entropy_roles]
        roles2 = [ren2[r] for r in man2.entropy_roles]
        entropy_roles = tuple(dict.fromkeys(roles1 + roles2))
        energy_roles = (dep_name,)
    else:
        chart = PhaseChart(energy=distinguished, entropy=dep_name, q_names=q_names)
        roles1 = [ren1[r] for r in man1.energy_roles]
        roles2 = [ren2[r] for r in man2.energy_roles]
        energy_roles = tuple(dict.fromkeys(roles1 + roles2))
        entropy_roles = (dep_name,)

    sub1 = _SubEnv(sys1, ren1, shared1, chart.momentum(dep_name))
    sub2 = _SubEnv(sys2, ren2, shared2, chart.momentum(dep_name))

    def composed_generator(env):
        return (sub1.generator.fn(sub1.base_env(env))
                + sub2.generator.fn(sub2.base_env(env)))

    gen_names = ((chart.entropy, *chart.q_names) if flavor == "power"
                 else (chart.energy, *chart.q_names))
    generator = ScalarField(gen_names, composed_generator,
                            label=f"{man1.generator.label}+{man2.generator.label}")

    def composed_domain(bb):
        b1 = {n: bb[ren1[n]] for n in man1.base_names}
        b2 = {n: bb[ren2[n]] for n in man2.base_names}
        return man1.admissible(b1) and man2.admissible(b2)

    box = None
    if man1.sample_box is not None and man2.sample_box is not None:
        box = {ren1[n]: tuple(man1.sample_box[n]) for n in man1.base_names}
        box.update({ren2[n]: tuple(man2.sample_box[n]) for n in man2.base_names})

    manifold = StateManifold(
        chart=chart, representation=rep, generator=generator,
        domain=composed_domain,
        domain_desc=f"{man1.domain_desc} and {man2.domain_desc}",
        energy_roles=energy_roles, entropy_roles=entropy_roles,
        sample_box=box)

    # outputs driving the law: power side differentiates by the shared energy
    # momentum, entropy side by the shared entropy momentum
    out1_wrt = PhaseChart.momentum(shared1)
    out2_wrt = PhaseChart.momentum(shared2)

    def scalar_env(env_i, sub: _SubEnv):
        out = _LazyDependent()
        out.dep = sub.dependent
        out.gen = lambda d, _g=sub.generator.fn: scalar_value(_g(d))
        for k, x in env_i.items():
            out[k] = scalar_value(x)
        return out

    def resolve_inputs(env, v: float = 0.0):
        env1, env2 = sub1(env), sub2(env)
        f1 = scalar_env(env1, sub1)
        f2 = scalar_env(env2, sub2)
        y1 = _port_partial(sys1, c1, f1, out1_wrt, 0.0)
        u1, u2, y1, y2 = law.resolve(
            y1, lambda u: _port_partial(sys2, c2, f2, out2_wrt, u), v)
        return env1, env2, u1, u2, y1, y2

    def internal_fn(env):
        env1, env2, u1, u2, _, _ = resolve_inputs(env)
        total = sys1.internal.fn(env1) + sys2.internal.fn(env2)
        total = total + c1.term(env1, u1) + c2.term(env2, u2)
        for c in sys1.controls:
            if c is not c1 and not c.linear_in_u:
                total = total + c.term(env1, 0.0)
        return total

    internal = ScalarField(chart.phase_names, internal_fn,
                           label=f"K[{sys1.name}|{sys2.name}]")

    # law conservation check for custom rules (built-in kinds are exact)
    if law.kind == "custom" and box is not None:
        worst, worst_at = -1.0, None
        for bb in sample_base(manifold, rng, check_law_samples):
            env = chart.bindings(lift(manifold, bb, 1.0))
            _, _, u1, u2, y1, y2 = resolve_inputs(env)
            flow = y1 * u1 + y2 * u2
            bad = abs(flow) if law.conserves == "power" else -flow
            if bad > worst:
                worst, worst_at = bad, (bb, flow)
        limit = 1e-9 if law.conserves == "power" else 1e-12
        if worst > limit:
            raise CompositionError(
                f"custom law violates the {law.conserves} condition: "
                f"residual {worst_at[1]:.6g} at {worst_at[0]}")

    # pass-through ports plus the law's residual external port
    controls: list[ControlHamiltonian] = []
    port_taken: set[str] = set()
    for sys_i, ci, sub, suffix in ((sys1, c1, sub1, "_1"), (sys2, c2, sub2, "_2")):
        for c in sys_i.controls:
            if c is ci:
                continue
            label = c.port if c.port not in port_taken else f"{c.port}{suffix}"
            port_taken.add(label)
            controls.append(ControlHamiltonian(
                field=ScalarField(chart.phase_names,
                                  lambda env, _f=c.field.fn, _s=sub: _f(_s(env)),
                                  label=f"{c.field.label}@{sys_i.name}"),
                port=label, linear_in_u=c.linear_in_u, input_name=c.input_name))
    if law.kind == "negative_feedback":
        v_label = law.v_port or "v"
        while v_label in port_taken:
            v_label = v_label + "_"
        controls.append(ControlHamiltonian(
            field=ScalarField(chart.phase_names,
                              lambda env, _f=c1.field.fn, _s=sub1: _f(_s(env)),
                              label=f"{c1.field.label}@{sys1.name}"),
            port=v_label, linear_in_u=True))

    composed = ComposedSystem(
        name=name or f"{sys1.name}*{sys2.name}",
        manifold=manifold, internal=internal, controls=tuple(controls),
        parts=(sys1, sys2), law=law, port_pair=(c1.port, c2.port),
        renames=(ren1, ren2), flavor=flavor)

    if validate_result and box is not None:
        require_valid(composed, rng=Xoshiro256(1))
    return composed


def compose_power(sys1: PortThermoSystem, sys2: PortThermoSystem, law: FeedbackLaw,
                  port1: str | None = None, port2: str | None = None,
                  name: str | None = None, rng: Xoshiro256 | None = None,
                  validate_result: bool = True) -> ComposedSystem:
    """Interconnect two energy-form systems through a power-preserving law.

    The composed manifold has total energy as its dependent variable with a
    single shared energy momentum; the composed Hamiltonian is the sum with
    the selected port inputs substituted by the law.
    """
    if law.conserves != "power":
        raise CompositionError("power composition needs a power-conserving law")
    return _compose(sys1, sys2, law, port1, port2, "power", name, rng,
                    validate_result=validate_result)


def compose_entropy(sys1: PortThermoSystem, sys2: PortThermoSystem, law: FeedbackLaw,
                    port1: str | None = None, port2: str | None = None,
                    name: str | None = None, rng: Xoshiro256 | None = None,
                    validate_result: bool = True) -> ComposedSystem:
    """Interconnect two entropy-form systems through an entropy-nonnegative law."""
    if law.conserves != "entropy":
        raise CompositionError("entropy composition needs an entropy-type law")
    return _compose(sys1, sys2, law, port1, port2, "entropy", name, rng,
                    validate_result=validate_result)


def make_damper(Ubar: ScalarField, d: float, name: str = "damper") -> PortThermoSystem:
    """A one-port dissipative element with internal energy Ubar(S_d).

    Its port Hamiltonian is (p_U + p_S / Ubar'(S_d)) * d * u, quadratic in
    the input once multiplied by u; the power output is d*u (a damping
    force) and its own entropy rate along the flow is d*u^2 / Ubar' >= 0.
    """
    if d <= 0:
        raise ValueError("damping coefficient must be positive")
    if tuple(Ubar.names) != ("S_d",):
        raise ValueError("damper energy must be a function of the single name 'S_d'")
    chart = PhaseChart(energy="U_d", entropy="S_d", q_names=())

    def kc_fn(env):
        _, (temp,) = Ubar.value_and_gradient({"S_d": env["S_d"]})
        if scalar_value(temp) <= 0.0:
            raise DomainError("damper temperature Ubar'(S_d) must be positive")
        return (env["p_U_d"] + env["p_S_d"] / temp) * d * env["u_d"]

    manifold = StateManifold(
        chart=chart, representation=ENERGY, generator=Ubar,
        domain=None, domain_desc="all damper entropies",
        sample_box={"S_d": (-1.0, 2.0)})
    control = ControlHamiltonian(
        field=ScalarField(chart.phase_names + ("u_d",), kc_fn, label="damper port"),
        port="u_d", linear_in_u=False, input_name="u_d")
    return PortThermoSystem(name=name, manifold=manifold,
                            internal=ScalarField(chart.phase_names, lambda env: 0.0,
                                                 label="0"),
                            controls=(control,))
