"""Built-in, parameterized systems used as the test corpus and CLI presets.

Each builder returns a fully validated system (or a bundle with its
conserved quantity and Lyapunov candidate, for the regulated mass-spring).
Parameters are plain floats with physical-range checks; expression-valued
parameters use the config expression syntax.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Mapping, Sequence

from .calculus import ScalarField, pexp, pln, power, scalar_value
from .core import ENERGY, ENTROPY, PhaseChart, StateManifold
from .errors import DomainError, ValidationError
from .exprlang import as_field
from .interconnect import FeedbackLaw, ComposedSystem, compose_power, make_damper
from .stability import ConservedQuantity
from .system import ControlHamiltonian, PortThermoSystem


def _positive(**params: float) -> None:
    for name, val in params.items():
        if not val > 0:
            raise ValueError(f"parameter {name} must be positive, got {val}")


# -- ideal gas -------------------------------------------------------------------


def build_ideal_gas(c_v: float = 1.5, R: float = 1.0, N: float = 1.0,
                    representation: str = ENTROPY) -> PortThermoSystem:
    """Ideal-gas state properties; no internal dynamics, no ports.

    Entropy form: Sbar(E, V) = N c_v ln E + N R ln V (additive constants
    dropped).  Energy form: the same manifold solved for E.
    """
    _positive(c_v=c_v, R=R, N=N)
    chart = PhaseChart(energy="E", entropy="S", q_names=("V",))
    box = {"E": (0.5, 3.0), "S": (-1.0, 2.0), "V": (0.5, 3.0)}
    if representation == ENTROPY:
        gen = as_field("N*cv*ln(E) + N*R*ln(V)", ("E", "V"),
                       params={"cv": c_v, "R": R, "N": N}, label="Sbar_gas")
        manifold = StateManifold(
            chart=chart, representation=ENTROPY, generator=gen,
            domain=lambda b: b["E"] > 0 and b["V"] > 0,
            domain_desc="E > 0 and V > 0",
            sample_box={k: box[k] for k in ("E", "V")})
    elif representation == ENERGY:
        def gen_fn(env):
            return pexp(env["S"] / (N * c_v)) * power(env["V"], -R / c_v)

        gen = ScalarField(("S", "V"), gen_fn, label="Ebar_gas")
        manifold = StateManifold(
            chart=chart, representation=ENERGY, generator=gen,
            domain=lambda b: b["V"] > 0, domain_desc="V > 0",
            sample_box={k: box[k] for k in ("S", "V")})
    else:
        raise ValueError(f"unknown representation {representation!r}")
    zero = ScalarField(chart.phase_names, lambda env: 0.0, label="0")
    return PortThermoSystem(name="ideal_gas", manifold=manifold, internal=zero)


# -- mass-spring and its controller ----------------------------------------------


def build_mass_spring(k: float = 1.0, m: float = 1.0) -> PortThermoSystem:
    """Harmonic oscillator with a force port; the entropy slot is inert.

    Generator 0.5 k z^2 + pi_m^2/(2m); the internal Hamiltonian moves z with
    the velocity and pi_m with the spring force, and the port adds the
    external force with power output pi_m/m (the velocity).
    """
    _positive(k=k, m=m)
    chart = PhaseChart(energy="E", entropy="S", q_names=("z", "pi_m"))
    params = {"k": k, "m": m}
    gen = as_field("0.5*k*z^2 + pi_m^2/(2*m)", ("S", "z", "pi_m"),
                   params=params, label="Ebar_spring")
    manifold = StateManifold(
        chart=chart, representation=ENERGY, generator=gen,
        sample_box={"S": (-2.0, 2.0), "z": (-2.0, 2.0), "pi_m": (-2.0, 2.0)})
    internal = as_field("p_z*pi_m/m - p_pi_m*k*z", chart.phase_names,
                        params=params, label="K_spring")
    force = ControlHamiltonian(
        field=as_field("p_pi_m + p_E*pi_m/m", chart.phase_names,
                       params=params, label="K_force"),
        port="force")
    return PortThermoSystem(name="mass_spring", manifold=manifold,
                            internal=internal, controls=(force,))


def build_controller(ebar_c: str = "0.5*(q_c - 2)^2",
                     params: Mapping[str, float] | None = None) -> PortThermoSystem:
    """One-dimensional integrator-style controller system.

    Its stored energy Ebar_c(q_c) is the design freedom; the single port
    moves q_c with the input and has power output Ebar_c'(q_c).
    """
    chart = PhaseChart(energy="E", entropy="S", q_names=("q_c",))
    ec = as_field(ebar_c, ("q_c",), params=params, label="Ebar_c")
    gen = ScalarField(("S", "q_c"), lambda env: ec.fn(env), label="Ebar_c")
    manifold = StateManifold(
        chart=chart, representation=ENERGY, generator=gen,
        sample_box={"S": (-2.0, 2.0), "q_c": (-3.0, 3.0)})

    def kc_fn(env):
        _, (slope,) = ec.value_and_gradient({"q_c": env["q_c"]})
        return env["p_q_c"] + env["p_E"] * slope

    control = ControlHamiltonian(
        field=ScalarField(chart.phase_names, kc_fn, label="K_c"), port="u_c")
    zero = ScalarField(chart.phase_names, lambda env: 0.0, label="0")
    return PortThermoSystem(name="controller", manifold=manifold,
                            internal=zero, controls=(control,))


@dataclass(frozen=True)
class ClosedLoopBundle:
    """Regulated mass-spring: plant + controller + damper, with certificates."""

    system: ComposedSystem
    plant: PortThermoSystem
    controller: PortThermoSystem
    damper: PortThermoSystem
    stage1: ComposedSystem
    conserved: ConservedQuantity
    lyapunov: ScalarField
    equilibrium: dict[str, float]
    z_star: float
    q_c_star: float


def closed_loop_mass_spring(k: float = 1.0, m: float = 1.0, z_star: float = 1.0,
                            d: float = 0.5, ubar_d: str = "exp(S_d)") -> ClosedLoopBundle:
    """Set-point regulation of the spring extension by interconnection.

    The controller energy is chosen as 0.5 (q_c - (1+k) z*)^2 so that the
    shaped candidate  Ebar_p + Ebar_c + Phi(z - q_c)  with Phi(w) = -k z* w
    has a strict minimum at (z*, 0, q_c* = z*), which lies on the invariant
    leaf of the conserved quantity through the rest state (0, 0, 0).
    Negative feedback closes the loop and a damper on the residual port
    makes the minimum attracting.
    """
    _positive(k=k, m=m, d=d)
    q_c0 = (1.0 + k) * z_star
    plant = build_mass_spring(k=k, m=m)
    controller = build_controller("0.5*(q_c - qc0)^2", params={"qc0": q_c0})
    stage1 = compose_power(plant, controller, FeedbackLaw.negative_feedback(v_port="v"),
                           "force", "u_c", name="spring_with_controller")
    damper = make_damper(as_field(ubar_d, ("S_d",), label="Ubar_d"), d=d)
    full = compose_power(stage1, damper, FeedbackLaw.negative_feedback(v_port="v_ext"),
                         "v", "u_d", name="regulated_mass_spring")

    phi_slope = -k * z_star
    conserved = ConservedQuantity(
        name="phi(z-q_c)",
        field=ScalarField(("z", "q_c"),
                          lambda env: phi_slope * (env["z"] - env["q_c"]),
                          label="phi(z-q_c)"),
        side=ENERGY)

    def shaped_fn(env):
        plant_e = 0.5 * k * env["z"] ** 2 + env["pi_m"] ** 2 / (2.0 * m)
        ctrl_e = 0.5 * (env["q_c"] - q_c0) ** 2
        return plant_e + ctrl_e + phi_slope * (env["z"] - env["q_c"])

    shaped = ScalarField(("z", "pi_m", "q_c"), shaped_fn, label="shaped_energy")
    q_c_star = z_star
    equilibrium = {"z": z_star, "pi_m": 0.0, "q_c": q_c_star}

    grad = shaped.gradient(equilibrium)
    if max(abs(g) for g in grad) > 1e-9:
        raise ValidationError(
            f"shaping failed: candidate gradient {grad} at {equilibrium}")
    return ClosedLoopBundle(system=full, plant=plant, controller=controller,
                            damper=damper, stage1=stage1, conserved=conserved,
                            lyapunov=shaped, equilibrium=equilibrium,
                            z_star=z_star, q_c_star=q_c_star)


# -- chemical reaction network -----------------------------------------------------


def build_crn(Z: Sequence[Sequence[float]] | None = None,
              B: Sequence[Sequence[float]] | None = None,
              kappa: Sequence[float] | float = 1.0,
              c_heat: float = 1.5, R: float = 1.0,
              mu0: Sequence[float] | None = None,
              name: str = "crn") -> PortThermoSystem:
    """Isothermal-energy reaction network in the entropy form.

    ``Z`` holds the complex compositions (species x complexes), ``B`` the
    reaction-graph incidence (complexes x reactions, columns summing to
    zero), ``kappa`` positive reaction weights.  The entropy model
    Sbar = c ln E - R sum(q ln q - q) - mu0.q makes the kinetics mass-action
    with activity offsets mu0 (default 0).  Defaults give the two-species
    isomerization A <-> B with unit rate.
    """
    Z = [[1.0, 0.0], [0.0, 1.0]] if Z is None else [list(map(float, r)) for r in Z]
    B = [[-1.0], [1.0]] if B is None else [list(map(float, r)) for r in B]
    n_species = len(Z)
    n_complex = len(Z[0])
    n_react = len(B[0])
    if len(B) != n_complex:
        raise ValueError("incidence rows must match the number of complexes")
    for row in Z:
        if len(row) != n_complex or any(v != round(v) for v in row):
            raise ValueError("composition matrix must be integer and rectangular")
    for j in range(n_react):
        col = [B[i][j] for i in range(n_complex)]
        if any(v not in (-1.0, 0.0, 1.0) for v in col) or sum(col) != 0.0:
            raise ValueError("incidence columns must be {-1,0,1} and sum to zero")
    kap = [float(kappa)] * n_react if isinstance(kappa, (int, float)) else list(kappa)
    if len(kap) != n_react or any(v <= 0 for v in kap):
        raise ValueError("weights must be positive, one per reaction")
    _positive(c_heat=c_heat, R=R)
    mu0 = [0.0] * n_species if mu0 is None else list(map(float, mu0))

    # weighted graph Laplacian on complex space, then premultiplied by Z
    lap = [[sum(kap[e] * B[a][e] * B[b][e] for e in range(n_react))
            for b in range(n_complex)] for a in range(n_complex)]
    M = [[sum(Z[i][a] * lap[a][g] for a in range(n_complex))
          for g in range(n_complex)] for i in range(n_species)]

    qn = tuple(f"q{i + 1}" for i in range(n_species))
    chart = PhaseChart(energy="E", entropy="S", q_names=qn)

    def sbar_fn(env):
        acc = c_heat * pln(env["E"])
        for i, nm in enumerate(qn):
            qi = env[nm]
            acc = acc - R * (qi * pln(qi) - qi) - mu0[i] * qi
        return acc

    gen = ScalarField(("E", *qn), sbar_fn, label="Sbar_crn")

    def internal_fn(env):
        lnq = [pln(env[nm]) + mu0[i] / R for i, nm in enumerate(qn)]
        w = []
        for g in range(n_complex):
            expo = 0.0
            for i in range(n_species):
                if Z[i][g] != 0.0:
                    expo = expo + Z[i][g] * lnq[i]
            w.append(pexp(expo))
        total = 0.0
        for i, nm in enumerate(qn):
            flux = 0.0
            for g in range(n_complex):
                if M[i][g] != 0.0:
                    flux = flux - M[i][g] * w[g]
            dsdq = -(R * pln(env[nm]) + mu0[i])
            total = total + (env[chart.momentum(nm)] + env["p_S"] * dsdq) * flux
        return total

    box = {"E": (0.5, 3.0)}
    box.update({nm: (0.2, 3.0) for nm in qn})
    manifold = StateManifold(
        chart=chart, representation=ENTROPY, generator=gen,
        domain=lambda b: b["E"] > 0 and all(b[nm] > 0 for nm in qn),
        domain_desc="E > 0 and all concentrations > 0",
        sample_box=box)
    internal = ScalarField(chart.phase_names, internal_fn, label="K_crn")
    return PortThermoSystem(name=name, manifold=manifold, internal=internal)


def crn_total_species() -> ConservedQuantity:
    """Total concentration of the default two-species network."""
    return ConservedQuantity(
        name="q1+q2",
        field=ScalarField(("q1", "q2"), lambda env: env["q1"] + env["q2"],
                          label="q1+q2"),
        side=ENTROPY)


# -- heat conduction ----------------------------------------------------------------


def build_heat_exchanger(lam: float = 1.0, ubar_1: str = "exp(S1)",
                         ubar_2: str = "exp(S2)") -> PortThermoSystem:
    """Two compartments exchanging heat by conduction, in the energy form.

    Generator Ubar_1(S1) + Ubar_2(S2); the internal Hamiltonian moves heat
    from hot to cold, conserving total energy while the combined entropy
    production lam (T1-T2)^2 / (T1 T2) is nonnegative.
    """
    _positive(lam=lam)
    chart = PhaseChart(energy="E", entropy="S1", q_names=("S2",))
    u1 = as_field(ubar_1, ("S1",), label="Ubar_1")
    u2 = as_field(ubar_2, ("S2",), label="Ubar_2")

    def gen_fn(env):
        return u1.fn(env) + u2.fn(env)

    gen = ScalarField(("S1", "S2"), gen_fn, label="Ubar_1+Ubar_2")

    def temps(env):
        _, (t1,) = u1.value_and_gradient({"S1": env["S1"]})
        _, (t2,) = u2.value_and_gradient({"S2": env["S2"]})
        if scalar_value(t1) <= 0.0 or scalar_value(t2) <= 0.0:
            raise DomainError("compartment temperature must be positive")
        return t1, t2

    def internal_fn(env):
        t1, t2 = temps(env)
        return lam * (t1 - t2) * (env["p_S2"] / t2 - env["p_S1"] / t1)

    manifold = StateManifold(
        chart=chart, representation=ENERGY, generator=gen,
        entropy_roles=("S1", "S2"),
        sample_box={"S1": (-1.0, 1.5), "S2": (-1.0, 1.5)})
    internal = ScalarField(chart.phase_names, internal_fn, label="K_conduction")
    return PortThermoSystem(name="heat_exchanger", manifold=manifold, internal=internal)


def build_heat_compartment(c_heat: float = 1.0, name: str = "compartment") -> PortThermoSystem:
    """Single heat store in the entropy form with one heat-flow port.

    Sbar(E) = c ln E, so 1/T = c/E.  The port injects heat: dE/dt = u, with
    entropy-flow output 1/T.
    """
    _positive(c_heat=c_heat)
    chart = PhaseChart(energy="E", entropy="S", q_names=())
    gen = as_field("c*ln(E)", ("E",), params={"c": c_heat}, label="Sbar_store")

    def kc_fn(env):
        return env["p_E"] + env["p_S"] * (c_heat / env["E"])

    manifold = StateManifold(
        chart=chart, representation=ENTROPY, generator=gen,
        domain=lambda b: b["E"] > 0, domain_desc="E > 0",
        sample_box={"E": (0.5, 3.0)})
    control = ControlHamiltonian(
        field=ScalarField(chart.phase_names, kc_fn, label="K_heat"), port="heat")
    zero = ScalarField(chart.phase_names, lambda env: 0.0, label="0")
    return PortThermoSystem(name=name, manifold=manifold, internal=zero,
                            controls=(control,))


def conduction_law(lam: float = 1.0) -> FeedbackLaw:
    """Entropy-port coupling u1 = lam (T2 - T1), u2 = -u1, with T = 1/y_e."""
    _positive(lam=lam)

    def rule(y1: float, y2: float) -> tuple[float, float]:
        if y1 <= 0 or y2 <= 0:
            raise DomainError("conduction needs positive inverse temperatures")
        flow = lam * (1.0 / y2 - 1.0 / y1)
        return flow, -flow

    return FeedbackLaw.custom(rule, conserves="entropy")


# -- deliberately broken fixture ------------------------------------------------------


def build_broken_first_law() -> PortThermoSystem:
    """A system whose internal Hamiltonian pumps energy; validation must fail."""
    chart = PhaseChart(energy="E", entropy="S", q_names=("q1",))
    gen = as_field("0.5*(S^2 + q1^2)", ("S", "q1"), label="Ebar_bowl")
    manifold = StateManifold(
        chart=chart, representation=ENERGY, generator=gen,
        sample_box={"S": (-2.0, 2.0), "q1": (0.5, 2.0)})
    internal = as_field("p_E*q1", chart.phase_names, label="K_broken")
    return PortThermoSystem(name="broken_first_law", manifold=manifold,
                            internal=internal)


# -- registry ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScenarioBundle:
    """Uniform wrapper handed to the CLI: a system plus optional analyses."""

    system: PortThermoSystem
    conserved: tuple[ConservedQuantity, ...] = ()
    lyapunov: ScalarField | None = None
    equilibrium: dict[str, float] | None = None


@dataclass(frozen=True)
class ScenarioInfo:
    name: str
    doc: str
    defaults: dict
    initial: dict
    t_span: tuple[float, float]
    inputs: dict
    build: object  # callable(**params) -> ScenarioBundle


def _bundle_closed_loop(**params) -> ScenarioBundle:
    b = closed_loop_mass_spring(**params)
    return ScenarioBundle(system=b.system, conserved=(b.conserved,),
                          lyapunov=b.lyapunov, equilibrium=b.equilibrium)


def _bundle_crn(**params) -> ScenarioBundle:
    sys = build_crn(**params)
    return ScenarioBundle(system=sys, conserved=(crn_total_species(),))


def _plain(builder):
    def build(**params):
        return ScenarioBundle(system=builder(**params))
    return build


SCENARIOS: dict[str, ScenarioInfo] = {}


def _register(info: ScenarioInfo) -> None:
    SCENARIOS[info.name] = info


_register(ScenarioInfo(
    name="broken_first_law",
    doc="deliberately invalid fixture: internal Hamiltonian pumps energy",
    defaults={}, initial={"S": 0.0, "q1": 0.5}, t_span=(0.0, 1.0), inputs={},
    build=_plain(build_broken_first_law)))
_register(ScenarioInfo(
    name="closed_loop_mass_spring",
    doc="mass-spring regulated to z* by a controller plus damper",
    defaults={"k": 1.0, "m": 1.0, "z_star": 1.0, "d": 0.5},
    initial={"S": 0.0, "z": 0.0, "pi_m": 0.0, "S_2": 0.0, "q_c": 0.0, "S_d": 0.0},
    t_span=(0.0, 50.0), inputs={},
    build=_bundle_closed_loop))
_register(ScenarioInfo(
    name="controller",
    doc="scalar controller system with designable stored energy",
    defaults={}, initial={"S": 0.0, "q_c": 0.0}, t_span=(0.0, 1.0),
    inputs={"u_c": 0.0},
    build=_plain(build_controller)))
_register(ScenarioInfo(
    name="crn",
    doc="two-species isomerization network, mass-action kinetics",
    defaults={"kappa": 1.0, "c_heat": 1.5, "R": 1.0},
    initial={"E": 1.5, "q1": 2.0, "q2": 0.5}, t_span=(0.0, 10.0), inputs={},
    build=_bundle_crn))
_register(ScenarioInfo(
    name="damper",
    doc="one-port dissipative element with entropy production",
    defaults={"d": 0.5},
    initial={"S_d": 0.0}, t_span=(0.0, 1.0), inputs={"u_d": 1.0},
    build=_plain(lambda d=0.5: make_damper(as_field("exp(S_d)", ("S_d",),
                                                    label="Ubar_d"), d=d))))
_register(ScenarioInfo(
    name="heat_compartment",
    doc="single heat store with a heat-flow port",
    defaults={"c_heat": 1.0},
    initial={"E": 1.0}, t_span=(0.0, 1.0), inputs={"heat": 0.0},
    build=_plain(build_heat_compartment)))
_register(ScenarioInfo(
    name="heat_exchanger",
    doc="two compartments exchanging heat hot-to-cold",
    defaults={"lam": 1.0},
    initial={"S1": 1.0, "S2": 0.0}, t_span=(0.0, 5.0), inputs={},
    build=_plain(build_heat_exchanger)))
_register(ScenarioInfo(
    name="ideal_gas",
    doc="ideal-gas state properties (no dynamics); intensives testbed",
    defaults={"c_v": 1.5, "R": 1.0, "N": 1.0},
    initial={"E": 1.5, "V": 1.0}, t_span=(0.0, 1.0), inputs={},
    build=_plain(build_ideal_gas)))
_register(ScenarioInfo(
    name="mass_spring",
    doc="harmonic oscillator with an external-force port",
    defaults={"k": 1.0, "m": 1.0},
    initial={"S": 0.0, "z": 1.0, "pi_m": 0.0}, t_span=(0.0, 2.0 * math.pi),
    inputs={"force": 0.0},
    build=_plain(build_mass_spring)))


def build_scenario(name: str, **params) -> ScenarioBundle:
    if name not in SCENARIOS:
        raise KeyError(f"unknown scenario {name!r}; known: {sorted(SCENARIOS)}")
    info = SCENARIOS[name]
    merged = dict(info.defaults)
    merged.update(params)
    return info.build(**merged)
