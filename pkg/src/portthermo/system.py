"""Port-thermodynamic systems: internal/control Hamiltonians and their checks.

A system is a state manifold together with an internal Hamiltonian and a set
of control Hamiltonians, all degree-1 homogeneous in the co-extensive
variables and vanishing on the lifted manifold.  ``validate`` verifies those
structural identities plus the two physical constraints on the internal
part: the total-energy partial must vanish on the manifold and the
total-entropy partial must be nonnegative there.  The checks are
sampling-based because generating functions are arbitrary user expressions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .calculus import (DNum, Overlay, ScalarField, euler_residual, scalar_value)
from .core import StateManifold, PhasePoint, lift, membership_residual, sample_base
from .errors import DomainError, ValidationError
from .rng import Xoshiro256


@dataclass(frozen=True)
class Tolerances:
    """Default residual bounds for the structural and physical checks."""

    euler: float = 1e-9
    on_manifold: float = 1e-9
    first_law: float = 1e-9
    second_law_min: float = -1e-12


@dataclass(frozen=True)
class ControlHamiltonian:
    """One port's interaction Hamiltonian.

    If ``linear_in_u`` the field depends only on phase coordinates and the
    port contributes ``field * u``.  Otherwise the field also reads its own
    input under ``input_name`` and contributes ``field(., u) * u`` (the
    damper's quadratic port is the motivating case).
    """

    field: ScalarField
    port: str
    linear_in_u: bool = True
    input_name: str | None = None

    def __post_init__(self):
        if not self.linear_in_u and not self.input_name:
            raise ValueError(f"port {self.port!r}: nonlinear control needs input_name")

    def env_with_input(self, env: Mapping, u: float) -> Mapping:
        if self.linear_in_u:
            return env
        merged = Overlay(env)
        merged[self.input_name] = u
        return merged

    def term(self, env: Mapping, u: float):
        """This port's contribution to the total Hamiltonian at input u."""
        if u == 0.0:
            return 0.0
        return self.field.fn(self.env_with_input(env, u)) * u


@dataclass(frozen=True)
class PortThermoSystem:
    """A state manifold paired with internal and control Hamiltonians."""

    name: str
    manifold: StateManifold
    internal: ScalarField
    controls: tuple[ControlHamiltonian, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "controls", tuple(self.controls))
        ports = [c.port for c in self.controls]
        if len(set(ports)) != len(ports):
            raise ValueError(f"duplicate port labels {ports}")

    @property
    def chart(self):
        return self.manifold.chart

    @property
    def ports(self) -> tuple[str, ...]:
        return tuple(c.port for c in self.controls)

    def control(self, port: str) -> ControlHamiltonian:
        for c in self.controls:
            if c.port == port:
                return c
        raise KeyError(f"system {self.name!r} has no port {port!r}")

    def input_vector(self, u) -> dict[str, float]:
        """Normalize an input (mapping, sequence, scalar, or None) per port."""
        ports = self.ports
        if u is None:
            return {p: 0.0 for p in ports}
        if isinstance(u, Mapping):
            unknown = set(u) - set(ports)
            if unknown:
                raise KeyError(f"unknown ports {sorted(unknown)}")
            return {p: float(u.get(p, 0.0)) for p in ports}
        if isinstance(u, (int, float)):
            if len(ports) != 1:
                raise ValueError("scalar input given for a multi-port system")
            return {ports[0]: float(u)}
        vals = tuple(u)
        if len(vals) != len(ports):
            raise ValueError(f"{len(vals)} inputs for {len(ports)} ports")
        return {p: float(v) for p, v in zip(ports, vals)}

    def total_field(self, u=None) -> ScalarField:
        """The full Hamiltonian at a frozen input value, as a field."""
        uu = self.input_vector(u)
        internal = self.internal
        controls = self.controls

        def fn(env):
            total = internal.fn(env)
            for c in controls:
                total = total + c.term(env, uu[c.port])
            return total

        return ScalarField(self.chart.phase_names, fn, label=f"K[{self.name}]")

    def phase_bindings(self, pt: PhasePoint) -> dict[str, float]:
        return self.chart.bindings(pt)


@dataclass(frozen=True)
class CheckResult:
    name: str
    worst: float
    bound: float
    kind: str  # "max": pass iff worst <= bound; "min": pass iff worst >= bound
    ok: bool
    at: dict[str, float] | None = None


@dataclass(frozen=True)
class ValidationReport:
    system: str
    n_samples: int
    checks: tuple[CheckResult, ...]

    @property
    def passed(self) -> bool:
        return all(c.ok for c in self.checks)

    @property
    def failures(self) -> list[str]:
        return [c.name for c in self.checks if not c.ok]

    def lines(self) -> list[str]:
        out = [f"validation of {self.system!r} at {self.n_samples} sample points",
               f"{'check':42s} {'worst':>14s} {'bound':>11s}  status"]
        for c in self.checks:
            rel = "<=" if c.kind == "max" else ">="
            out.append(f"{c.name:42s} {c.worst:>14.6e} {rel}{c.bound:>9.1e}  "
                       f"{'ok' if c.ok else 'FAIL'}")
        out.append(f"result: {'pass' if self.passed else 'FAIL'}")
        return out


def _momentum_sum_partial(sys: PortThermoSystem, fld: ScalarField, env: Mapping,
                          roles: Sequence[str]) -> float:
    names = [sys.chart.momentum(r) for r in roles]
    grad = fld.gradient(env, names)
    return float(sum(grad))


def validate(sys: PortThermoSystem, samples: Sequence | None = None,
             u_samples: Sequence | None = None, n_samples: int = 50,
             rng: Xoshiro256 | None = None, tol: Tolerances = Tolerances()) -> ValidationReport:
    """Check the structural identities of a system at sampled lifted points.

    Per check the worst residual over all samples is reported: Euler
    (degree-1) residual of the internal and each control Hamiltonian, the
    total Hamiltonian restricted to the lift for each input sample, the
    energy-conservation partial, and the entropy-production partial.
    """
    if samples is None:
        rng = rng or Xoshiro256(0)
        samples = sample_base(sys.manifold, rng, n_samples)
    samples = [sys.manifold.base_bindings(s) for s in samples]
    if not samples:
        raise ValueError("empty sample set")
    if u_samples is None:
        m = len(sys.controls)
        u_samples = [[0.0] * m, [1.0] * m, [-1.0] * m] if m else [[]]

    mom_names = sys.chart.momentum_names
    worst: dict[str, tuple[float, dict | None]] = {}
    mins: dict[str, tuple[float, dict | None]] = {}

    def see_max(key, val, at):
        cur = worst.get(key)
        if cur is None or val > cur[0]:
            worst[key] = (val, at)

    def see_min(key, val, at):
        cur = mins.get(key)
        if cur is None or val < cur[0]:
            mins[key] = (val, at)

    for bb in samples:
        pt = lift(sys.manifold, bb, 1.0)
        env = sys.phase_bindings(pt)
        see_max("euler[K_internal]", abs(euler_residual(sys.internal, env, mom_names)), bb)
        for c in sys.controls:
            cenv = c.env_with_input(env, 1.0)
            see_max(f"euler[{c.port}]", abs(euler_residual(c.field, cenv, mom_names)), bb)
            see_max(f"on_manifold[{c.port}]", abs(scalar_value(c.field.fn(cenv))), bb)
        see_max("on_manifold[K_internal]", abs(scalar_value(sys.internal.fn(env))), bb)
        for u in u_samples:
            tot = sys.total_field(u)
            see_max("on_manifold[K_total]", abs(scalar_value(tot.fn(env))), bb)
        see_max("first_law[dK/dp_energy]",
                abs(_momentum_sum_partial(sys, sys.internal, env, sys.manifold.energy_roles)), bb)
        see_min("second_law[dK/dp_entropy]",
                _momentum_sum_partial(sys, sys.internal, env, sys.manifold.entropy_roles), bb)

    checks = []
    bounds = {"euler": tol.euler, "on_manifold": tol.on_manifold, "first_law": tol.first_law}
    for key, (val, at) in worst.items():
        bound = bounds[key.split("[")[0]]
        checks.append(CheckResult(key, val, bound, "max", val <= bound, at))
    for key, (val, at) in mins.items():
        checks.append(CheckResult(key, val, tol.second_law_min, "min",
                                  val >= tol.second_law_min, at))
    return ValidationReport(sys.name, len(samples), tuple(checks))


def require_valid(sys: PortThermoSystem, **kwargs) -> ValidationReport:
    report = validate(sys, **kwargs)
    if not report.passed:
        raise ValidationError(
            f"system {sys.name!r} failed checks: {report.failures}", report)
    return report


def _outputs(sys: PortThermoSystem, pt: PhasePoint, u, wrt: str, tol: float) -> np.ndarray:
    resid = membership_residual(sys.manifold, pt)
    if resid > tol:
        raise DomainError(f"point is off the manifold (residual {resid:.3g})")
    uu = sys.input_vector(u)
    env = sys.phase_bindings(pt)
    out = []
    for c in sys.controls:
        cenv = c.env_with_input(env, uu[c.port])
        out.append(c.field.partial(cenv, wrt))
    return np.array(out)


def power_output(sys: PortThermoSystem, pt: PhasePoint, u=None, tol: float = 1e-9) -> np.ndarray:
    """Power-conjugate outputs: dK_c/dp_E per port (degree-0 in the momenta)."""
    return _outputs(sys, pt, u, sys.chart.momentum(sys.chart.energy), tol)


def entropy_output(sys: PortThermoSystem, pt: PhasePoint, u=None, tol: float = 1e-9) -> np.ndarray:
    """Entropy-flow-conjugate outputs: dK_c/dp_S per port."""
    return _outputs(sys, pt, u, sys.chart.momentum(sys.chart.entropy), tol)


def equilibrium_residual(sys: PortThermoSystem, base) -> float:
    """Norm of the full differential of the internal Hamiltonian at the lift.

    Zero exactly at equilibria; gauge-independent in the sense that a zero
    at one lift scale is zero at every rescaling.
    """
    pt = lift(sys.manifold, base, 1.0)
    env = sys.phase_bindings(pt)
    grad = sys.internal.gradient(env, sys.chart.phase_names)
    return float(np.linalg.norm(np.array(grad, dtype=float)))
