"""Reduced ODE integration on the lifted manifold with invariant monitoring.

The flow generated by a valid Hamiltonian preserves the lifted manifold, so
integration happens directly in the manifold's base coordinates: in the
energy form the state is (S, q) and the velocity is the Hamiltonian's
partials with respect to (p_S, p); the dependent extensive variable is
recomputed from the generator at every sample instead of integrated, which
removes drift in it by construction.  Invariant channels (Hamiltonian
residual on the lift, energy balance against the power ports, entropy
production, conserved-quantity drift) are recorded alongside the states.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .calculus import ScalarField, scalar_value
from .core import lift
from .errors import DomainError, DomainExit, StepSizeUnderflow
from .system import PortThermoSystem


class InputSignal:
    """Per-port input rules: constants, functions of time, or state feedback.

    Feedback rules are called as ``rule(t, state, outputs)`` where ``state``
    binds the base coordinates and ``outputs`` binds ``y_<port>`` and
    ``ye_<port>`` for every input-independent port.  Rules are evaluated
    once per integrator stage.
    """

    def __init__(self, rules: Mapping[str, object] | None = None):
        self.rules: dict[str, tuple[str, object]] = {}
        for port, rule in (rules or {}).items():
            if isinstance(rule, (int, float)):
                self.rules[port] = ("const", float(rule))
            elif isinstance(rule, tuple):
                self.rules[port] = rule
            else:
                raise ValueError(f"bad input rule for port {port!r}")

    @classmethod
    def constant(cls, values: Mapping[str, float] | None = None, **kw: float) -> "InputSignal":
        merged = dict(values or {})
        merged.update(kw)
        return cls(merged)

    @classmethod
    def zero(cls) -> "InputSignal":
        return cls({})

    def with_time_rule(self, port: str, fn: Callable[[float], float]) -> "InputSignal":
        self.rules[port] = ("time", fn)
        return self

    def with_feedback(self, port: str,
                      fn: Callable[[float, Mapping, Mapping], float]) -> "InputSignal":
        self.rules[port] = ("feedback", fn)
        return self

    @property
    def needs_outputs(self) -> bool:
        return any(kind == "feedback" for kind, _ in self.rules.values())

    def evaluate(self, t: float, state: Mapping[str, float],
                 outputs: Mapping[str, float] | None = None) -> dict[str, float]:
        out = {}
        for port, (kind, rule) in self.rules.items():
            if kind == "const":
                out[port] = rule
            elif kind == "time":
                out[port] = float(rule(t))
            else:
                out[port] = float(rule(t, state, outputs or {}))
        return out


@dataclass(frozen=True)
class Trajectory:
    """Time series of base coordinates plus derived and invariant channels."""

    system: str
    base_names: tuple[str, ...]
    ports: tuple[str, ...]
    times: np.ndarray
    states: np.ndarray
    channels: dict[str, np.ndarray]
    complete: bool = True
    exit_reason: str = ""

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or self.states.shape != (t.size, len(self.base_names)):
            raise ValueError("inconsistent trajectory shapes")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise ValueError("times must be strictly increasing")
        for name, col in self.channels.items():
            if np.asarray(col).shape != t.shape:
                raise ValueError(f"channel {name!r} length mismatch")

    def __len__(self) -> int:
        return int(self.times.size)

    def state_bindings(self, i: int) -> dict[str, float]:
        return dict(zip(self.base_names, self.states[i]))

    def final_state(self) -> dict[str, float]:
        return self.state_bindings(len(self) - 1)

    def channel_names(self) -> list[str]:
        return list(self.channels)


class _StageContext:
    """Everything the integrator learns from one point evaluation."""

    __slots__ = ("bb", "pt", "env", "u", "f", "gen_value", "gen_grad", "k_value")

    def __init__(self, sys: PortThermoSystem, bb: dict[str, float],
                 signal: InputSignal, t: float):
        man = sys.manifold
        man.require_admissible(bb)
        self.bb = bb
        gen_value, gen_grad = man.generator.value_and_gradient(bb)
        self.gen_value = gen_value
        self.gen_grad = gen_grad
        self.pt = _assemble_lift(man, bb, gen_value, gen_grad)
        self.env = sys.chart.bindings(self.pt)
        outputs = _port_outputs(sys, self.env, None) if signal.needs_outputs else None
        self.u = sys.input_vector(signal.evaluate(t, bb, outputs))
        total = sys.total_field(self.u)
        mom = [sys.chart.momentum(n) for n in man.base_names]
        self.k_value, grad = total.value_and_gradient(self.env, mom)
        self.f = np.array(grad, dtype=float)


def _assemble_lift(man, bb, gen_value, gen_grad):
    """Build the scale-1 lift from an already-evaluated generator."""
    from .core import CoextensivePoint, ExtensivePoint, PhasePoint, ENERGY

    ch = man.chart
    g = dict(zip(man.base_names, gen_grad))
    if man.representation == ENERGY:
        x = ExtensivePoint(E=gen_value, S=bb[ch.entropy], q=tuple(bb[n] for n in ch.q_names))
        px = CoextensivePoint(p_E=-1.0, p_S=g[ch.entropy], p=tuple(g[n] for n in ch.q_names))
    else:
        x = ExtensivePoint(E=bb[ch.energy], S=gen_value, q=tuple(bb[n] for n in ch.q_names))
        px = CoextensivePoint(p_E=g[ch.energy], p_S=-1.0, p=tuple(g[n] for n in ch.q_names))
    return PhasePoint(x, px)


def _port_outputs(sys: PortThermoSystem, env: Mapping[str, float],
                  u: Mapping[str, float] | None) -> dict[str, float]:
    """y_<port> / ye_<port> for each port (input bound for nonlinear ports)."""
    ch = sys.chart
    wrt = (ch.momentum(ch.energy), ch.momentum(ch.entropy))
    out = {}
    for c in sys.controls:
        if not c.linear_in_u and u is None:
            continue  # outputs of input-dependent ports need an input value
        cenv = c.env_with_input(env, (u or {}).get(c.port, 0.0))
        grad = c.field.gradient(cenv, wrt)
        out[f"y_{c.port}"] = grad[0]
        out[f"ye_{c.port}"] = grad[1]
    return out


def reduced_vector_field(sys: PortThermoSystem, base, u=None) -> np.ndarray:
    """Base-coordinate velocity of the flow restricted to the manifold.

    Energy form: (dS/dt, dq/dt) = (dK/dp_S, dK/dp) at the scale-1 lift;
    entropy form swaps E for S.  Degree-0 homogeneity of the partials makes
    the result independent of the lift scale.
    """
    bb = sys.manifold.base_bindings(base)
    sys.manifold.require_admissible(bb)
    pt = lift(sys.manifold, bb, 1.0)
    env = sys.chart.bindings(pt)
    total = sys.total_field(u)
    mom = [sys.chart.momentum(n) for n in sys.manifold.base_names]
    return np.array(total.gradient(env, mom), dtype=float)


def _role_total(man, bb, roles, gen_value):
    total = 0.0
    for r in roles:
        total += gen_value if r == man.dependent_name else bb[r]
    return total


def _role_rate(man, ctx, roles):
    rate = 0.0
    base_index = {n: i for i, n in enumerate(man.base_names)}
    for r in roles:
        if r == man.dependent_name:
            rate += float(np.dot(np.array(ctx.gen_grad, dtype=float), ctx.f))
        else:
            rate += ctx.f[base_index[r]]
    return rate


def _channel_row(sys: PortThermoSystem, ctx: _StageContext,
                 conserved: Sequence) -> dict[str, float]:
    man = sys.manifold
    row = {
        "E": _role_total(man, ctx.bb, man.energy_roles, ctx.gen_value),
        "S": _role_total(man, ctx.bb, man.entropy_roles, ctx.gen_value),
    }
    outs = _port_outputs(sys, ctx.env, ctx.u)
    power_in = 0.0
    for c in sys.controls:
        row[f"y_{c.port}"] = outs[f"y_{c.port}"]
        row[f"ye_{c.port}"] = outs[f"ye_{c.port}"]
        row[f"u_{c.port}"] = ctx.u[c.port]
        power_in += outs[f"y_{c.port}"] * ctx.u[c.port]
    dE = _role_rate(man, ctx, man.energy_roles)
    row["K_residual"] = abs(ctx.k_value)
    row["dE_dt"] = dE
    row["power_in"] = power_in
    row["balance"] = dE - power_in
    row["entropy_rate"] = _role_rate(man, ctx, man.entropy_roles)
    for c in conserved:
        row[f"C[{c.name}]"] = scalar_value(c.field.value(ctx.bb))
    return row


def _finish(sys, names, ports, ts, xs, rows, complete, reason) -> Trajectory:
    channels = {}
    if rows:
        for key in rows[0]:
            channels[key] = np.array([r[key] for r in rows])
    return Trajectory(sys.name, tuple(names), tuple(ports), np.array(ts),
                      np.array(xs) if xs else np.zeros((0, len(names))),
                      channels, complete=complete, exit_reason=reason)


# Dormand-Prince 5(4) tableau
_DP_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_DP_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40)


def integrate(sys: PortThermoSystem, x0, input: InputSignal | None = None,
              t_span: tuple[float, float] = (0.0, 1.0), method: str = "rk4",
              steps: int | None = None, h: float | None = None,
              atol: float = 1e-9, rtol: float = 1e-9, save_every: int = 1,
              conserved: Sequence = ()) -> Trajectory:
    """Integrate the reduced dynamics and record invariant channels.

    ``method`` is "rk4" (fixed step; default step count 10_000) or "rk45"
    (adaptive Dormand-Prince with the given tolerances).  Leaving the
    admissible domain raises :class:`DomainExit` carrying the partial
    trajectory up to the last valid time.
    """
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not t1 > t0:
        raise ValueError("t_span must have positive duration")
    signal = input or InputSignal.zero()
    man = sys.manifold
    names = man.base_names
    x = np.array([man.base_bindings(x0)[n] for n in names], dtype=float)

    ts: list[float] = []
    xs: list[np.ndarray] = []
    rows: list[dict[str, float]] = []

    def record(t, xv, ctx):
        ts.append(t)
        xs.append(xv.copy())
        rows.append(_channel_row(sys, ctx, conserved))

    def context(t, xv) -> _StageContext:
        return _StageContext(sys, dict(zip(names, xv)), signal, t)

    def stage_f(t, xv) -> np.ndarray:
        return context(t, xv).f

    def bail(t_last, reason) -> DomainExit:
        traj = _finish(sys, names, sys.ports, ts, xs, rows, False, reason)
        return DomainExit(traj, t_last, reason)

    if method == "rk4":
        if steps is None:
            steps = 10_000 if h is None else max(1, round((t1 - t0) / h))
        if steps < 1:
            raise ValueError("need at least one step")
        hh = (t1 - t0) / steps
        t = t0
        try:
            ctx = context(t, x)
        except DomainError as exc:
            raise DomainExit(_finish(sys, names, sys.ports, [], [], [], False, str(exc)),
                             t0, str(exc)) from None
        record(t, x, ctx)
        for i in range(steps):
            try:
                k1 = ctx.f
                k2 = stage_f(t + hh / 2, x + (hh / 2) * k1)
                k3 = stage_f(t + hh / 2, x + (hh / 2) * k2)
                k4 = stage_f(t + hh, x + hh * k3)
                x = x + (hh / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
                t = t0 + (i + 1) * hh
                ctx = context(t, x)
            except DomainError as exc:
                raise bail(ts[-1], str(exc)) from None
            if (i + 1) % save_every == 0 or i + 1 == steps:
                record(t, x, ctx)
        return _finish(sys, names, sys.ports, ts, xs, rows, True, "")

    if method != "rk45":
        raise ValueError(f"unknown method {method!r}")

    # adaptive Dormand-Prince
    t = t0
    try:
        ctx = context(t, x)
    except DomainError as exc:
        raise DomainExit(_finish(sys, names, sys.ports, [], [], [], False, str(exc)),
                         t0, str(exc)) from None
    record(t, x, ctx)
    hh = h or (t1 - t0) / 100.0
    accepted = 0
    while t < t1:
        hh = min(hh, t1 - t)
        if hh < 1e-14 * max(1.0, abs(t)):
            raise StepSizeUnderflow(f"step size underflow at t={t:.6g}")
        try:
            ks = [ctx.f]
            for i in range(1, 7):
                xi = x + hh * sum(a * k for a, k in zip(_DP_A[i], ks))
                ks.append(stage_f(t + _DP_C[i] * hh, xi))
            x5 = x + hh * sum(b * k for b, k in zip(_DP_B5, ks))
            x4 = x + hh * sum(b * k for b, k in zip(_DP_B4, ks))
        except DomainError:
            hh *= 0.5  # retry shorter before declaring a domain exit
            if hh < 1e-14 * max(1.0, abs(t)):
                raise bail(t, "domain exit during adaptive stepping") from None
            continue
        scale = atol + rtol * np.maximum(np.abs(x), np.abs(x5))
        err = float(np.sqrt(np.mean((np.abs(x5 - x4) / scale) ** 2)))
        if err <= 1.0:
            t = t + hh
            x = x5
            try:
                ctx = context(t, x)
            except DomainError as exc:
                raise bail(ts[-1], str(exc)) from None
            accepted += 1
            if accepted % save_every == 0 or t >= t1:
                record(t, x, ctx)
        factor = 0.9 * (1.0 / err) ** 0.2 if err > 0 else 5.0
        hh = hh * min(5.0, max(0.2, factor))
    return _finish(sys, names, sys.ports, ts, xs, rows, True, "")


@dataclass(frozen=True)
class InvariantReport:
    """Worst-case invariant residuals along one trajectory."""

    system: str
    n_samples: int
    balance_abs_max: float
    balance_rel_max: float
    k_residual_max: float
    entropy_rate_min: float
    energy_drift: float
    conserved_drift: dict[str, float]

    def lines(self) -> list[str]:
        out = [f"invariants of {self.system!r} over {self.n_samples} samples",
               f"  max |dE/dt - y.u|        {self.balance_abs_max:.6e}"
               f"  (relative {self.balance_rel_max:.6e})",
               f"  max |K| on lift          {self.k_residual_max:.6e}",
               f"  min entropy rate         {self.entropy_rate_min:.6e}",
               f"  max total-energy drift   {self.energy_drift:.6e}"]
        for name, val in self.conserved_drift.items():
            out.append(f"  max drift of {name:12s}{val:.6e}")
        return out


def monitor(sys: PortThermoSystem, traj: Trajectory) -> InvariantReport:
    """Summarize the invariant channels of a trajectory produced for ``sys``."""
    if traj.system != sys.name:
        raise ValueError(f"trajectory was produced for {traj.system!r}, not {sys.name!r}")
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    ch = traj.channels
    dE = ch["dE_dt"]
    power = ch["power_in"]
    resid = np.abs(ch["balance"])
    rel = resid / (1.0 + np.abs(dE) + np.abs(power))
    energy = ch["E"]
    drift = float(np.max(np.abs(energy - energy[0])))
    conserved = {}
    for key in ch:
        if key.startswith("C["):
            conserved[key[2:-1]] = float(np.max(np.abs(ch[key] - ch[key][0])))
    return InvariantReport(
        system=sys.name,
        n_samples=len(traj),
        balance_abs_max=float(np.max(resid)),
        balance_rel_max=float(np.max(rel)),
        k_residual_max=float(np.max(ch["K_residual"])),
        entropy_rate_min=float(np.min(ch["entropy_rate"])),
        energy_drift=drift,
        conserved_drift=conserved,
    )
