"""Scenario configuration files: loading, building, running, and export.

Configs are TOML documents with sections [system] (a preset reference or an
inline definition, or a [composition] of two child documents), [initial],
[input], [integration], [analysis], and [output].  All expressions use the
package's expression syntax; sampling is driven by the config seed through
the package PRNG so that runs are bit-reproducible.
"""

from __future__ import annotations

import math

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from . import exprlang
from .calculus import ScalarField
from .core import ENERGY, ENTROPY, PhaseChart, StateManifold
from .dynamics import InputSignal, Trajectory, integrate, monitor
from .errors import ConfigError, ParseError, PortThermoError
from .exprlang import as_field
from .interconnect import FeedbackLaw, compose_entropy, compose_power
from .rng import Xoshiro256
from .scenarios import SCENARIOS, ScenarioBundle, build_scenario
from .stability import (ConservedQuantity, availability_field,
                        lyapunov_certificate)
from .system import ControlHamiltonian, PortThermoSystem, validate


def _fmt(x: float) -> str:
    return f"{x:.17g}"


@dataclass
class RunSetup:
    """Everything a command needs, assembled from one config document."""

    path: Path
    seed: int
    bundle: ScenarioBundle
    initial: dict[str, float]
    signal: InputSignal
    integration: dict[str, Any]
    analysis: dict[str, Any]
    outputs: dict[str, str]
    sweep: dict[str, list[float]]


def load_config(path: str | Path) -> dict:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _expr_field(text: str, names, params, what: str, allow_min: bool = False) -> ScalarField:
    try:
        expr = exprlang.parse(text)
    except ParseError as exc:
        raise ConfigError(f"{what}: {exc}") from None
    if not allow_min and exprlang.contains_min(expr):
        raise ConfigError(f"{what}: min() is reserved for diagnostic fields")
    try:
        return as_field(expr, names, params=params)
    except PortThermoError as exc:
        raise ConfigError(f"{what}: {exc}") from None


def _build_inline(spec: Mapping, what: str) -> ScenarioBundle:
    try:
        rep = spec["representation"]
        coords = tuple(spec.get("coordinates", ()))
        gen_text = spec["generator"]
    except KeyError as exc:
        raise ConfigError(f"{what}: missing required key {exc}") from None
    if rep not in (ENERGY, ENTROPY):
        raise ConfigError(f"{what}: representation must be 'energy' or 'entropy'")
    chart = PhaseChart(energy=spec.get("energy", "E"),
                       entropy=spec.get("entropy", "S"), q_names=coords)
    params = {k: float(v) for k, v in spec.get("parameters", {}).items()}
    base = (chart.entropy, *coords) if rep == ENERGY else (chart.energy, *coords)
    gen = _expr_field(gen_text, base, params, f"{what}.generator")

    positive = tuple(spec.get("domain", {}).get("positive", ()))
    for name in positive:
        if name not in base:
            raise ConfigError(f"{what}: positivity constraint on unknown coordinate {name!r}")
    domain = None
    desc = "all real base points"
    if positive:
        domain = lambda b, _names=positive: all(b[n] > 0 for n in _names)
        desc = " and ".join(f"{n} > 0" for n in positive)

    box = {}
    for name in base:
        given = spec.get("samples", {}).get(name)
        if given is not None:
            box[name] = (float(given[0]), float(given[1]))
        else:
            box[name] = (0.5, 2.5) if name in positive else (-2.0, 2.0)

    manifold = StateManifold(chart=chart, representation=rep, generator=gen,
                             domain=domain, domain_desc=desc, sample_box=box)
    internal = _expr_field(spec.get("internal", "0"), chart.phase_names, params,
                           f"{what}.internal")
    controls = []
    for i, ctl in enumerate(spec.get("controls", ())):
        where = f"{what}.controls[{i}]"
        try:
            port = ctl["port"]
            text = ctl["expression"]
        except KeyError as exc:
            raise ConfigError(f"{where}: missing key {exc}") from None
        input_name = ctl.get("input")
        names = chart.phase_names + ((input_name,) if input_name else ())
        controls.append(ControlHamiltonian(
            field=_expr_field(text, names, params, where),
            port=port, linear_in_u=input_name is None, input_name=input_name))
    sys = PortThermoSystem(name=spec.get("name", "inline"), manifold=manifold,
                           internal=internal, controls=tuple(controls))
    return ScenarioBundle(system=sys)


def _build_law(spec: Mapping, kind: str) -> FeedbackLaw:
    law_name = spec.get("law", "negative_feedback")
    conserves = "power" if kind == "power" else "entropy"
    if law_name == "negative_feedback":
        return FeedbackLaw.negative_feedback(conserves=conserves,
                                             v_port=spec.get("v_port", "v"))
    if law_name == "gyrative":
        return FeedbackLaw.gyrative(float(spec.get("coupling", 1.0)), conserves=conserves)
    if law_name == "decoupled":
        return FeedbackLaw.decoupled(conserves=conserves)
    if law_name == "custom":
        u1 = _expr_field(spec.get("u1", "0"), ("y1", "y2"), {}, "composition.u1",
                         allow_min=True)
        u2 = _expr_field(spec.get("u2", "0"), ("y1", "y2"), {}, "composition.u2",
                         allow_min=True)

        def rule(y1, y2):
            env = {"y1": y1, "y2": y2}
            return u1.value(env), u2.value(env)

        return FeedbackLaw.custom(rule, conserves=conserves)
    raise ConfigError(f"unknown feedback law {law_name!r}")


def build_bundle(doc: Mapping, base_dir: Path) -> ScenarioBundle:
    if "composition" in doc:
        spec = doc["composition"]
        kind = spec.get("kind", "power")
        if kind not in ("power", "entropy"):
            raise ConfigError("composition.kind must be 'power' or 'entropy'")
        try:
            left = spec["left"]
            right = spec["right"]
            ports = spec["ports"]
        except KeyError as exc:
            raise ConfigError(f"composition: missing key {exc}") from None
        sub1 = build_bundle(load_config(base_dir / left), (base_dir / left).parent)
        sub2 = build_bundle(load_config(base_dir / right), (base_dir / right).parent)
        law = _build_law(spec, kind)
        compose = compose_power if kind == "power" else compose_entropy
        sys = compose(sub1.system, sub2.system, law, ports[0], ports[1],
                      name=spec.get("name"))
        return ScenarioBundle(system=sys)
    if "system" not in doc:
        raise ConfigError("config needs a [system] or [composition] section")
    spec = doc["system"]
    if "scenario" in spec:
        name = spec["scenario"]
        if name not in SCENARIOS:
            raise ConfigError(f"unknown scenario {name!r}; see the list command")
        params = dict(spec.get("parameters", {}))
        return build_scenario(name, **params)
    return _build_inline(spec, "system")


def _build_signal(doc: Mapping, sys: PortThermoSystem) -> InputSignal:
    spec = doc.get("input", {})
    signal = InputSignal.zero()
    ports = set(sys.ports)
    base = sys.manifold.base_names
    out_names = [f"y_{p}" for p in sys.ports] + [f"ye_{p}" for p in sys.ports]
    for port, rule in spec.items():
        if port not in ports:
            raise ConfigError(f"input for unknown port {port!r}; ports: {sorted(ports)}")
        if isinstance(rule, (int, float)):
            signal.rules[port] = ("const", float(rule))
        elif isinstance(rule, Mapping) and "time" in rule:
            fld = _expr_field(rule["time"], ("t",), {}, f"input.{port}", allow_min=True)
            signal.with_time_rule(port, lambda t, _f=fld: _f.value({"t": t}))
        elif isinstance(rule, Mapping) and "feedback" in rule:
            fld = _expr_field(rule["feedback"], (*base, "t", *out_names), {},
                              f"input.{port}", allow_min=True)
            signal.with_feedback(
                port, lambda t, state, outs, _f=fld: _f.value(
                    {**state, "t": t, **outs}))
        else:
            raise ConfigError(f"input.{port}: expected a number, {{time=...}},"
                              " or {feedback=...}")
    return signal


def build_run(path: str | Path, seed_override: int | None = None) -> RunSetup:
    path = Path(path)
    doc = load_config(path)
    seed = int(doc.get("seed", 0)) if seed_override is None else int(seed_override)
    bundle = build_bundle(doc, path.parent)
    sysm = bundle.system
    initial = {k: float(v) for k, v in doc.get("initial", {}).items()}
    unknown = set(initial) - set(sysm.manifold.base_names)
    if unknown:
        raise ConfigError(f"[initial] has unknown coordinates {sorted(unknown)}; "
                          f"base coordinates are {list(sysm.manifold.base_names)}")
    signal = _build_signal(doc, sysm)

    integ = dict(doc.get("integration", {}))
    integ.setdefault("method", "rk4")
    integ.setdefault("t0", 0.0)
    integ.setdefault("t1", 1.0)
    if integ["method"] not in ("rk4", "rk45"):
        raise ConfigError(f"unknown integration method {integ['method']!r}")

    analysis = dict(doc.get("analysis", {}))
    outputs = {k: str(v) for k, v in doc.get("output", {}).items()}
    sweep = {k: [float(x) for x in v] for k, v in doc.get("sweep", {}).items()}
    return RunSetup(path=path, seed=seed, bundle=bundle, initial=initial,
                    signal=signal, integration=integ, analysis=analysis,
                    outputs=outputs, sweep=sweep)


# -- running --------------------------------------------------------------------


def _conserved_list(setup: RunSetup) -> list[ConservedQuantity]:
    out = list(setup.bundle.conserved)
    sysm = setup.bundle.system
    for i, spec in enumerate(setup.analysis.get("conserved", ())):
        where = f"analysis.conserved[{i}]"
        try:
            name = spec["name"]
            text = spec["expression"]
        except KeyError as exc:
            raise ConfigError(f"{where}: missing key {exc}") from None
        names = tuple(n for n in sysm.chart.extensive_names)
        fld = _expr_field(text, names, {}, where, allow_min=True)
        out.append(ConservedQuantity(name=name, field=fld,
                                     side=spec.get("side", sysm.manifold.representation)))
    return out


def run_trajectory(setup: RunSetup) -> Trajectory:
    integ = setup.integration
    missing = [n for n in setup.bundle.system.manifold.base_names
               if n not in setup.initial]
    if missing:
        raise ConfigError(f"[initial] is missing coordinates {missing}")
    kwargs = dict(
        t_span=(float(integ["t0"]), float(integ["t1"])),
        method=integ["method"],
        save_every=int(integ.get("save_every", 1)),
        conserved=_conserved_list(setup),
    )
    if "steps" in integ:
        kwargs["steps"] = int(integ["steps"])
    if "h" in integ:
        kwargs["h"] = float(integ["h"])
    if "atol" in integ:
        kwargs["atol"] = float(integ["atol"])
    if "rtol" in integ:
        kwargs["rtol"] = float(integ["rtol"])
    return integrate(setup.bundle.system, setup.initial, input=setup.signal, **kwargs)


def trajectory_csv(traj: Trajectory) -> str:
    """Bit-stable CSV: 17-significant-digit decimal text, LF line endings."""
    port_cols = []
    for p in traj.ports:
        port_cols += [f"y_{p}", f"ye_{p}", f"u_{p}"]
    drift_cols = sorted(k for k in traj.channels if k.startswith("C["))
    invariant_cols = ["K_residual", "dE_dt", "power_in", "balance", "entropy_rate"]
    header = ["t", *traj.base_names, "E", "S", *port_cols, *invariant_cols, *drift_cols]
    lines = [",".join(header)]
    for i in range(len(traj)):
        row = [_fmt(traj.times[i])]
        row += [_fmt(v) for v in traj.states[i]]
        row += [_fmt(traj.channels[c][i]) for c in header[1 + len(traj.base_names):]]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def empty_csv(sys: PortThermoSystem) -> str:
    port_cols = []
    for p in sys.ports:
        port_cols += [f"y_{p}", f"ye_{p}", f"u_{p}"]
    invariant_cols = ["K_residual", "dE_dt", "power_in", "balance", "entropy_rate"]
    header = ["t", *sys.manifold.base_names, "E", "S", *port_cols, *invariant_cols]
    return ",".join(header) + "\n"


def simulation_report(setup: RunSetup, traj: Trajectory) -> str:
    sysm = setup.bundle.system
    lines = [f"simulation of {sysm.name!r}",
             f"seed {setup.seed}, {len(traj)} samples, "
             f"t in [{_fmt(traj.times[0])}, {_fmt(traj.times[-1])}]"]
    if not traj.complete:
        lines.append(f"DOMAIN EXIT: {traj.exit_reason}")
    lines.append("final state:")
    for n, v in traj.final_state().items():
        lines.append(f"  {n:12s} {_fmt(v)}")
    lines += monitor(sysm, traj).lines()
    return "\n".join(lines) + "\n"


def lyapunov_candidate(setup: RunSetup) -> tuple[ScalarField, dict[str, float]]:
    spec = setup.analysis.get("lyapunov")
    if not spec or "candidate" not in spec:
        raise ConfigError("analysis.lyapunov.candidate is required")
    sysm = setup.bundle.system
    kind = spec["candidate"]
    equilibrium = {k: float(v) for k, v in spec.get("equilibrium", {}).items()}
    if kind == "scenario":
        if setup.bundle.lyapunov is None:
            raise ConfigError("this system does not ship a scenario candidate")
        return setup.bundle.lyapunov, dict(setup.bundle.equilibrium or equilibrium)
    if kind == "generator":
        if not equilibrium:
            raise ConfigError("analysis.lyapunov.equilibrium is required")
        return sysm.manifold.generator, equilibrium
    if kind == "availability":
        setpoint = {k: float(v) for k, v in setup.analysis.get("availability", {}).items()}
        if not setpoint:
            raise ConfigError("candidate 'availability' needs an [analysis.availability]"
                              " setpoint")
        if sysm.manifold.representation != ENTROPY:
            raise ConfigError("availability candidates need the entropy form")
        fld = availability_field(sysm.manifold.generator, setpoint)
        return fld, equilibrium or setpoint
    if not equilibrium:
        raise ConfigError("analysis.lyapunov.equilibrium is required")
    fld = _expr_field(kind, sysm.manifold.base_names, {}, "analysis.lyapunov.candidate",
                      allow_min=True)
    return fld, equilibrium


def run_lyapunov(setup: RunSetup):
    spec = setup.analysis.get("lyapunov") or {}
    candidate, equilibrium = lyapunov_candidate(setup)
    traj = run_trajectory(setup)
    return lyapunov_certificate(
        candidate, equilibrium, traj, setup.bundle.system,
        shell=(float(spec.get("r_min", 1e-3)), float(spec.get("r_max", 0.5))),
        n_shell=int(spec.get("samples", 500)),
        rng=Xoshiro256(setup.seed),
        decay_tol=float(spec.get("decay_tol", 1e-9)))


def run_validation(setup: RunSetup):
    return validate(setup.bundle.system, rng=Xoshiro256(setup.seed))


# -- preset export ----------------------------------------------------------------


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int,)):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    return '"' + str(v).replace("\\", "\\\\").replace('"', '\\"') + '"'


def preset_config_text(name: str, seed: int = 0, csv_name: str | None = None,
                       report_name: str | None = None) -> str:
    """Emit a complete config for a built-in preset (round-trip safe)."""
    if name not in SCENARIOS:
        raise ConfigError(f"unknown scenario {name!r}")
    info = SCENARIOS[name]
    lines = [f"seed = {seed}", "", "[system]", f'scenario = "{name}"']
    if info.defaults:
        lines += ["", "[system.parameters]"]
        lines += [f"{k} = {_toml_value(v)}" for k, v in info.defaults.items()]
    lines += ["", "[initial]"]
    lines += [f"{k} = {_toml_value(v)}" for k, v in info.initial.items()]
    if info.inputs:
        lines += ["", "[input]"]
        lines += [f"{k} = {_toml_value(v)}" for k, v in info.inputs.items()]
    t0, t1 = info.t_span
    lines += ["", "[integration]", 'method = "rk4"', f"t0 = {_toml_value(float(t0))}",
              f"t1 = {_toml_value(float(t1))}", "steps = 2000", "save_every = 10"]
    lines += ["", "[output]",
              f'csv = "{csv_name or name + ".csv"}"',
              f'report = "{report_name or name + "_report.txt"}"']
    return "\n".join(lines) + "\n"
