"""Shared fixtures and independent numerical oracles for the test suite.

Long trajectories are session-scoped so the acceptance criteria and the
unit tests share one integration per system.  Finite differences here are
the independent oracle for every derivative the package computes
analytically; they must never call back into the package's own gradients.
"""

from __future__ import annotations

import math
from contextlib import contextmanager

import numpy as np
import pytest

import portthermo as pt
from portthermo.rng import Xoshiro256

# -- finite-difference oracles ---------------------------------------------------


def central_diff(f, x: float, h: float = 1e-6) -> float:
    return (f(x + h) - f(x - h)) / (2 * h)


def fd_gradient(f, point: dict, names, h: float = 1e-6) -> list[float]:
    """Central-difference gradient of a dict->float callable."""
    out = []
    for n in names:
        hi = dict(point)
        lo = dict(point)
        hi[n] = point[n] + h
        lo[n] = point[n] - h
        out.append((f(hi) - f(lo)) / (2 * h))
    return out


@contextmanager
def criterion(label: str):
    """Print one pass/fail line per acceptance criterion."""
    try:
        yield
    except BaseException:
        print(f"[ACCEPTANCE] {label}: FAIL")
        raise
    print(f"[ACCEPTANCE] {label}: PASS")


# -- systems ----------------------------------------------------------------------


@pytest.fixture(scope="session")
def mass_spring():
    return pt.build_mass_spring()


@pytest.fixture(scope="session")
def crn():
    return pt.build_crn()


@pytest.fixture(scope="session")
def closed_loop():
    return pt.closed_loop_mass_spring()


@pytest.fixture(scope="session")
def heat_exchanger():
    return pt.build_heat_exchanger()


@pytest.fixture(scope="session")
def gas_entropy():
    return pt.build_ideal_gas()


@pytest.fixture(scope="session")
def gas_energy():
    return pt.build_ideal_gas(representation=pt.ENERGY)


@pytest.fixture(scope="session")
def damper():
    return pt.make_damper(pt.as_field("exp(S_d)", ("S_d",), label="Ubar_d"), d=0.5)


@pytest.fixture(scope="session")
def all_bundles():
    """Every registry scenario, built once (including the broken fixture)."""
    return {name: pt.build_scenario(name) for name in pt.SCENARIOS}


# -- shared long trajectories (10^4 RK4 steps unless static) -----------------------

_STEPS = 10_000
_SAVE = 20


@pytest.fixture(scope="session")
def osc_traj(mass_spring):
    return pt.integrate(mass_spring, {"S": 0.0, "z": 1.0, "pi_m": 0.0},
                        t_span=(0.0, 2.0 * math.pi), steps=_STEPS, save_every=_SAVE)


@pytest.fixture(scope="session")
def forced_osc_traj(mass_spring):
    sig = pt.InputSignal.constant(force=0.3)
    return pt.integrate(mass_spring, {"S": 0.0, "z": 1.0, "pi_m": 0.0}, input=sig,
                        t_span=(0.0, 2.0 * math.pi), steps=_STEPS, save_every=_SAVE)


@pytest.fixture(scope="session")
def crn_traj(crn):
    return pt.integrate(crn, {"E": 1.5, "q1": 2.0, "q2": 0.5}, t_span=(0.0, 10.0),
                        steps=_STEPS, save_every=_SAVE,
                        conserved=[pt.crn_total_species()])


@pytest.fixture(scope="session")
def closed_loop_traj(closed_loop):
    x0 = {"S": 0.0, "z": 0.0, "pi_m": 0.0, "S_2": 0.0, "q_c": 0.0, "S_d": 0.0}
    return pt.integrate(closed_loop.system, x0, t_span=(0.0, 50.0), steps=_STEPS,
                        save_every=_SAVE, conserved=[closed_loop.conserved])


@pytest.fixture(scope="session")
def heat_traj(heat_exchanger):
    return pt.integrate(heat_exchanger, {"S1": 1.0, "S2": 0.0}, t_span=(0.0, 5.0),
                        steps=_STEPS, save_every=_SAVE)


@pytest.fixture(scope="session")
def damper_traj(damper):
    return pt.integrate(damper, {"S_d": 0.0}, input=pt.InputSignal.constant(u_d=1.0),
                        t_span=(0.0, 1.0), steps=_STEPS, save_every=_SAVE)


@pytest.fixture(scope="session")
def compartment_traj():
    sysm = pt.build_heat_compartment()
    sig = pt.InputSignal.constant(heat=0.2)
    traj = pt.integrate(sysm, {"E": 1.0}, input=sig, t_span=(0.0, 2.0),
                        steps=_STEPS, save_every=_SAVE)
    return sysm, traj


@pytest.fixture(scope="session")
def rng():
    return Xoshiro256(0)
