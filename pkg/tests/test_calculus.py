"""Derivative numbers, scalar fields, brackets, and homogeneity checks."""

import math

import pytest
from hypothesis import given, settings, strategies as st

import portthermo as pt
from portthermo.calculus import (DNum, ScalarField, pexp, pln, power, psqrt,
                                 scalar_value)
from portthermo.errors import DomainError, EvalError

from conftest import fd_gradient

finite = st.floats(min_value=-3.0, max_value=3.0, allow_nan=False)


def field(expr, names, **params):
    return pt.as_field(expr, names, params=params or None)


class TestDNum:
    def test_chain_rule_composition(self):
        x = DNum(2.0, (1.0,))
        y = pexp(x * x) / (1.0 + x)
        # d/dx exp(x^2)/(1+x) = exp(x^2) (2x(1+x) - 1)/(1+x)^2
        expected = math.exp(4.0) * (2 * 2 * 3 - 1) / 9.0
        assert y.v == pytest.approx(math.exp(4.0) / 3.0, rel=1e-15)
        assert y.d[0] == pytest.approx(expected, rel=1e-12)

    def test_division_by_zero_rejected(self):
        with pytest.raises(DomainError):
            DNum(1.0, (1.0,)) / DNum(0.0, (1.0,))
        with pytest.raises(DomainError):
            1.0 / DNum(0.0, (1.0,))

    def test_ln_domain(self):
        with pytest.raises(DomainError):
            pln(0.0)
        with pytest.raises(DomainError):
            pln(DNum(-1.0, (1.0,)))

    def test_sqrt_domain(self):
        with pytest.raises(DomainError):
            psqrt(-1.0)
        assert psqrt(DNum(4.0, (1.0,))).d[0] == pytest.approx(0.25)

    def test_power_rules(self):
        with pytest.raises(DomainError):
            power(-2.0, 0.5)
        with pytest.raises(DomainError):
            power(0.0, -1.0)
        assert power(-2.0, 3) == -8.0
        assert power(DNum(3.0, (1.0,)), 2).d[0] == 6.0

    def test_nested_second_derivative(self):
        # f(x) = x^3: nest one derivative number inside another
        inner = DNum(2.0, (1.0,))
        outer = DNum(inner, (1.0,))
        cube = outer * outer * outer
        assert scalar_value(cube) == 8.0
        first = cube.d[0]            # 3 x^2 carried with its own derivative
        assert scalar_value(first) == 12.0
        assert first.d[0] == 12.0    # d/dx 3x^2 = 6x = 12

    @given(a=finite, b=finite)
    @settings(max_examples=40, deadline=None)
    def test_product_rule_matches_fd(self, a, b):
        f = field("x*y + sin(x)*exp(y)", ("x", "y"))
        point = {"x": a, "y": b}
        grad = f.gradient(point)
        ref = fd_gradient(lambda p: f.value(p), point, ("x", "y"))
        assert grad[0] == pytest.approx(ref[0], rel=1e-6, abs=1e-6)
        assert grad[1] == pytest.approx(ref[1], rel=1e-6, abs=1e-6)


class TestGradient:
    def test_cube(self):
        assert pt.gradient(field("x^3", ("x",)), {"x": 2.0}) == [12.0]

    def test_quadratic_bowl(self):
        f = field("0.5*(S^2 + q^2)", ("S", "q"))
        assert pt.gradient(f, {"S": 3.0, "q": 4.0}) == [3.0, 4.0]

    def test_gas_entropy_gradient(self):
        f = field("1.5*ln(E) + ln(V)", ("E", "V"))
        point = {"E": 1.5, "V": 1.0}
        assert pt.gradient(f, point) == pytest.approx([1.0, 1.0], rel=1e-14)
        ref = fd_gradient(lambda p: f.value(p), point, ("E", "V"))
        assert pt.gradient(f, point) == pytest.approx(ref, rel=1e-7)

    def test_fd_corpus(self, rng):
        exprs = ["x^2*y - y^3", "exp(x)*cos(y)", "ln(3 + x^2) + sqrt(4 + y^2)",
                 "x/(1 + y^2)", "sin(x*y)"]
        for k in range(20):
            f = field(exprs[k % len(exprs)], ("x", "y"))
            point = {"x": rng.uniform(-2, 2), "y": rng.uniform(-2, 2)}
            got = f.gradient(point)
            ref = fd_gradient(lambda p: f.value(p), point, ("x", "y"))
            for g, r in zip(got, ref):
                assert g == pytest.approx(r, rel=1e-6, abs=1e-6)

    def test_unbound_coordinate(self):
        with pytest.raises(EvalError):
            field("x + y", ("x", "y")).value({"x": 1.0})

    def test_partial_of_unused_name_is_zero(self):
        f = field("x^2", ("x",))
        assert f.gradient({"x": 1.0, "other": 5.0}, wrt=("x", "other")) == [2.0, 0.0]


PAIRS = [("q1", "p_q1"), ("q2", "p_q2")]
POINT = {"q1": 0.7, "q2": -1.2, "p_q1": 0.4, "p_q2": 2.0}


class TestPoissonBracket:
    def test_canonical_pair(self):
        f = field("q1", ("q1",))
        g = field("p_q1", ("p_q1",))
        assert pt.poisson_bracket(f, g, POINT, PAIRS) == 1.0

    def test_antisymmetry_and_self(self):
        f = field("q1^2*p_q2 + q2", ("q1", "q2", "p_q2"))
        g = field("p_q1*q2 - exp(q1)", ("q1", "q2", "p_q1"))
        ab = pt.poisson_bracket(f, g, POINT, PAIRS)
        ba = pt.poisson_bracket(g, f, POINT, PAIRS)
        assert ab == -ba
        assert pt.poisson_bracket(f, f, POINT, PAIRS) == 0.0

    def test_leibniz_rule(self, rng):
        f = field("q1*p_q2", ("q1", "p_q2"))
        g = field("q2^2 + p_q1", ("q2", "p_q1"))
        h = field("p_q1*p_q2 + q1", ("q1", "p_q1", "p_q2"))
        names = [n for pair in PAIRS for n in pair]

        def fg(env):
            return f.fn(env) * g.fn(env)

        prod = ScalarField(tuple(set(f.names) | set(g.names)), fg)
        for _ in range(10):
            at = {n: rng.uniform(-2, 2) for n in names}
            lhs = pt.poisson_bracket(prod, h, at, PAIRS)
            rhs = (pt.poisson_bracket(f, h, at, PAIRS) * g.value(at)
                   + f.value(at) * pt.poisson_bracket(g, h, at, PAIRS))
            assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)


MOMENTA = ("p_E", "p_S", "p_q1")
PHASE_POINT = {"E": 1.0, "S": 2.0, "q1": -0.5, "p_E": -1.0, "p_S": 3.0, "p_q1": 0.8}


class TestHomogeneity:
    def test_linear_in_momenta_is_euler_exact(self):
        k = field("p_S*exp(q1) + p_q1*S", ("S", "q1", "p_S", "p_q1"))
        assert pt.euler_residual(k, PHASE_POINT, MOMENTA) == 0.0
        assert pt.homogeneity_scale_check(k, PHASE_POINT, MOMENTA) <= 1e-15

    def test_quadratic_counterexample(self):
        k = field("p_S^2", ("p_S",))
        assert pt.euler_residual(k, PHASE_POINT, MOMENTA) == -9.0
        at = dict(PHASE_POINT, p_S=1.0)
        assert pt.homogeneity_scale_check(k, at, MOMENTA, scales=(2.0,)) == \
            pytest.approx(2.0 / 3.0)

    def test_mass_spring_internal(self, mass_spring):
        env = dict(S=0.0, z=1.0, pi_m=2.0, E=3.0, p_E=-1.0, p_S=0.0, p_z=2.0,
                   p_pi_m=2.0)
        momenta = mass_spring.chart.momentum_names
        assert abs(pt.euler_residual(mass_spring.internal, env, momenta)) <= 1e-12

    def test_scale_check_rejects_zero_scale(self):
        k = field("p_S", ("p_S",))
        with pytest.raises(ValueError):
            pt.homogeneity_scale_check(k, PHASE_POINT, MOMENTA, scales=(0.0,))

    def test_euler_iff_scale_check(self, all_bundles, rng):
        # degree-1 internal Hamiltonians pass both; the planted quadratic fails both
        for name in ("mass_spring", "crn", "heat_exchanger"):
            sysm = all_bundles[name].system
            for bb in pt.sample_base(sysm.manifold, rng, 5):
                env = sysm.chart.bindings(pt.lift(sysm.manifold, bb))
                momenta = sysm.chart.momentum_names
                assert abs(pt.euler_residual(sysm.internal, env, momenta)) <= 1e-10
                assert pt.homogeneity_scale_check(sysm.internal, env, momenta) <= 1e-10
        bad = field("p_S^2", ("p_S",))
        assert abs(pt.euler_residual(bad, PHASE_POINT, MOMENTA)) > 0.1
        assert pt.homogeneity_scale_check(bad, PHASE_POINT, MOMENTA) > 0.1
