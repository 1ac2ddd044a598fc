"""Expression grammar: parsing, evaluation, printing, and robustness."""

import math

import pytest
from hypothesis import given, settings, strategies as st

import portthermo as pt
from portthermo.calculus import DNum
from portthermo.errors import DomainError, EvalError, ParseError
from portthermo.exprlang import (Bin, Call, Neg, Num, Var, contains_min,
                                 evaluate, free_variables, parse, pretty)
from portthermo.rng import Xoshiro256

from conftest import central_diff

CORPUS = [
    "2*3 + 1",
    "0.5*k*z^2 + pi_m^2/(2*m)",
    "x^3",
    "x^2^3",
    "-x^2",
    "2^-3",
    "a - b + c",
    "a - (b + c)",
    "6/3/2",
    "a/(b*c)",
    "(a + b)*c",
    "exp(x)*cos(y) - sin(x*y)",
    "ln(1 + x^2)",
    "sqrt(x^2 + y^2)",
    "pow(x, 3) + pow(2, y)",
    "min(a, b) + 1",
    "-(a + b)^2",
    "- -x",
    "1.5e-3*x + 2.25",
    ".5*q1 + q2^2",
    "cv*ln(E) + R*ln(V)",
    "p_z*pi_m/m - p_pi_m*k*z",
    "p_pi_m + p_E*pi_m/m",
    "x*y*z",
    "x - -y",
    "exp(-(x^2))",
    "1/(1 + exp(-(x)))",
    "a^b^c - a^(b^c)",
    "q_c + 1",
    "0.5*(q_c - 2)^2",
]


class TestParse:
    def test_arithmetic(self):
        assert evaluate(parse("2*3 + 1"), {}) == 7.0

    def test_free_variables_of_spring_energy(self):
        e = parse("0.5*k*z^2 + pi_m^2/(2*m)")
        assert free_variables(e) == {"k", "z", "pi_m", "m"}

    def test_unbalanced_paren_offset(self):
        # 1-based byte offset one past the end of "ln(-1"
        with pytest.raises(ParseError) as err:
            parse("ln(-1")
        assert err.value.offset == 6
        assert '")"' in err.value.expected

    def test_unknown_function(self):
        with pytest.raises(ParseError) as err:
            parse("foo(1)")
        assert err.value.offset == 1
        assert "foo" in err.value.expected

    def test_trailing_garbage(self):
        with pytest.raises(ParseError) as err:
            parse("2 2")
        assert err.value.offset == 3
        assert "end of input" in err.value.expected

    def test_unexpected_character(self):
        with pytest.raises(ParseError) as err:
            parse("1 + $")
        assert err.value.offset == 5

    def test_arity_mismatch(self):
        with pytest.raises(ParseError):
            parse("exp(1, 2)")
        with pytest.raises(ParseError):
            parse("pow(1)")

    def test_invalid_utf8_bytes(self):
        with pytest.raises(ParseError) as err:
            parse(b"1 + \xff")
        assert err.value.offset == 5

    def test_byte_offsets_count_bytes(self):
        # the micro sign is 2 bytes in UTF-8; the error lands after it
        with pytest.raises(ParseError) as err:
            parse("µ + ")
        assert err.value.offset == 6


class TestPrecedence:
    def test_unary_minus_binds_tighter_than_power(self):
        assert evaluate(parse("-x^2"), {"x": 3.0}) == 9.0

    def test_negative_exponent(self):
        assert evaluate(parse("2^-3"), {}) == 0.125

    def test_power_right_associative(self):
        assert evaluate(parse("2^3^2"), {}) == 512.0

    def test_left_associative_sums_and_quotients(self):
        assert evaluate(parse("1 - 2 + 3"), {}) == 2.0
        assert evaluate(parse("6/3/2"), {}) == 1.0

    def test_function_call_beats_unary(self):
        assert evaluate(parse("-exp(0)"), {}) == -1.0

    def test_constants(self):
        assert evaluate(parse("cos(pi)"), {}) == pytest.approx(-1.0)
        assert evaluate(parse("ln(e)"), {}) == pytest.approx(1.0)


class TestEvaluate:
    def test_dual_number_cube(self):
        out = evaluate(parse("x^3"), {"x": DNum(2.0, (1.0,))})
        assert out.v == 8.0
        assert out.d[0] == 12.0

    def test_gas_entropy_value(self):
        val = evaluate(parse("cv*ln(E) + R*ln(V)"),
                       {"cv": 1.5, "R": 1.0, "E": 1.5, "V": 1.0})
        assert val == pytest.approx(1.5 * math.log(1.5), rel=1e-15)

    def test_division_by_zero(self):
        with pytest.raises(DomainError):
            evaluate(parse("1/x"), {"x": 0.0})

    def test_unbound_variable(self):
        with pytest.raises(EvalError):
            evaluate(parse("x + y"), {"x": 1.0})

    def test_negative_base_fractional_power(self):
        with pytest.raises(DomainError):
            evaluate(parse("x^0.5"), {"x": -2.0})

    def test_min_is_detected(self):
        assert contains_min(parse("min(a, b) + 1"))
        assert not contains_min(parse("a + b"))

    def test_free_variables_empty_and_repeated(self):
        assert free_variables(parse("2 + 2")) == set()
        assert free_variables(parse("a*b + a")) == {"a", "b"}


class TestPretty:
    def test_corpus_round_trip_fixed_point(self):
        for text in CORPUS:
            once = pretty(parse(text))
            twice = pretty(parse(once))
            assert once == twice, text
            assert parse(once) == parse(twice)

    def test_parse_pretty_preserves_ast(self):
        for text in CORPUS:
            ast = parse(text)
            assert parse(pretty(ast)) == ast, text

    def test_dual_vs_fd_on_corpus(self):
        bindings = {n: v for n, v in zip(
            "abckmxyz", (0.7, 1.3, 0.9, 2.0, 1.0, 0.4, 0.8, 1.1))}
        bindings.update(pi_m=0.6, p_z=0.3, p_pi_m=0.2, p_E=-1.0, E=1.5, V=2.0,
                        cv=1.5, R=1.0, q1=0.5, q2=0.25, q_c=1.0)
        for text in CORPUS:
            ast = parse(text)
            for name in sorted(free_variables(ast)):
                seeded = dict(bindings)
                seeded[name] = DNum(bindings[name], (1.0,))
                got = evaluate(ast, seeded).d[0]
                ref = central_diff(
                    lambda v: evaluate(ast, dict(bindings, **{name: v})),
                    bindings[name])
                assert got == pytest.approx(ref, rel=1e-6, abs=1e-6), (text, name)


class TestAsField:
    def test_params_are_folded(self):
        f = pt.as_field("k*x", ("x",), params={"k": 2.5})
        assert f.value({"x": 2.0}) == 5.0

    def test_undeclared_names_rejected(self):
        with pytest.raises(EvalError):
            pt.as_field("x + y", ("x",))


class TestFuzz:
    def test_random_byte_strings_never_crash(self):
        rng = Xoshiro256(99)
        for _ in range(1000):
            blob = rng.bytes(rng.randint(0, 24))
            try:
                parse(blob)
            except ParseError as err:
                assert err.offset >= 1
                assert isinstance(err.expected, str)

    @given(st.binary(max_size=40))
    @settings(max_examples=200, deadline=None)
    def test_hypothesis_bytes(self, blob):
        try:
            parse(blob)
        except ParseError as err:
            assert err.offset >= 1
