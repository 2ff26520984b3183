import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gexpect import EvalDomainError, ParseError, eval2, parse, parse_scalar, parse_tri
from gexpect.expr import ScalarFunction, TriFunction

from conftest import fd_derivatives


class TestParse:
    def test_square(self):
        fn = parse_scalar("x^2")
        assert fn(3.0) == 9.0

    def test_exp(self):
        assert parse_scalar("exp(x)")(0.0) == 1.0

    def test_precedence(self):
        assert parse_scalar("1 + 2*x^2")(2.0) == 9.0
        assert parse_scalar("-x^2")(2.0) == -4.0  # unary minus binds below ^
        assert parse_scalar("6 - 2 - 1")(0.0) == 3.0  # left-assoc

    def test_scientific_literals(self):
        assert parse_scalar("2.5e-1 * x")(4.0) == 1.0

    def test_parse_classifies(self):
        assert isinstance(parse("x^2"), ScalarFunction)
        assert isinstance(parse("y + z*t"), TriFunction)
        assert isinstance(parse("3.0"), ScalarFunction)

    def test_syntax_error_offset(self):
        with pytest.raises(ParseError) as err:
            parse_scalar("2*")
        assert err.value.offset == 2

    @pytest.mark.parametrize(
        "text",
        ["", "   ", "2*", "x +", "(x", "x)", "x^0.5", "x^x", "foo(x)", "exp(x, 1)", "exp()", "1..2"],
    )
    def test_malformed_rejected(self, text):
        with pytest.raises(ParseError):
            parse_scalar(text)

    def test_unknown_identifier(self):
        with pytest.raises(ParseError, match="unknown identifier"):
            parse_scalar("x + y")
        with pytest.raises(ParseError, match="unknown identifier"):
            parse_tri("y + q")

    def test_negative_integer_power(self):
        fn = parse_scalar("x^(-2)")
        assert fn(2.0) == 0.25
        with pytest.raises(EvalDomainError):
            fn(0.0)


class TestRoundTrip:
    CASES = [
        "x^2 - 3*x + 1/(x + 4)",
        "-x^2",
        "-(x^2)",
        "exp(tanh(x)) * (1 - bump(x))",
        "x^(-2)",
        "2e-3*x",
        "((x))",
        "1 - 2 - 3",
        "2/(3/x)",
        "(x^2)^3",
        "abs_smooth(x - 1)",
    ]

    @pytest.mark.parametrize("text", CASES)
    def test_print_parse_idempotent(self, text):
        first = parse_scalar(text)
        second = parse_scalar(first.to_string())
        assert first.ast == second.ast
        assert second.to_string() == first.to_string()

    @given(st.recursive(
        st.one_of(
            st.just("x"),
            st.floats(min_value=0.0, max_value=100.0, allow_nan=False).map(lambda v: format(v, ".6g")),
        ),
        lambda sub: st.one_of(
            st.tuples(st.sampled_from("+-*/"), sub, sub).map(lambda t: f"({t[1]} {t[0]} {t[2]})"),
            st.tuples(st.sampled_from(["exp", "tanh", "sin", "cos"]), sub).map(lambda t: f"{t[0]}({t[1]})"),
            sub.map(lambda s: f"-({s})"),
            st.tuples(sub, st.integers(min_value=0, max_value=4)).map(lambda t: f"({t[0]})^{t[1]}"),
        ),
        max_leaves=12,
    ))
    def test_random_expressions_round_trip(self, text):
        fn = parse_scalar(text)
        again = parse_scalar(fn.to_string())
        assert fn.ast == again.ast


class TestEval2:
    def test_polynomial_jet(self):
        assert eval2(parse_scalar("x^2"), 3.0) == (9.0, 6.0, 2.0)

    def test_exp_jet(self):
        assert eval2(parse_scalar("exp(x)"), 0.0) == (1.0, 1.0, 1.0)

    def test_tanh_matches_finite_differences(self):
        fn = parse_scalar("tanh(x)")
        _, d1, d2 = eval2(fn, 0.5)
        fd1, fd2 = fd_derivatives(fn, 0.5)
        assert abs(d1 - fd1) <= 1e-6
        assert abs(d2 - fd2) <= 1e-6

    def test_sqrt_domain(self):
        fn = parse_scalar("sqrt(x)")
        with pytest.raises(EvalDomainError):
            fn.eval2(-1.0)

    # window keeps clear of the isolated non-smooth spots (abs kink, bump seams)
    FD_CASES = [
        ("x", (-3, 3)),
        ("x^2", (-3, 3)),
        ("-(x^2)", (-3, 3)),
        ("x^3", (-3, 3)),
        ("x^4", (-3, 3)),
        ("tanh(x)", (-3, 3)),
        ("exp(tanh(x))", (-3, 3)),
        ("sin(x)", (-3, 3)),
        ("cos(x)", (-3, 3)),
        ("exp(x)", (-2, 2)),
        ("sqrt(1 + x^2)", (-3, 3)),
        ("abs_smooth(x)", (0.1, 3)),
        ("(1 + x^2)/(2 + sin(x))", (-3, 3)),
        ("x^(-2)", (0.5, 3)),
        ("bump(x)", (-0.95, 0.95)),
        ("bump(x)", (1.1, 1.9)),
    ]

    @pytest.mark.parametrize("text,window", FD_CASES)
    def test_jets_match_finite_differences(self, text, window):
        fn = parse_scalar(text)
        rng = np.random.default_rng(hash(text + str(window)) % 2**32)
        for x in rng.uniform(window[0], window[1], 100):
            _, d1, d2 = fn.eval2(float(x))
            fd1, fd2 = fd_derivatives(fn, float(x))
            assert abs(d1 - fd1) <= 1e-6 * (1.0 + abs(d1))
            assert abs(d2 - fd2) <= 1e-4 * (1.0 + abs(d2))


class TestBuiltins:
    def test_abs_smooth_near_abs(self):
        fn = parse_scalar("abs_smooth(x)")
        assert fn(3.0) == pytest.approx(3.0, abs=1e-8)
        assert fn(-3.0) == pytest.approx(3.0, abs=1e-8)
        v, d1, d2 = fn.eval2(2.0)
        assert d1 == pytest.approx(1.0, abs=1e-9)
        assert d2 == pytest.approx(0.0, abs=1e-9)

    def test_bump_plateau_and_support(self):
        fn = parse_scalar("bump(x)")
        assert fn(0.0) == 1.0
        assert fn(0.99) == 1.0
        assert fn(2.0) == 0.0
        assert fn(5.0) == 0.0
        assert 0.0 < fn(1.5) < 1.0
        assert fn.eval2(0.0) == (1.0, 0.0, 0.0)

    def test_bump_is_c2_at_seams(self):
        fn = parse_scalar("bump(x)")
        for seam in (1.0, -1.0, 2.0, -2.0):
            below = fn.eval2(seam - 1e-9)
            above = fn.eval2(seam + 1e-9)
            for lo, hi in zip(below, above):
                assert abs(hi - lo) < 1e-6

    def test_vectorized_matches_scalar(self):
        fn = parse_scalar("exp(tanh(x)) * bump(x) - abs_smooth(x)")
        xs = np.linspace(-3, 3, 41)
        vec = fn(xs)
        assert vec.shape == xs.shape
        for x, v in zip(xs, vec):
            assert v == pytest.approx(fn(float(x)), rel=1e-15, abs=1e-15)


class TestCombinators:
    def test_compose(self):
        h = parse_scalar("exp(x)")
        phi = parse_scalar("tanh(x)")
        both = h.compose(phi)
        assert both(0.7) == pytest.approx(math.exp(math.tanh(0.7)))

    def test_add_scale_shift(self):
        f = parse_scalar("x^2")
        g = parse_scalar("sin(x)")
        assert (f + g)(2.0) == pytest.approx(4.0 + math.sin(2.0))
        assert f.scale(3.0)(2.0) == 12.0
        assert f.shift(-1.0)(2.0) == 3.0


class TestTriFunction:
    def test_eval(self):
        fn = parse_tri("t + 2*y - z")
        assert fn(1.0, 2.0, 3.0) == 2.0

    def test_vectorized_broadcast(self):
        fn = parse_tri("y + z")
        out = fn(0.0, np.arange(3.0), 1.0)
        assert np.allclose(out, [1.0, 2.0, 3.0])

    def test_difference_quotient_linear(self):
        fn = parse_tri("0.25*y + 0.5*z")
        assert fn.max_difference_quotient() <= 0.5 + 1e-9

    def test_difference_quotient_constant(self):
        assert parse_tri("3").max_difference_quotient() == 0.0
