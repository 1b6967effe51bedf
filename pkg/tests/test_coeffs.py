"""Polynomial parsing, symbolic partials, validation and builtin families."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from semireg.coeffs import (BUILTINS, CosineProduct, PolyExpr, PolySyntaxError, as_test_function,
                            builtin, format_poly, multiindices, named_function, parse_poly,
                            partial, validate, CoefficientSystem)


def dense(p):
    return {k: v for k, v in p.terms.items()}


class TestParse:
    def test_wright_fisher_profile(self):
        p = parse_poly("x1*(1-x1)", 1)
        assert dense(p) == {(1,): 1.0, (2,): -1.0}

    def test_constant(self):
        assert dense(parse_poly("0.5", 2)) == {(0, 0): 0.5}

    def test_mixed_terms(self):
        p = parse_poly("x1*x2 - x1^2*x2", 2)
        assert dense(p) == {(1, 1): 1.0, (2, 1): -1.0}
        # independent term-by-term evaluation
        rng = np.random.default_rng(1)
        for x1, x2 in rng.random((10, 2)):
            assert p([x1, x2]) == pytest.approx(x1 * x2 - x1 ** 2 * x2, abs=1e-15)

    def test_no_zero_terms_stored(self):
        p = parse_poly("x1 - x1 + 2", 1)
        assert dense(p) == {(0,): 2.0}
        assert parse_poly("x1 - x1", 1).is_zero()

    @pytest.mark.parametrize("text, position", [("x1 +", 4), ("x1 ** 2", 4), ("(x1", 3)])
    def test_syntax_error_position(self, text, position):
        with pytest.raises(PolySyntaxError) as exc:
            parse_poly(text, 1)
        assert exc.value.position == position

    @pytest.mark.parametrize("text", ["x3", "x0", "x1^-1", "x1^1.5", "y1"])
    def test_rejected(self, text):
        with pytest.raises(PolySyntaxError):
            parse_poly(text, 2)

    def test_print_parse_fixed_point(self):
        p = parse_poly("3*(x1 - 0.25)^3 * x2 + x2^2 - 1e-3", 2)
        q = parse_poly(format_poly(p), 2)
        assert q == p
        assert format_poly(q) == format_poly(p)


# random polynomials as (exponent vector, coefficient) lists
coef = st.floats(-5, 5, allow_nan=False).filter(lambda c: abs(c) > 1e-6)
mono = st.tuples(st.integers(0, 3), st.integers(0, 3))
polys = st.lists(st.tuples(mono, coef), min_size=1, max_size=6)


def build(items):
    terms = {}
    for e, c in items:
        terms[e] = terms.get(e, 0.0) + c
    return PolyExpr(terms, 2)


@settings(max_examples=60, deadline=None)
@given(polys)
def test_parse_print_idempotent(items):
    p = build(items)
    text = format_poly(p)
    q = parse_poly(text, 2)
    assert format_poly(q) == text
    pts = np.random.default_rng(0).random((5, 2))
    np.testing.assert_allclose(q(pts), p(pts), rtol=1e-12, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(polys, st.integers(1, 2))
def test_partial_matches_central_difference(items, axis):
    p = build(items)
    dp = partial(p, axis)
    rng = np.random.default_rng(3)
    x = rng.uniform(0.1, 0.9, (8, 2))
    e = np.zeros(2)
    e[axis - 1] = 1e-5
    fd = (p(x + e) - p(x - e)) / 2e-5
    np.testing.assert_allclose(dp(x), fd, rtol=1e-6, atol=1e-6)


class TestPartial:
    def test_power_rule(self):
        assert partial(parse_poly("x1*(1-x1)", 1), 1) == parse_poly("1-2*x1", 1)

    def test_constant_vanishes(self):
        assert partial(parse_poly("7", 2), 2).is_zero()

    def test_repeated(self):
        p = parse_poly("x1^2*x2", 2)
        q = partial(partial(partial(p, 1), 1), 2)
        assert dense(q) == {(0, 0): 2.0}

    def test_axis_out_of_range(self):
        with pytest.raises(ValueError):
            partial(parse_poly("x1", 1), 2)


@pytest.mark.parametrize("name, params", [
    ("wright-fisher", {}), ("logistic-drift", {"c": 2.0}), ("migration", {"kappa": 1.5}),
    ("mutation", {"kappa": 1.0, "mbar": 0.3}), ("zero-drift", {"sigma2": 0.5}),
    ("zero-diffusion", {"kappa": 1.0, "mbar": 0.5}),
])
def test_builtin_partials_match_finite_differences(name, params):
    d = 2
    sys = builtin(name, params, d)
    rng = np.random.default_rng(7)
    x = rng.uniform(0.05, 0.95, (100, d))
    h = 1e-5
    for b in sys.drift:
        for alpha in multiindices(d, 3, 1):
            # one-step central difference of the order |alpha|-1 symbolic partial
            j = next(k for k, a in enumerate(alpha) if a)
            lower = list(alpha)
            lower[j] -= 1
            e = np.zeros(d)
            e[j] = h
            fd = (b.derivative(lower)(x + e) - b.derivative(lower)(x - e)) / (2 * h)
            np.testing.assert_allclose(b.derivative(alpha)(x), fd, rtol=1e-6, atol=1e-6)


class TestValidate:
    def test_relaxation_admissible(self):
        sys = CoefficientSystem.from_strings(["-x1"], ["x1*(1-x1)"])
        assert validate(sys).admissible

    def test_outward_drift_witness(self):
        rep = validate(CoefficientSystem.from_strings(["x1"], ["x1*(1-x1)"]))
        assert not rep.admissible
        v, = rep.violations
        assert v.invariant == "drift-inward" and v.witness == (1.0,) and v.value == -1.0

    def test_migration_d2(self):
        assert validate(builtin("migration", {"kappa": 1.0}, 2)).admissible

    def test_sqdiff_endpoint(self):
        rep = validate(CoefficientSystem.from_strings(["0"], ["x1*(1-x1) + 0.1"]))
        kinds = {v.invariant for v in rep.violations}
        assert {"sqdiff-zero-at-0", "sqdiff-zero-at-1"} <= kinds

    def test_interior_negative(self):
        rep = validate(CoefficientSystem.from_strings(["0"], ["x1*(1-x1)*(x1-0.5)"]))
        assert [v.invariant for v in rep.violations] == ["sqdiff-interior-positive"]
        assert rep.violations[0].witness[0] < 0.5

    def test_off_grid_double_root_is_a_sampling_limit(self):
        # positivity is a sampled check: a touching zero between nodes goes unseen
        rep = validate(CoefficientSystem.from_strings(["0"], ["x1*(1-x1)*(x1-0.5)^2"]))
        assert rep.admissible
        assert any("sampled" in n for n in rep.notes)

    def test_nonaffine_face(self):
        # on the face x1 = 0 the drift is x2^2 - 0.25, negative near x2 = 0
        sys = CoefficientSystem.from_strings(["x2^2 - 0.25 - x1", "-x2"], ["x1*(1-x1)"] * 2)
        rep = validate(sys)
        assert not rep.admissible
        assert rep.violations[0].witness[0] == 0.0

    @pytest.mark.parametrize("name", BUILTINS)
    @pytest.mark.parametrize("d", [1, 3, 8])
    def test_builtins_admissible(self, name, d):
        assert validate(builtin(name, None, d)).admissible


class TestBuiltin:
    def test_wright_fisher(self):
        sys = builtin("wright-fisher", dim=3)
        assert all(b.is_zero() for b in sys.drift)
        assert all(a == parse_poly("x1 - x1^2", 1) for a in sys.sqdiff)

    def test_mutation(self):
        sys = builtin("mutation", {"kappa": 1, "mbar": 0.5}, 1)
        assert sys.drift[0] == parse_poly("0.5 - x1", 1)

    def test_migration(self):
        sys = builtin("migration", {"kappa": 2}, 4)
        want = parse_poly("2*(0.25*(x1+x2+x3+x4) - x2)", 4)
        x = np.random.default_rng(0).random((5, 4))
        np.testing.assert_allclose(sys.drift[1](x), want(x), atol=1e-14)

    def test_errors(self):
        with pytest.raises(ValueError, match="unknown builtin"):
            builtin("brownian")
        with pytest.raises(ValueError, match="outside"):
            builtin("mutation", {"mbar": 1.5})
        with pytest.raises(ValueError, match="unexpected"):
            builtin("wright-fisher", {"kappa": 1.0})


class TestTestFunctions:
    def test_cosine_partials(self):
        f = CosineProduct([1, 2], scale=0.5)
        x = np.array([[0.3, 0.6]])
        got = f.derivative((1, 1))(x)
        want = 0.5 * np.pi * np.sin(np.pi * 0.3) * 2 * np.pi * np.sin(2 * np.pi * 0.6)
        assert got[0] == pytest.approx(want, rel=1e-12)

    def test_cosine_sup(self):
        f = named_function("cos-product", 2, scale=2.0)
        assert f.derivative((1, 0)).sup_exact() == pytest.approx(2 * np.pi)

    def test_sin_product(self):
        f = named_function("sin-product", 1)
        assert f(0.25) == pytest.approx(np.sin(np.pi / 4))

    def test_as_test_function(self):
        f = as_test_function("x1*x2", 2)
        assert f.derivative((1, 1))(np.array([0.2, 0.3])) == 1.0
        with pytest.raises(TypeError):
            as_test_function(3.0)

    def test_multiindices(self):
        alphas = multiindices(3, 2)
        assert len(alphas) == 10
        assert len(set(alphas)) == 10
        assert all(sum(a) <= 2 for a in alphas)
        assert multiindices(2, 2, 2) == [(2, 0), (1, 1), (0, 2)]
        brute = {a for a in itertools.product(range(3), repeat=3) if sum(a) <= 2}
        assert set(alphas) == brute
