"""Tensor grids, grid functions and the coordinatewise diffusion semigroup."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from semireg.coeffs import CoefficientSystem, as_test_function, builtin, named_function
from semireg.diffusion1d import Propagator1D, propagate_1d
from semireg.grid import (GridDimensionError, GridFunction, GridSpec, derivative_matrix,
                          discrete_partial, outer, sample_function)
from semireg.noise import NoiseStream
from semireg.tensor_diffusion import (T2Operator, apply_T2_grid, check_mu_bound,
                                      simulate_nd_diffusion)

WF2 = builtin("wright-fisher", dim=2)


class TestGrid:
    def test_spec(self):
        g = GridSpec((3, 5))
        assert g.size == 15 and g.shape == (3, 5)
        m = g.mesh()
        assert m.shape == (15, 2) and tuple(m[1]) == (0.0, 0.25)

    def test_dimension_cap(self):
        with pytest.raises(GridDimensionError):
            GridSpec.uniform(5, 3)

    @pytest.mark.parametrize("order, degree", [(1, 2), (2, 3), (3, 3)])
    def test_stencils_exact_on_low_degree(self, order, degree):
        # second-order stencils: exact up to degree order + 1 (and +2 for even central)
        x = np.linspace(0, 1, 21)
        p = 2 * x ** degree - x ** 2 + 0.5 * x
        dp = {1: 2 * degree * x ** (degree - 1) - 2 * x + 0.5,
              2: 2 * degree * (degree - 1) * x ** (degree - 2) - 2,
              3: np.full_like(x, 12.0)}[order]
        np.testing.assert_allclose(derivative_matrix(21, order) @ p, dp, atol=1e-8)

    def test_second_order_accuracy(self):
        errs = []
        for n in (41, 81):
            x = np.linspace(0, 1, n)
            errs.append(np.max(np.abs(derivative_matrix(n, 3) @ np.sin(3 * x) + 27 * np.cos(3 * x))))
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.15)

    def test_mixed_partial(self):
        spec = GridSpec.uniform(2, 11)
        f = GridFunction.sample(spec, as_test_function("x1^2*x2", 2))
        np.testing.assert_allclose(discrete_partial(f.values, (1, 1)),
                                   2 * spec.mesh()[:, 0].reshape(11, 11), atol=1e-12)

    def test_interpolation(self):
        spec = GridSpec.uniform(2, 9)
        f = as_test_function("x1^3 - x1*x2^2 + 0.3", 2)
        pts = np.random.default_rng(0).random((20, 2))
        lin = GridFunction.sample(spec, f)
        cub = GridFunction.sample(spec, f, "cubic")
        np.testing.assert_allclose(cub(pts), f(pts), atol=1e-12)
        assert np.max(np.abs(lin(pts) - f(pts))) < 0.05
        # multilinear interpolation reproduces nodes and multilinear functions
        bil = GridFunction.sample(spec, as_test_function("x1*x2 - x2", 2))
        np.testing.assert_allclose(bil(pts), pts[:, 0] * pts[:, 1] - pts[:, 1], atol=1e-14)

    def test_validation(self):
        spec = GridSpec.uniform(1, 5)
        with pytest.raises(ValueError):
            GridFunction(spec, np.ones(4))
        with pytest.raises(ValueError):
            GridFunction(spec, [0, 1, np.nan, 0, 0])

    def test_csv_dump(self, tmp_path):
        g = GridFunction(GridSpec((2, 2)), [[0.1, 0.2], [0.3, 1 / 3]])
        g.to_csv(tmp_path / "g.csv")
        lines = (tmp_path / "g.csv").read_text().splitlines()
        assert lines[0] == "index,value" and lines[4] == f"3,{1 / 3!r}"


class TestApplyT2:
    def test_product_of_coordinates(self):
        spec = GridSpec.uniform(2, 41)
        g = apply_T2_grid(WF2, as_test_function("x1*x2", 2), 1.0, spec)
        m = spec.mesh()
        np.testing.assert_allclose(g.values.ravel(), m[:, 0] * m[:, 1], atol=1e-12)

    def test_square_closed_form(self):
        spec = GridSpec.uniform(2, 401)
        g = apply_T2_grid(WF2, as_test_function("x1^2", 2), 1.0, spec)
        x1 = spec.mesh()[:, 0]
        want = x1 ** 2 * math.exp(-1) + x1 * (1 - math.exp(-1))
        assert np.max(np.abs(g.values.ravel() - want)) <= 1e-4

    def test_constant(self):
        spec = GridSpec.uniform(3, 9)
        g = apply_T2_grid(builtin("wright-fisher", dim=3), as_test_function("2", 3), 0.4, spec)
        np.testing.assert_allclose(g.values, 2.0, atol=1e-13)

    def test_outer_product_factorization(self):
        sys = CoefficientSystem.from_strings(["0", "0"], ["x1*(1-x1)", "x1^2*(1-x1)^2"])
        spec = GridSpec((61, 41))
        phis = [lambda x: np.cos(2 * x), lambda x: x ** 3 - x]
        vals = outer([phis[0](spec.axis_nodes(0)), phis[1](spec.axis_nodes(1))])
        g = apply_T2_grid(sys, GridFunction(spec, vals), 0.6)
        one_d = [propagate_1d(Propagator1D(a, n - 1), phi, 0.6)
                 for a, n, phi in zip(sys.sqdiff, spec.points, phis)]
        np.testing.assert_allclose(g.values, outer(one_d), atol=1e-10)

    def test_axis_order_independent(self):
        spec = GridSpec((31, 25, 9))
        sys = builtin("zero-drift", {"sigma2": 0.7}, 3)
        vals = np.random.default_rng(1).random(spec.shape)
        op = T2Operator(sys, spec)
        a = op.apply(vals, 0.5, (0, 1, 2))
        b = op.apply(vals, 0.5, (2, 0, 1))
        np.testing.assert_allclose(a, b, atol=1e-12)

    @settings(max_examples=15, deadline=None)
    @given(st.floats(0.0, 2.0), st.integers(1, 4))
    def test_sup_nonincreasing(self, t, k):
        spec = GridSpec.uniform(2, 21)
        f = sample_function(spec, named_function("cos-product", 2, k=k))
        g = apply_T2_grid(WF2, f, t)
        assert g.sup() <= f.sup() * (1 + 1e-12)

    def test_too_many_dimensions(self):
        with pytest.raises(GridDimensionError):
            apply_T2_grid(builtin("wright-fisher", dim=5), as_test_function("x1", 5), 1.0,
                          GridSpec.uniform(4, 3))

    def test_grid_vs_monte_carlo(self):
        spec = GridSpec.uniform(2, 101)
        f = named_function("cos-product", 2)
        g = apply_T2_grid(WF2, f, 0.5, spec)
        from semireg.semigroup import mc_estimate
        for x in [(0.5, 0.5), (0.2, 0.7), (0.9, 0.1), (0.35, 0.35), (0.6, 0.8)]:
            v, se = mc_estimate(WF2, f, x, 0.5, 2e-3, 20_000, NoiseStream(5))
            assert abs(g(np.array(x)) - v) <= 3 * se + 1e-3


class TestMuBound:
    @pytest.mark.parametrize("m", [0, 1, 2, 3])
    def test_battery(self, m):
        fs = [as_test_function(s, 2) for s in ("x1^2*x2^2", "x1^3 - x2", "x1*x2*(1-x1)")]
        fs.append(named_function("cos-product", 2))
        rep = check_mu_bound(WF2, fs, 0.5, m, GridSpec.uniform(2, 101))
        assert rep.passed, rep.summary()


class TestNdSimulation:
    def test_independent_marginals(self):
        ens = simulate_nd_diffusion(builtin("wright-fisher", dim=3), [0.5, 0.5, 0.5], 1.0, 0.01,
                                    20_000, NoiseStream(9))
        mean, se = ens.mean()
        assert np.all(np.abs(mean - 0.5) <= 3 * se)
        cov, cse = ens.covariance()
        off = ~np.eye(3, dtype=bool)
        assert np.all(np.abs(cov[off]) <= 3 * cse[off])
        m, s = ens.mean(lambda y: y.prod(axis=1))
        assert abs(m - 0.125) <= 3 * s

    def test_drift_ignored(self):
        sys = builtin("migration", {"kappa": 5.0}, 2)
        a = simulate_nd_diffusion(sys, [0.1, 0.9], 0.5, 0.05, 100, NoiseStream(2)).paths
        b = simulate_nd_diffusion(WF2, [0.1, 0.9], 0.5, 0.05, 100, NoiseStream(2)).paths
        np.testing.assert_array_equal(a, b)
