"""Drift flow, variational equations, the drift semigroup and Gronwall checks."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from semireg.coeffs import CoefficientSystem, as_test_function, builtin
from semireg.drift_flow import (FlowError, apply_T1, check_gronwall, flow, flow_batch,
                                second_order_bound)
from semireg.grid import GridFunction, GridSpec


def relax():
    return CoefficientSystem.from_strings(["-x1"], ["0"])


def logistic(d=1):
    return builtin("logistic-drift", {"c": 1.0}, d)


def logistic_closed(x, t):
    return x * math.exp(t) / (1 - x + x * math.exp(t))


class TestFlow:
    def test_linear_closed_form(self):
        r = flow(relax(), [0.8], 1.0, order=2)
        assert r.y[0] == pytest.approx(0.8 * math.exp(-1), abs=1e-9)
        assert r.jac[0, 0] == pytest.approx(math.exp(-1), abs=1e-9)
        assert r.hess[0, 0, 0] == pytest.approx(0.0, abs=1e-12)

    def test_logistic_closed_form(self):
        r = flow(logistic(), [0.5], 1.0)
        assert r.y[0] == pytest.approx(0.5 * math.e / (0.5 + 0.5 * math.e), abs=1e-9)
        assert r.y[0] == pytest.approx(0.7310585786, abs=1e-9)

    def test_logistic_derivatives(self):
        # dy/dx = e^t / (1 - x + x e^t)^2 and its x-derivative
        x, t = 0.3, 0.7
        r = flow(logistic(), [x], t, order=2)
        e = math.exp(t)
        den = 1 - x + x * e
        assert r.jac[0, 0] == pytest.approx(e / den ** 2, abs=1e-8)
        assert r.hess[0, 0, 0] == pytest.approx(-2 * e * (e - 1) / den ** 3, abs=1e-8)

    def test_zero_drift_identity(self):
        sys = builtin("wright-fisher", dim=3)
        r = flow(sys, [0.1, 0.5, 0.9], 2.0, order=2)
        np.testing.assert_array_equal(r.y, [0.1, 0.5, 0.9])
        np.testing.assert_array_equal(r.jac, np.eye(3))
        assert not r.hess.any()

    def test_t_zero(self):
        r = flow(builtin("migration", {"kappa": 1.0}, 2), [0.2, 0.4], 0.0, order=2)
        np.testing.assert_array_equal(r.y, [0.2, 0.4])
        np.testing.assert_array_equal(r.jac, np.eye(2))
        assert not r.hess.any()

    def test_stays_in_cube(self):
        fb = flow_batch(builtin("logistic-drift", {"c": 5.0}, 2),
                        np.array([[0.0, 1.0], [1.0, 0.5], [0.999, 0.001]]), 3.0)
        assert np.all((fb.y >= 0) & (fb.y <= 1))
        assert fb.clamp.max() <= fb.tol

    def test_step_underflow(self):
        # a stiff relaxation with a tiny step cap triggers the failure path
        stiff = CoefficientSystem.from_strings(["1e9*(0.5-x1)"], ["0"])
        with pytest.raises(FlowError) as exc:
            flow_batch(stiff, [[0.1]], 1.0, tol=1e-12, max_steps=50)
        assert 0.0 <= exc.value.time < 1.0

    @settings(max_examples=20, deadline=None)
    @given(st.floats(0, 1), st.floats(0, 1), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
    def test_semigroup_property(self, x1, x2, s, t):
        sys = builtin("migration", {"kappa": 2.0}, 2)
        tol = 1e-9
        direct = flow(sys, [x1, x2], s + t, tol=tol).y
        mid = flow(sys, [x1, x2], s, tol=tol).y
        two = flow(sys, mid, t, tol=tol).y
        np.testing.assert_allclose(direct, two, atol=2 * tol + 1e-12)

    def test_jacobian_matches_finite_differences(self):
        sys = CoefficientSystem.from_strings(["x2*(1-x1) - x1", "x1*x1*(0.5-x2)"],
                                             ["x1*(1-x1)"] * 2)
        rng = np.random.default_rng(5)
        for _ in range(50):
            x = rng.uniform(0.05, 0.95, 2)
            t = rng.uniform(0.1, 1.0)
            r = flow(sys, x, t, order=1, tol=1e-11)
            for j in range(2):
                e = np.zeros(2)
                e[j] = 1e-5
                fd = (flow(sys, x + e, t, tol=1e-11).y - flow(sys, x - e, t, tol=1e-11).y) / 2e-5
                np.testing.assert_allclose(r.jac[:, j], fd, atol=1e-6)


class TestApplyT1:
    def test_zero_drift(self):
        grid = GridSpec.uniform(2, 9)
        g = apply_T1(builtin("wright-fisher", dim=2), as_test_function("x1*x2^2", 2), 1.0, grid)
        np.testing.assert_allclose(g.values.ravel(), (grid.mesh()[:, 0] * grid.mesh()[:, 1] ** 2))

    def test_linear(self):
        grid = GridSpec.uniform(1, 11)
        g = apply_T1(relax(), as_test_function("x1", 1), 1.0, grid)
        np.testing.assert_allclose(g.values, grid.axis_nodes(0) * math.exp(-1), atol=1e-9)

    def test_halving_time(self):
        grid = GridSpec.uniform(1, 11)
        g = apply_T1(relax(), as_test_function("x1^2", 1), math.log(2), grid)
        np.testing.assert_allclose(g.values, grid.axis_nodes(0) ** 2 / 4, atol=1e-9)

    def test_grid_function_input(self):
        grid = GridSpec.uniform(1, 101)
        f = GridFunction.sample(grid, lambda x: np.cos(3 * x[:, 0]))
        g = apply_T1(logistic(), f, 0.5)
        want = np.cos(3 * np.array([logistic_closed(x, 0.5) for x in grid.axis_nodes(0)]))
        assert np.max(np.abs(g.values - want)) < 1e-3  # multilinear interpolation error

    @settings(max_examples=15, deadline=None)
    @given(st.floats(0, 2), st.integers(1, 3))
    def test_sup_contraction(self, t, k):
        grid = GridSpec.uniform(2, 17)
        f = GridFunction.sample(grid, lambda x: np.sin(k * np.pi * x[:, 0]) * x[:, 1])
        g = apply_T1(builtin("migration", {"kappa": 1.0}, 2), f, t)
        assert g.sup() <= f.sup() * (1 + 1e-12)


class TestGronwall:
    def test_zero_drift(self):
        rep = check_gronwall(builtin("wright-fisher", dim=2), 1.0)
        first, second, _ = rep.entries
        assert first.ratio == 1.0
        assert second.vacuous and second.passed
        assert rep.passed

    def test_relaxation_ratio(self):
        rep = check_gronwall(relax(), 1.0, order=1)
        assert rep.entries[0].ratio == pytest.approx(math.exp(-2), rel=1e-7)

    def test_migration_d8(self):
        rep = check_gronwall(builtin("migration", {"kappa": 1.0}, 8), 0.5, tol=1e-10)
        assert rep.passed and rep.max_ratio <= 1.0

    def test_second_order_bound(self):
        assert second_order_bound(0.0, 1.0) == 0.0
        assert second_order_bound(1.0, 1.0) == pytest.approx(0.5 * (math.e ** 2 - 1) * math.e)

    def test_order_validation(self):
        with pytest.raises(ValueError):
            check_gronwall(relax(), 1.0, order=3)
