"""
Tests for the asymptotic checks.

    - the mean value expansion residual is O(r^2)
    - (1-s) L u and M^s_r u converge to their local limits as s -> 1
    - the H^s_a seminorm matches the Fourier closed form for Gaussians
    - (1-s)[u]^2_{H^s_a} approaches [u]^2_{H^1_a} (BBM) with a uniform bound
"""
import math

import numpy as np
import pytest
from pytest import approx
from scipy import special

from services.asymptotics import (
    bbm_check,
    energy,
    expansion_residual,
    fit_expansion_order,
    h1_norm,
    h1_seminorm,
    hs_seminorm,
    l2_norm,
    local_limit_mean,
    local_limit_operator,
    spherical_average,
    uniform_bound,
)
from services.errors import BadParameter, ResidualUnderflow, UnboundedSupport
from services.funcs import builtin, linear_combination
from services.measure import atomic_measure, uniform_measure
from services.operator import operator_constant_closed_form
from services.quadrature import QuadratureSpec

S_TO_ONE = [0.9, 0.99, 0.999, 0.9999]
BBM_LADDER = [0.55, 0.65, 0.75, 0.85, 0.95, 0.99]


def _cross():
    return atomic_measure([([1, 0], 1.0), ([-1, 0], 1.0), ([0, 1], 1.0), ([0, -1], 1.0)])


def _line_pair():
    return atomic_measure([([1.0, 0.0], 1.0), ([-1.0, 0.0], 1.0)])


def _axis_pair_1d():
    return atomic_measure([([1.0], 1.0), ([-1.0], 1.0)])


def _gaussian_seminorm_1d(s):
    # [exp(-x^2/2)]^2 for the atoms {+-1} from Plancherel
    return 4.0 * operator_constant_closed_form(s) * special.gamma(s + 0.5)


class TestExpansion:
    @pytest.mark.parametrize("measure", [uniform_measure(2), _cross()])
    def test_gaussian_order(self, measure):
        u = builtin("gaussian", dimension=2, width=0.8)
        fit = fit_expansion_order(u, [0.1, -0.05], 0.5, measure)
        assert fit.passed and not fit.vacuous
        assert fit.slope >= 1.9

    @pytest.mark.slow
    @pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
    @pytest.mark.parametrize("name,params", [("gaussian", {}), ("bump", {"radius": 1.5})])
    @pytest.mark.parametrize("measure", [uniform_measure(2), _cross()])
    def test_catalog_order(self, s, name, params, measure):
        u = builtin(name, dimension=2, **params)
        fit = fit_expansion_order(u, [0.0, 0.0], s, measure)
        assert fit.slope >= 1.9

    def test_residuals_shrink(self):
        u = builtin("gaussian", dimension=1)
        fit = fit_expansion_order(u, [0.2], 0.5, _axis_pair_1d())
        magnitudes = np.abs(fit.residuals)
        assert np.all(np.diff(magnitudes) < 0)

    def test_constant_is_vacuous(self):
        u = builtin("constant", dimension=2)
        fit = fit_expansion_order(u, [0.0, 0.0], 0.5, _cross())
        assert fit.vacuous and fit.passed

    def test_constant_strict(self):
        u = builtin("constant", dimension=2)
        with pytest.raises(ResidualUnderflow):
            fit_expansion_order(u, [0.0, 0.0], 0.5, _cross(), strict=True)

    def test_linear_residual_vanishes(self):
        u = builtin("linear", dimension=2, slope=[1.0, 0.5])
        assert expansion_residual(u, [0.2, 0.3], 0.1, 0.4, _cross()) == approx(0.0, abs=1e-6)

    def test_ladder_must_decrease(self):
        u = builtin("gaussian", dimension=2)
        with pytest.raises(BadParameter):
            fit_expansion_order(u, [0.0, 0.0], 0.5, _cross(), ladder=[0.01, 0.1])


class TestLocalLimits:
    def test_operator_uniform_circle(self):
        u = builtin("gaussian", dimension=2)
        report = local_limit_operator(u, [0.0, 0.0], uniform_measure(2), S_TO_ONE)
        assert report.extras["target"] == approx(math.pi)
        errors = [row.abs_err for row in report.rows]
        assert all(b < a for a, b in zip(errors, errors[1:]))
        assert report.final_rel_err <= 1e-2
        assert report.passed

    def test_operator_line_pair(self):
        u = builtin("gaussian", dimension=2)
        report = local_limit_operator(u, [0.0, 0.0], _line_pair(), S_TO_ONE)
        assert report.extras["target"] == approx(1.0)
        assert report.passed

    def test_target_ignores_linear_part(self):
        u = builtin("gaussian", dimension=2)
        v = linear_combination([(1.0, u), (1.0, builtin("linear", dimension=2, slope=[0.3, -0.7]))])
        a = local_limit_operator(u, [0.2, 0.1], _cross(), [0.9])
        b = local_limit_operator(v, [0.2, 0.1], _cross(), [0.9])
        assert b.extras["target"] == approx(a.extras["target"])

    def test_mean_uniform_circle(self):
        u = builtin("gaussian", dimension=2)
        report = local_limit_mean(u, [0.0, 0.0], 0.5, uniform_measure(2), S_TO_ONE)
        assert report.extras["target"] == approx(math.exp(-0.125), rel=1e-12)
        assert report.final_rel_err <= 1e-2

    def test_spherical_average_of_linear(self):
        u = builtin("linear", dimension=2, slope=[2.0, 1.0], offset=0.5)
        x = np.array([0.3, 0.4])
        assert spherical_average(u, x, 0.7, _cross()) == approx(float(u.value(x)))

    def test_report_rows(self):
        u = builtin("gaussian", dimension=2)
        report = local_limit_operator(u, [0.0, 0.0], _cross(), [0.9, 0.99])
        rows = report.to_rows()
        assert len(rows) == 2 and len(rows[0]) == 5
        assert rows[0][0] == 0.9


class TestSeminorms:
    @pytest.mark.parametrize("s", [0.3, 0.5, 0.8])
    def test_gaussian_fourier_oracle(self, s):
        u = builtin("gaussian", dimension=1)
        result = hs_seminorm(u, s, _axis_pair_1d())
        assert result.squared == approx(_gaussian_seminorm_1d(s), rel=1e-7)
        assert result.method == "tensor-quadrature"
        assert result.value == approx(math.sqrt(result.squared))

    @pytest.mark.slow
    def test_cross_measure_separates(self):
        s = 0.5
        u = builtin("gaussian", dimension=2)
        quad = QuadratureSpec.from_defaults(grid_spacing=0.1)
        result = hs_seminorm(u, s, _cross(), quad=quad)
        # each axis sees the 1-D seminorm times the L2 mass sqrt(pi) of the other factor
        assert result.squared == approx(2.0 * math.sqrt(math.pi) * _gaussian_seminorm_1d(s), rel=1e-6)

    @pytest.mark.slow
    def test_monte_carlo_agrees(self):
        s = 0.5
        u = builtin("gaussian", dimension=1)
        exact = _gaussian_seminorm_1d(s)
        result = hs_seminorm(u, s, _axis_pair_1d(), method="monte-carlo", samples=200000, seed=3)
        assert result.method == "monte-carlo"
        assert abs(result.squared - exact) <= 4.0 * result.error_estimate

    def test_monte_carlo_is_reproducible(self):
        u = builtin("bump", dimension=1)
        a = hs_seminorm(u, 0.4, _axis_pair_1d(), method="monte-carlo", samples=1000, seed=8)
        b = hs_seminorm(u, 0.4, _axis_pair_1d(), method="monte-carlo", samples=1000, seed=8)
        assert a.squared == b.squared

    def test_unbounded_support(self):
        u = builtin("plane-wave-cos", dimension=1)
        with pytest.raises(UnboundedSupport):
            hs_seminorm(u, 0.5, _axis_pair_1d())

    def test_unknown_method(self):
        with pytest.raises(BadParameter):
            hs_seminorm(builtin("gaussian"), 0.5, _axis_pair_1d(), method="sparse-grid")

    def test_h1_gaussian(self):
        u = builtin("gaussian", dimension=1)
        assert h1_seminorm(u, _axis_pair_1d()).squared == approx(math.sqrt(math.pi), rel=1e-10)

    def test_l2_gaussian(self):
        u = builtin("gaussian", dimension=1)
        assert l2_norm(u) == approx(math.pi ** 0.25, rel=1e-10)
        assert h1_norm(u, _axis_pair_1d()) == approx(2.0 * math.pi ** 0.25, rel=1e-9)

    def test_energy_is_quarter_square(self):
        u = builtin("gaussian", dimension=1)
        assert energy(u, 0.5, _axis_pair_1d()) == approx(_gaussian_seminorm_1d(0.5) / 4.0, rel=1e-7)

    def test_seminorm_scales_quadratically(self):
        u = builtin("bump", dimension=1, radius=1.0)
        v = builtin("bump", dimension=1, radius=1.0, amplitude=3.0)
        a = hs_seminorm(u, 0.5, _axis_pair_1d()).squared
        b = hs_seminorm(v, 0.5, _axis_pair_1d()).squared
        assert b == approx(9.0 * a, rel=1e-10)


class TestBBM:
    @pytest.mark.slow
    def test_gaussian_limit(self):
        u = builtin("gaussian", dimension=1)
        report = bbm_check(u, _axis_pair_1d(), BBM_LADDER)
        assert report.extras["target"] == approx(math.sqrt(math.pi), rel=1e-10)
        assert report.rows[-1].rel_err <= 2e-2
        errors = [row.abs_err for row in report.rows]
        assert all(b < a for a, b in zip(errors, errors[1:]))
        assert report.passed

    def test_ladder_values_follow_closed_form(self):
        u = builtin("gaussian", dimension=1)
        report = bbm_check(u, _axis_pair_1d(), [0.75, 0.95])
        for row in report.rows:
            expected = (1.0 - row.ladder) * _gaussian_seminorm_1d(row.ladder)
            assert row.computed == approx(expected, rel=1e-7)

    @pytest.mark.slow
    @pytest.mark.parametrize("name,params", [("gaussian", {}), ("bump", {"radius": 1.0})])
    def test_uniform_bound(self, name, params):
        u = builtin(name, dimension=1, **params)
        grid = [0.55, 0.65, 0.75, 0.85, 0.95]
        result = uniform_bound(u, _axis_pair_1d(), grid)
        assert len(result["ratios"]) == len(grid)
        assert result["constant"] == max(result["ratios"])
        assert 0.0 < result["constant"] < 10.0

    def test_uniform_bound_skips_orders_outside_range(self):
        u = builtin("gaussian", dimension=1)
        result = uniform_bound(u, _axis_pair_1d(), [0.3, 0.75])
        assert result["s"] == [0.75]
