"""
Tests for the nonlocal operator L.

    - the constant K(s) from 1-D quadrature agrees with the closed form
    - plane waves are eigenfunctions with eigenvalue psi(k)
    - Gaussians match the radial closed form 2^{-s} Gamma(1-s) / s per direction
    - translation, dilation and linearity behave as the kernel dictates
"""
import logging
import math

import numpy as np
import pytest
from pytest import approx
from scipy import special

from services.errors import BadParameter, DimensionMismatch, NotC2AtPoint
from services.funcs import builtin, linear_combination
from services.measure import atomic_measure, uniform_measure
from services.operator import (
    eval_operator,
    operator_constant,
    operator_constant_closed_form,
    second_difference,
    symbol,
)
from services.quadrature import QuadratureSpec


def _cross():
    return atomic_measure([([1, 0], 1.0), ([-1, 0], 1.0), ([0, 1], 1.0), ([0, -1], 1.0)])


def _skewed():
    c, d = math.cos(0.4), math.sin(0.4)
    return atomic_measure([([c, d], 2.0), ([-c, -d], 2.0), ([0.0, 1.0], 0.5)])


def _axis_pair_1d():
    return atomic_measure([([1.0], 1.0), ([-1.0], 1.0)])


def _gaussian_radial(s):
    # int_0^inf (2 - 2 exp(-rho^2/2)) rho^{-1-2s} d rho
    return 2.0 ** (-s) * special.gamma(1.0 - s) / s


class TestConstant:
    def test_half_is_pi(self):
        assert operator_constant(0.5) == approx(math.pi, abs=1e-10)

    @pytest.mark.parametrize("s", [0.1, 0.3, 0.5, 0.7, 0.9])
    def test_matches_closed_form(self, s):
        assert operator_constant(s) == approx(operator_constant_closed_form(s), rel=1e-9)

    @pytest.mark.parametrize("s", [0.0, 1.0, -0.2])
    def test_rejects_order(self, s):
        with pytest.raises(BadParameter):
            operator_constant(s)


class TestSecondDifference:
    def test_linear_vanishes(self):
        u = builtin("linear", dimension=2, slope=[1.0, -2.0], offset=0.5)
        assert second_difference(u, [0.3, 0.1], [0.7, 0.2]) == approx(0.0, abs=1e-14)

    def test_quadratic(self):
        u = builtin("cutoff-quadratic", dimension=1, radius=100.0)
        # u ~ x^2/2 near the origin up to the cutoff factor
        expected = 2.0 * float(u.value(np.array([0.0]))) - float(u.value(np.array([-0.1]))) \
            - float(u.value(np.array([0.1])))
        assert second_difference(u, [0.0], [0.1]) == approx(expected)


class TestSymbol:
    @pytest.mark.parametrize("s", [0.3, 0.5, 0.7])
    @pytest.mark.parametrize("measure", [_cross(), _skewed()])
    def test_plane_wave_eigenvalue(self, s, measure):
        k = [1.0, 0.5]
        u = builtin("plane-wave-cos", dimension=2, k=k)
        result = eval_operator(u, [0.0, 0.0], s, measure)
        expected = symbol(k, s, measure)
        assert abs(result.value - expected) <= max(1e-8, 3.0 * result.error_estimate)
        assert result.pieces["tail_strategy"] == "oscillatory"

    def test_plane_wave_off_origin(self):
        s, k = 0.5, [0.8, -0.3]
        u = builtin("plane-wave-cos", dimension=2, k=k, phase=0.2)
        x = np.array([0.4, 1.1])
        result = eval_operator(u, x, s, _cross())
        expected = symbol(k, s, _cross()) * float(u.value(x))
        assert result.value == approx(expected, abs=1e-8)

    def test_uniform_circle_consistent(self):
        s, k = 0.5, [1.0, 0.0]
        u = builtin("plane-wave-cos", dimension=2, k=k)
        result = eval_operator(u, [0.0, 0.0], s, uniform_measure(2))
        # the reported value comes from the refined direction rule
        fine = QuadratureSpec.from_defaults().refined()
        assert result.value == approx(symbol(k, s, uniform_measure(2), fine), rel=1e-8)

    def test_symbol_one_dimension(self):
        mu = _axis_pair_1d()
        assert symbol([2.0], 0.5, mu) == approx(operator_constant(0.5) * 4.0)


class TestGaussian:
    @pytest.mark.parametrize("s", [0.2, 0.5, 0.8])
    def test_one_dimension(self, s):
        u = builtin("gaussian", dimension=1)
        result = eval_operator(u, [0.0], s, _axis_pair_1d())
        assert result.value == approx(2.0 * _gaussian_radial(s), rel=1e-9)
        assert result.error_estimate < 1e-6

    def test_uniform_circle(self):
        s = 0.5
        u = builtin("gaussian", dimension=2)
        result = eval_operator(u, [0.0, 0.0], s, uniform_measure(2))
        assert result.value == approx(2.0 * math.pi * _gaussian_radial(s), rel=1e-9)

    def test_translation_invariance(self):
        s = 0.4
        u = builtin("gaussian", dimension=2, width=0.8)
        z = np.array([0.7, -0.3])
        x = np.array([0.2, 0.1])
        a = eval_operator(u, x, s, _skewed()).value
        b = eval_operator(u.shifted(z), x + z, s, _skewed()).value
        assert b == approx(a, rel=1e-10)

    def test_dilation(self):
        s, lam = 0.6, 2.0
        u = builtin("gaussian", dimension=2)
        x = np.array([0.1, 0.2])
        lhs = eval_operator(u.dilated(lam), x, s, _cross()).value
        rhs = lam ** (2.0 * s) * eval_operator(u, lam * x, s, _cross()).value
        assert lhs == approx(rhs, rel=1e-8)

    def test_linearity(self):
        s = 0.5
        u = builtin("gaussian", dimension=2, width=0.6)
        v = builtin("bump", dimension=2, radius=1.5)
        x = [0.1, -0.2]
        combined = eval_operator(linear_combination([(2.0, u), (-3.0, v)]), x, s, _cross())
        separate = 2.0 * eval_operator(u, x, s, _cross()).value - 3.0 * eval_operator(v, x, s, _cross()).value
        assert combined.value == approx(separate, rel=1e-9, abs=1e-9)


class TestTrivialFunctions:
    def test_constant_is_annihilated(self):
        u = builtin("constant", dimension=2, value=4.0)
        result = eval_operator(u, [1.0, 2.0], 0.5, _cross())
        assert result.value == 0.0
        assert result.pieces["tail_strategy"] == "mapped"

    def test_linear_is_annihilated(self):
        u = builtin("linear", dimension=2, slope=[1.0, 2.0])
        result = eval_operator(u, [0.5, -0.5], 0.3, _skewed())
        assert result.value == approx(0.0, abs=1e-8)

    def test_bump_far_away_is_negative(self):
        # u(x) = 0 here, so only -int (u(x+y) + u(x-y)) |y|^{-1-2s} remains
        u = builtin("bump", dimension=1, radius=0.5)
        result = eval_operator(u, [2.0], 0.5, _axis_pair_1d())
        assert result.value < 0.0


class TestTailCap:
    def test_capped_tail_within_bound(self):
        s = 0.5
        u = builtin("gaussian", dimension=1)
        full = eval_operator(u, [0.0], s, _axis_pair_1d())
        capped = eval_operator(u, [0.0], s, _axis_pair_1d(), tail_cap=50.0)
        assert capped.pieces["truncation_bound"] > 0.0
        assert abs(capped.value - full.value) <= capped.pieces["truncation_bound"]
        assert capped.pieces["tail_strategy"] == "capped"

    def test_cap_below_split_radius(self):
        u = builtin("gaussian", dimension=1)
        with pytest.raises(BadParameter):
            eval_operator(u, [0.0], 0.5, _axis_pair_1d(), tail_cap=0.5)

    def test_split_radius_does_not_matter(self):
        u = builtin("gaussian", dimension=1)
        a = eval_operator(u, [0.3], 0.5, _axis_pair_1d(), split_radius=0.5).value
        b = eval_operator(u, [0.3], 0.5, _axis_pair_1d(), split_radius=2.0).value
        assert a == approx(b, rel=1e-9)


class TestErrors:
    def test_not_c2(self):
        u = builtin("indicator", dimension=1, lower=1.0, upper=2.0)
        with pytest.raises(NotC2AtPoint):
            eval_operator(u, [0.0], 0.5, _axis_pair_1d())

    def test_dimension_mismatch(self):
        u = builtin("gaussian", dimension=2)
        with pytest.raises(DimensionMismatch):
            eval_operator(u, [0.0], 0.5, _cross())

    def test_bad_order(self):
        u = builtin("gaussian", dimension=2)
        with pytest.raises(BadParameter):
            eval_operator(u, [0.0, 0.0], 1.0, _cross())

    def test_validation_errors_are_value_errors(self):
        u = builtin("gaussian", dimension=2)
        with pytest.raises(ValueError):
            eval_operator(u, [0.0, 0.0], 0.0, _cross())


class TestTolerance:
    def test_warns_above_tolerance(self, caplog):
        quad = QuadratureSpec.from_defaults(inner_nodes=2, panel_nodes=2, tolerance=1e-14)
        u = builtin("bump", dimension=2, radius=1.5)
        with caplog.at_level(logging.WARNING, logger="services.operator"):
            result = eval_operator(u, [0.1, 0.0], 0.5, _cross(), quad=quad)
        assert result.error_estimate > quad.tolerance
        assert any("above tolerance" in r.getMessage() for r in caplog.records)

    def test_quiet_within_tolerance(self, caplog):
        quad = QuadratureSpec.from_defaults(tolerance=1.0)
        u = builtin("gaussian", dimension=2)
        with caplog.at_level(logging.WARNING, logger="services.operator"):
            eval_operator(u, [0.0, 0.0], 0.5, _cross(), quad=quad)
        assert not [r for r in caplog.records if r.levelno >= logging.WARNING]
