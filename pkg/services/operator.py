"""The anisotropic nonlocal operator L and its Fourier symbol.

    L u(x) = int_0^inf d rho int_S da(omega) delta(u, x, rho omega) / rho^{1+2s}
    delta(u, x, y) = 2 u(x) - u(x - y) - u(x + y)

L is the positive form: L cos(k.x) = psi(k) cos(k.x).
"""
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Optional

import numpy as np
from scipy import integrate, special

from services.errors import BadParameter, DimensionMismatch, NonfiniteValue, NotC2AtPoint
from services.funcs import TestFunction
from services.measure import SpectralMeasure, check_order, total_mass
from services.quadrature import QuadratureSpec, gauss_jacobi, panel_rule
from services.rays import far_field, far_field_strategy, ray_sums

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EvalResult:
    value: float
    error_estimate: float
    pieces: Dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"value": self.value, "error_estimate": self.error_estimate, "pieces": dict(self.pieces)}


def _check_point(u: TestFunction, measure: SpectralMeasure, x) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (measure.dimension,) or u.dimension != measure.dimension:
        raise DimensionMismatch(
            f"point of length {x.size}, function in R^{u.dimension}, measure on S^{measure.dimension - 1}")
    return x


def second_difference(u: TestFunction, x, y) -> float:
    """delta(u, x, y) = 2u(x) - u(x - y) - u(x + y)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return float(2.0 * u.value(x) - u.value(x - y) - u.value(x + y))


@lru_cache(maxsize=128)
def operator_constant(s: float) -> float:
    """K(s) = 2 int_0^inf (1 - cos t) t^{-1-2s} dt by 1-D quadrature."""
    check_order(s)
    # (1 - cos t)/t^2 = sinc(t / 2pi)^2 / 2 is smooth; t^{1-2s} goes to the weight
    near, _ = integrate.quad(lambda t: 0.5 * np.sinc(t / (2.0 * np.pi)) ** 2, 0.0, 1.0,
                             weight="alg", wvar=(1.0 - 2.0 * s, 0.0), epsabs=1e-15, epsrel=1e-14)
    oscillating, _ = integrate.quad(lambda t: t ** (-1.0 - 2.0 * s), 1.0, np.inf, weight="cos",
                                    wvar=1.0, epsabs=1e-15, limlst=200)
    return 2.0 * (near + 1.0 / (2.0 * s) - oscillating)


def operator_constant_closed_form(s: float) -> float:
    """pi / (Gamma(1+2s) sin(pi s)), the value of K(s) in closed form."""
    check_order(s)
    return math.pi / (special.gamma(1.0 + 2.0 * s) * math.sin(math.pi * s))


def symbol(k, s: float, measure: SpectralMeasure, quad: Optional[QuadratureSpec] = None) -> float:
    """psi(k) = K(s) int |k . omega|^{2s} da(omega)."""
    check_order(s)
    total_mass(measure)
    k = np.atleast_1d(np.asarray(k, dtype=float))
    directions, weights = measure.discretize(quad)
    moment = float(weights @ np.abs(directions @ k) ** (2.0 * s))
    return operator_constant(float(s)) * moment


def truncation_bound(u: TestFunction, measure: SpectralMeasure, radius: float, s: float) -> float:
    """Bound on the tail of L beyond ``radius``: 2 |u|_inf Lambda R^{-2s} / s."""
    return 2.0 * u.sup_bound * measure.total_mass * radius ** (-2.0 * s) / s


def _inner(u, x, s, directions, weights, rho0, quad):
    rule = gauss_jacobi(0.0, 1.0 - 2.0 * s, quad.inner_nodes)
    rho = rho0 * rule.nodes
    ux = float(u.value(x))
    quotient = (2.0 * ux - ray_sums(u, x, directions, rho)) / rho ** 2
    small = rho < quad.taylor_radius
    if np.any(small):
        # removable singularity: delta / rho^2 -> -<D^2u(x) omega, omega>
        curvature = -np.einsum("ji,ik,jk->j", directions, np.reshape(u.hessian(x), (len(x), len(x))), directions)
        quotient[:, small] = curvature[:, None]
    return rho0 ** (2.0 - 2.0 * s) * float(weights @ (quotient @ rule.weights))


def _tail(u, x, s, directions, weights, rho0, quad, cap):
    ux = float(u.value(x))
    if cap is not None:
        rho, w = panel_rule(rho0, cap, u.length_scale, quad.panel_nodes)
        delta = 2.0 * ux - ray_sums(u, x, directions, rho)
        return float(weights @ (delta @ (w * rho ** (-1.0 - 2.0 * s)))), 0.0, "capped"
    strategy = far_field_strategy(u)
    if strategy == "mapped":
        # rho = rho0 / v turns the tail into a weight v^{2s-1} on (0, 1)
        rule = gauss_jacobi(0.0, 2.0 * s - 1.0, quad.inner_nodes)
        delta = 2.0 * ux - ray_sums(u, x, directions, rho0 / rule.nodes)
        return rho0 ** (-2.0 * s) * float(weights @ (delta @ rule.weights)), 0.0, strategy
    far = far_field(u, x, directions, weights, rho0, s, quad)
    constant = 2.0 * ux * float(np.sum(weights)) * rho0 ** (-2.0 * s) / (2.0 * s)
    return constant - far.value, far.error, far.strategy


def _pieces(u, x, s, measure, rho0, quad, cap):
    directions, weights = measure.discretize(quad)
    inner = _inner(u, x, s, directions, weights, rho0, quad)
    tail, tail_error, strategy = _tail(u, x, s, directions, weights, rho0, quad, cap)
    return inner, tail, tail_error, strategy


def eval_operator(u: TestFunction, x, s: float, measure: SpectralMeasure,
                  split_radius: Optional[float] = None, quad: Optional[QuadratureSpec] = None,
                  tail_cap: Optional[float] = None) -> EvalResult:
    """L u(x) by split singular quadrature with a refinement error estimate."""
    check_order(s)
    quad = quad or QuadratureSpec.from_defaults()
    rho0 = float(split_radius if split_radius is not None else quad.split_radius)
    if rho0 <= 0:
        raise BadParameter("split radius must be positive")
    if tail_cap is not None and tail_cap <= rho0:
        raise BadParameter("tail cap must exceed the split radius")
    if not u.is_c2:
        raise NotC2AtPoint(f"{u.name} is only {u.smoothness}; L needs a C2 function")
    total_mass(measure)
    x = _check_point(u, measure, x)

    inner_c, tail_c, _, _ = _pieces(u, x, s, measure, rho0, quad, tail_cap)
    inner, tail, tail_error, strategy = _pieces(u, x, s, measure, rho0, quad.refined(), tail_cap)
    value = inner + tail
    if not math.isfinite(value):
        raise NonfiniteValue(f"L {u.name} is not finite at {x.tolist()}")
    inner_delta = abs(inner - inner_c)
    tail_delta = abs(tail - tail_c)
    truncation = truncation_bound(u, measure, tail_cap, s) if tail_cap is not None else 0.0
    error = inner_delta + tail_delta + tail_error + truncation
    logger.debug(f"L {u.name}(x={x.tolist()}) s={s}: {value} +- {error} ({strategy})")
    if error > quad.tolerance:
        logger.warning(f"L {u.name} at {x.tolist()}: error estimate {error:.3g} "
                       f"above tolerance {quad.tolerance:.3g}")
    return EvalResult(value=value, error_estimate=error, pieces={
        "inner": inner,
        "tail": tail,
        "truncation_bound": truncation,
        "inner_refinement": inner_delta,
        "tail_refinement": tail_delta,
        "tail_strategy": strategy,
        "split_radius": rho0,
    })
