"""The mean kernel M^s_r and its sampling law.

    M^s_r u(x) = c r^{2s} int_r^inf d rho int_S da(omega)
                 (u(x + rho omega) + u(x - rho omega)) / ((rho^2 - r^2)^s rho)
    c = sin(pi s) / pi / total_mass

With w = 1 - (r/rho)^2 the radial weight becomes w^{-s} (1 - w)^{s-1} / 2, a
Beta(1-s, s) density up to B(1-s, s) = pi / sin(pi s).
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from services.errors import DegenerateRadius, DomainError, NonfiniteValue
from services.funcs import TestFunction
from services.measure import SpectralMeasure, sample_directions, total_mass
from services.operator import EvalResult, _check_point, check_order
from services.quadrature import QuadratureSpec, gauss_jacobi
from services.rays import far_field, far_field_strategy, ray_sums

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MeanKernelParams:
    radius: float
    s: float
    measure: SpectralMeasure

    def __post_init__(self):
        check_order(self.s)
        if not self.radius > 0:
            raise DegenerateRadius(f"radius must be positive, got {self.radius}")

    @property
    def constant(self) -> float:
        """c(n, s, a) = sin(pi s) / pi / total_mass."""
        return math.sin(math.pi * self.s) / math.pi / total_mass(self.measure)


def normalization(params: MeanKernelParams, quad: Optional[QuadratureSpec] = None) -> float:
    """M^s_r applied to 1 through the Beta(1-s, s) Gauss-Jacobi rule; equals 1."""
    quad = quad or QuadratureSpec.from_defaults()
    rule = gauss_jacobi(params.s - 1.0, -params.s, quad.inner_nodes)
    return math.sin(math.pi * params.s) / math.pi * float(np.sum(rule.weights))


def _beta_rule_mean(u, x, params, quad):
    # whole range (r, inf) through the w-substitution
    s, r = params.s, params.radius
    directions, weights = params.measure.discretize(quad)
    rule = gauss_jacobi(s - 1.0, -s, quad.inner_nodes)
    rho = r / np.sqrt(1.0 - rule.nodes)
    h = ray_sums(u, x, directions, rho)
    scale = math.sin(math.pi * s) / math.pi / (2.0 * float(np.sum(weights)))
    return scale * float(weights @ (h @ rule.weights)), 0.0, "beta-rule"


def _split_mean(u, x, params, quad):
    s, r = params.s, params.radius
    directions, weights = params.measure.discretize(quad)
    c = math.sin(math.pi * s) / math.pi / float(np.sum(weights))
    # near piece rho = r (1 + t), t in (0, 1): weight t^{-s} (2 + t)^{-s} / (1 + t)
    rule = gauss_jacobi(0.0, -s, quad.inner_nodes)
    t = rule.nodes
    h = ray_sums(u, x, directions, r * (1.0 + t))
    smooth = (2.0 + t) ** (-s) / (1.0 + t)
    near = float(weights @ (h @ (rule.weights * smooth)))
    far = far_field(u, x, directions, weights, 2.0 * r, s, quad,
                    factor=lambda rho: r ** (2.0 * s) * (1.0 - (r / rho) ** 2) ** (-s))
    return c * (near + far.value), c * far.error, far.strategy


def _mean_pieces(u, x, params, quad):
    if far_field_strategy(u) == "mapped":
        return _beta_rule_mean(u, x, params, quad)
    return _split_mean(u, x, params, quad)


def mean_value(u: TestFunction, x, params: MeanKernelParams,
               quad: Optional[QuadratureSpec] = None) -> EvalResult:
    """M^s_r u(x) with a refinement error estimate."""
    quad = quad or QuadratureSpec.from_defaults()
    x = _check_point(u, params.measure, x)
    coarse, _, _ = _mean_pieces(u, x, params, quad)
    value, extra, strategy = _mean_pieces(u, x, params, quad.refined())
    if not (math.isfinite(value) and math.isfinite(coarse)):
        raise NonfiniteValue(f"M^s_r {u.name} is not finite at {x.tolist()}")
    delta = abs(value - coarse)
    logger.debug(f"M {u.name}(x={x.tolist()}) r={params.radius} s={params.s}: {value} +- {delta + extra}")
    if delta + extra > quad.tolerance:
        logger.warning(f"M {u.name} at {x.tolist()}: error estimate {delta + extra:.3g} "
                       f"above tolerance {quad.tolerance:.3g}")
    return EvalResult(value=value, error_estimate=delta + extra,
                      pieces={"refinement": delta, "strategy": strategy, "radius": params.radius})


def kernel_density(rho, params: MeanKernelParams):
    """Radial probability density (2 sin(pi s)/pi) r^{2s} (rho^2 - r^2)^{-s} / rho."""
    rho_arr = np.asarray(rho, dtype=float)
    r, s = params.radius, params.s
    if np.any(rho_arr <= r):
        raise DomainError(f"kernel density lives on rho > r = {r}")
    density = 2.0 * math.sin(math.pi * s) / math.pi * r ** (2.0 * s) \
        * (rho_arr ** 2 - r ** 2) ** (-s) / rho_arr
    return float(density) if np.ndim(rho) == 0 else density


def sample_jump_ratios(params: MeanKernelParams, rng: np.random.Generator, count: int):
    """Draw ``count`` jumps as (q, omega, sign) with q = (r / rho)^2 ~ Beta(s, 1-s).

    q = g2 / (g1 + g2) for g1 ~ Gamma(1-s), g2 ~ Gamma(s) is exact even where
    rho - r is below the resolution of doubles near r.
    """
    s = params.s
    g1 = rng.standard_gamma(1.0 - s, count)
    g2 = rng.standard_gamma(s, count)
    # guard against g2 underflowing to 0 for small s
    g2 = np.maximum(g2, np.finfo(float).tiny)
    q = g2 / (g1 + g2)
    omega = sample_directions(params.measure, rng, count)
    sign = np.where(rng.random(count) < 0.5, 1.0, -1.0)
    return q, omega, sign


def sample_jumps(params: MeanKernelParams, rng: np.random.Generator, count: int):
    """Draw ``count`` jumps (rho, omega, sign) from the mean kernel.

    rho = r q^{-1/2}; draws with rho within one ulp of r are moved to the next
    double above r.
    """
    q, omega, sign = sample_jump_ratios(params, rng, count)
    r = params.radius
    rho = np.maximum(r / np.sqrt(q), np.nextafter(r, np.inf))
    return rho, omega, sign


def sample_jump(params: MeanKernelParams, rng: np.random.Generator):
    rho, omega, sign = sample_jumps(params, rng, 1)
    return float(rho[0]), omega[0], float(sign[0])


def monte_carlo_mean(u: TestFunction, x, params: MeanKernelParams, rng: np.random.Generator,
                     count: int):
    """Estimate M^s_r u(x) = E[u(x +- rho omega)]; returns (mean, standard error)."""
    x = _check_point(u, params.measure, x)
    rho, omega, sign = sample_jumps(params, rng, count)
    samples = u.value(x[None, :] + (sign * rho)[:, None] * omega)
    return float(np.mean(samples)), float(np.std(samples, ddof=1) / math.sqrt(count))
