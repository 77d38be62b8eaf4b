"""Checks of the mean value expansion, the s -> 1 limits and the seminorm limit."""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy import special

from services.errors import BadParameter, ResidualUnderflow, UnboundedSupport
from services.funcs import TestFunction
from services.measure import SpectralMeasure, sample_directions, second_moment, total_mass
from services.meankernel import MeanKernelParams, mean_value
from services.operator import _check_point, check_order, eval_operator
from services.quadrature import QuadratureSpec, gauss_jacobi, lattice_rule, panel_rule
from services.settings import load_defaults, worker_count

logger = logging.getLogger(__name__)

NOISE_FACTOR = 100.0
SEMINORM_DECAY = 1e-8
LATTICE_CHUNK = 2_000_000


@dataclass(frozen=True)
class OrderFit:
    radii: List[float]
    residuals: List[float]
    slope: float
    fit_residual: float
    passed: bool
    vacuous: bool = False


@dataclass(frozen=True)
class LadderRow:
    ladder: float
    computed: float
    target: float

    @property
    def abs_err(self) -> float:
        return abs(self.computed - self.target)

    @property
    def rel_err(self) -> float:
        return self.abs_err / abs(self.target) if self.target != 0 else self.abs_err


@dataclass(frozen=True)
class LadderReport:
    rows: List[LadderRow]
    passed: bool
    extras: Dict = field(default_factory=dict)

    @property
    def final_rel_err(self) -> float:
        return self.rows[-1].rel_err if self.rows else 0.0

    def to_rows(self):
        return [[r.ladder, r.computed, r.target, r.abs_err, r.rel_err] for r in self.rows]


@dataclass(frozen=True)
class SeminormResult:
    squared: float
    error_estimate: float
    method: str
    truncation: float = 0.0

    @property
    def value(self) -> float:
        return math.sqrt(max(self.squared, 0.0))


def _parallel_map(fn, items):
    items = list(items)
    workers = min(worker_count(), len(items)) or 1
    if workers == 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _check_ladder(values, label):
    values = [float(v) for v in values]
    if not values:
        raise BadParameter(f"{label} ladder is empty")
    return values


# -- mean value expansion -------------------------------------------------------

def expansion_residual(u: TestFunction, x, r: float, s: float, measure: SpectralMeasure,
                       quad: Optional[QuadratureSpec] = None,
                       operator_value: Optional[float] = None) -> float:
    """u(x) - M^s_r u(x) - c(n,s,a) r^{2s} L u(x), which is O(r^2)."""
    quad = quad or QuadratureSpec.from_defaults()
    x = _check_point(u, measure, x)
    params = MeanKernelParams(radius=r, s=s, measure=measure)
    if operator_value is None:
        operator_value = eval_operator(u, x, s, measure, quad=quad).value
    mean = mean_value(u, x, params, quad).value
    return float(u.value(x)) - mean - params.constant * r ** (2.0 * s) * operator_value


def fit_expansion_order(u: TestFunction, x, s: float, measure: SpectralMeasure,
                        ladder: Optional[Sequence[float]] = None,
                        quad: Optional[QuadratureSpec] = None,
                        min_slope: Optional[float] = None, strict: bool = False) -> OrderFit:
    """Least-squares slope of log|residual| against log r.

    Residuals at the rounding floor carry no order information; they give a
    vacuous pass, or ResidualUnderflow with ``strict``.
    """
    defaults = load_defaults()["ladders"]
    radii = _check_ladder(ladder if ladder is not None else defaults["radii"], "radius")
    if any(b >= a for a, b in zip(radii, radii[1:])) or radii[-1] <= 0:
        raise BadParameter("radius ladder must be positive and strictly decreasing")
    min_slope = float(min_slope if min_slope is not None else defaults["min_slope"])
    quad = quad or QuadratureSpec.from_defaults()
    x = _check_point(u, measure, x)
    operator_value = eval_operator(u, x, s, measure, quad=quad).value
    residuals = _parallel_map(
        lambda r: expansion_residual(u, x, r, s, measure, quad, operator_value), radii)

    scale = u.sup_bound if u.is_bounded else max(1.0, abs(float(u.value(x))))
    floor = NOISE_FACTOR * np.finfo(float).eps * scale
    keep = [(r, abs(e)) for r, e in zip(radii, residuals) if abs(e) > floor]
    if len(keep) < 2:
        if strict:
            raise ResidualUnderflow(f"residuals of {u.name} are below the noise floor {floor}")
        logger.info(f"Residuals of {u.name} are below the noise floor {floor}; vacuous pass")
        return OrderFit(radii=radii, residuals=residuals, slope=math.nan, fit_residual=0.0,
                        passed=True, vacuous=True)
    logs = np.log(np.array(keep))
    slope, intercept = np.polyfit(logs[:, 0], logs[:, 1], 1)
    fit = logs[:, 1] - (slope * logs[:, 0] + intercept)
    fit_residual = float(np.sqrt(np.mean(fit ** 2)))
    passed = bool(slope >= min_slope)
    logger.info(f"Expansion order for {u.name} at s={s}: slope {slope:.4f} (pass={passed})")
    return OrderFit(radii=radii, residuals=residuals, slope=float(slope),
                    fit_residual=fit_residual, passed=passed)


# -- s -> 1 limits ---------------------------------------------------------------

def _decreasing(errors):
    return all(b < a for a, b in zip(errors, errors[1:]))


def local_limit_operator(u: TestFunction, x, measure: SpectralMeasure,
                         s_ladder: Optional[Sequence[float]] = None,
                         quad: Optional[QuadratureSpec] = None,
                         tolerance: float = 1e-2) -> LadderReport:
    """(1-s) L u(x) against -1/2 sum_ij m_ij d_ij u(x)."""
    ladder = _check_ladder(s_ladder if s_ladder is not None else load_defaults()["ladders"]["s_to_one"], "s")
    quad = quad or QuadratureSpec.from_defaults()
    x = _check_point(u, measure, x)
    moments = second_moment(measure, quad)
    target = -0.5 * moments.pair(np.reshape(u.hessian(x), (len(x), len(x))))
    values = _parallel_map(lambda s: (1.0 - s) * eval_operator(u, x, s, measure, quad=quad).value, ladder)
    rows = [LadderRow(s, v, target) for s, v in zip(ladder, values)]
    errors = [row.abs_err for row in rows]
    passed = _decreasing(errors) and rows[-1].rel_err <= tolerance
    logger.info(f"(1-s)L limit for {u.name}: target {target}, final rel err {rows[-1].rel_err:.3e}")
    return LadderReport(rows=rows, passed=passed, extras={"target": target})


def spherical_average(u: TestFunction, x, r: float, measure: SpectralMeasure,
                      quad: Optional[QuadratureSpec] = None) -> float:
    """(2 total_mass)^{-1} int (u(x - r omega) + u(x + r omega)) da(omega)."""
    x = np.asarray(x, dtype=float)
    both = measure.integrate(lambda d: u.value(x + r * d) + u.value(x - r * d), quad)
    mass = measure.integrate(lambda d: np.ones(len(d)), quad)
    return both / (2.0 * mass)


def local_limit_mean(u: TestFunction, x, r: float, measure: SpectralMeasure,
                     s_ladder: Optional[Sequence[float]] = None,
                     quad: Optional[QuadratureSpec] = None,
                     tolerance: float = 1e-2) -> LadderReport:
    """M^s_r u(x) against the symmetric spherical average at radius r."""
    ladder = _check_ladder(s_ladder if s_ladder is not None else load_defaults()["ladders"]["s_to_one"], "s")
    quad = quad or QuadratureSpec.from_defaults()
    x = _check_point(u, measure, x)
    target = spherical_average(u, x, r, measure, quad)
    values = _parallel_map(
        lambda s: mean_value(u, x, MeanKernelParams(radius=r, s=s, measure=measure), quad).value, ladder)
    rows = [LadderRow(s, v, target) for s, v in zip(ladder, values)]
    passed = rows[-1].rel_err <= tolerance
    return LadderReport(rows=rows, passed=passed, extras={"target": target, "radius": r})


# -- seminorms -------------------------------------------------------------------

def _support_box(u: TestFunction, margin: float):
    if not u.decays:
        raise UnboundedSupport(f"{u.name} has neither compact support nor Gaussian decay")
    radius = u.effective_radius(SEMINORM_DECAY * max(u.sup_bound, 1e-300))
    return u.center - radius - margin, u.center + radius + margin, radius


def _outside_mass_bound(u: TestFunction, radius: float) -> float:
    # L2 mass of a Gaussian of height sup and width length_scale outside the ball
    if u.decay != "gaussian":
        return 0.0
    n, w = u.dimension, u.length_scale
    return u.sup_bound ** 2 * (math.pi * w * w) ** (n / 2.0) * special.gammaincc(n / 2.0, (radius / w) ** 2)


def _lattice_profile(u, points, ux, omega, radii, combine):
    """sum_x combine(u(x), u(x + rho omega)) for every rho, in chunks of radii."""
    step = max(1, LATTICE_CHUNK // max(len(points), 1))
    out = np.empty(len(radii))
    for start in range(0, len(radii), step):
        rho = radii[start:start + step]
        shifted = points[:, None, :] + rho[None, :, None] * omega
        out[start:start + step] = np.sum(combine(ux[:, None], u.value(shifted)), axis=0)
    return out


def _tensor_squared(u, s, measure, quad):
    rho0 = quad.split_radius
    lo, hi, radius = _support_box(u, rho0)
    points, cell = lattice_rule(lo, hi, quad.grid_spacing)
    ux = u.value(points)
    gradients = np.reshape(u.gradient(points), points.shape)
    norm2 = cell * float(ux @ ux)
    directions, weights = measure.discretize(quad)

    rule = gauss_jacobi(0.0, 1.0 - 2.0 * s, quad.inner_nodes)
    rho_in = rho0 * rule.nodes
    rho_far, w_far = panel_rule(rho0, 2.0 * radius, u.length_scale, quad.panel_nodes)
    small = rho_in < quad.taylor_radius

    total = 0.0
    for omega, a in zip(directions, weights):
        diff2 = cell * _lattice_profile(u, points, ux, omega, rho_in, lambda p, q: (p - q) ** 2) / rho_in ** 2
        if np.any(small):
            # (u(x) - u(x + rho omega))^2 / rho^2 -> (grad u . omega)^2
            diff2[small] = cell * float(np.sum((gradients @ omega) ** 2))
        inner = rho0 ** (2.0 - 2.0 * s) * float(rule.weights @ diff2)
        # beyond rho0: int (u(x) - u(x+h))^2 dx = 2 |u|^2 - 2 int u(x) u(x+h) dx
        far = 2.0 * norm2 * rho0 ** (-2.0 * s) / (2.0 * s)
        if rho_far.size:
            autocorr = cell * _lattice_profile(u, points, ux, omega, rho_far, lambda p, q: p * q)
            far -= 2.0 * float((w_far * rho_far ** (-1.0 - 2.0 * s)) @ autocorr)
        total += a * (inner + far)
    truncation = _outside_mass_bound(u, radius) * 4.0 * float(np.sum(weights)) * rho0 ** (-2.0 * s) / s
    return 2.0 * total, truncation


def _monte_carlo_squared(u, s, measure, quad, samples, seed):
    rho0 = quad.split_radius
    lo, hi, _ = _support_box(u, rho0)
    volume = float(np.prod(hi - lo))
    mass = total_mass(measure)
    rng = np.random.default_rng(seed)
    x = lo + (hi - lo) * rng.random((samples, u.dimension))
    omega = sample_directions(measure, rng, samples)
    inner_branch = rng.random(samples) < 0.5
    uniform = rng.random(samples)
    # inner: rho = rho0 t with density (2-2s) t^{1-2s}; far: Pareto tail rho0 U^{-1/(2s)}
    rho = np.where(inner_branch,
                   rho0 * uniform ** (1.0 / (2.0 - 2.0 * s)),
                   rho0 * np.maximum(uniform, 1e-300) ** (-1.0 / (2.0 * s)))
    ux = u.value(x)
    uy = u.value(x + rho[:, None] * omega)
    inner = rho0 ** (2.0 - 2.0 * s) / (2.0 - 2.0 * s) * (ux - uy) ** 2 / rho ** 2
    far = rho0 ** (-2.0 * s) / (2.0 * s) * (2.0 * ux ** 2 - 2.0 * ux * uy)
    estimates = 2.0 * mass * volume * np.where(inner_branch, inner, far) / 0.5
    return float(np.mean(estimates)), float(np.std(estimates, ddof=1) / math.sqrt(samples))


def hs_seminorm(u: TestFunction, s: float, measure: SpectralMeasure, method: str = "tensor",
                quad: Optional[QuadratureSpec] = None, samples: int = 200000,
                seed: int = 0) -> SeminormResult:
    """[u]_{H^s_a}: tensor lattice/Gauss-Jacobi quadrature or importance-sampled Monte Carlo."""
    check_order(s)
    total_mass(measure)
    quad = quad or QuadratureSpec.from_defaults()
    if method == "tensor":
        coarse, _ = _tensor_squared(u, s, measure, quad)
        squared, truncation = _tensor_squared(u, s, measure, quad.refined())
        return SeminormResult(squared=squared, error_estimate=abs(squared - coarse) + truncation,
                              method="tensor-quadrature", truncation=truncation)
    if method in ("monte-carlo", "mc"):
        squared, stderr = _monte_carlo_squared(u, s, measure, quad, int(samples), seed)
        return SeminormResult(squared=squared, error_estimate=stderr, method="monte-carlo")
    raise BadParameter(f"unknown seminorm method '{method}'")


def _h1_squared(u, moments, quad):
    lo, hi, _ = _support_box(u, 0.0)
    points, cell = lattice_rule(lo, hi, quad.grid_spacing)
    g = np.reshape(u.gradient(points), points.shape)
    return cell * float(np.einsum("pi,ij,pj->", g, moments.entries, g))


def h1_seminorm(u: TestFunction, measure: SpectralMeasure,
                quad: Optional[QuadratureSpec] = None) -> SeminormResult:
    """[u]_{H^1_a} = (int <m grad u, grad u> dx)^{1/2}."""
    quad = quad or QuadratureSpec.from_defaults()
    moments = second_moment(measure, quad)
    coarse = _h1_squared(u, moments, quad)
    squared = _h1_squared(u, moments, quad.refined())
    return SeminormResult(squared=squared, error_estimate=abs(squared - coarse), method="tensor-quadrature")


def l2_norm(u: TestFunction, quad: Optional[QuadratureSpec] = None) -> float:
    quad = quad or QuadratureSpec.from_defaults()
    lo, hi, _ = _support_box(u, 0.0)
    points, cell = lattice_rule(lo, hi, quad.grid_spacing)
    ux = u.value(points)
    return math.sqrt(cell * float(ux @ ux))


def h1_norm(u: TestFunction, measure: SpectralMeasure, quad: Optional[QuadratureSpec] = None) -> float:
    """||u||_{H^1_a} = [u]_{H^1_a} + ||u||_{L^2}."""
    return h1_seminorm(u, measure, quad).value + l2_norm(u, quad)


def energy(u: TestFunction, s: float, measure: SpectralMeasure,
           quad: Optional[QuadratureSpec] = None) -> float:
    """E(u) = [u]^2_{H^s_a} / 4."""
    return hs_seminorm(u, s, measure, quad=quad).squared / 4.0


def uniform_bound(u: TestFunction, measure: SpectralMeasure, s_grid: Sequence[float],
                  quad: Optional[QuadratureSpec] = None) -> Dict:
    """Ratios (1-s)[u]^2_{H^s_a} / ||u||^2_{H^1_a} over s in (1/2, 1) and their maximum."""
    quad = quad or QuadratureSpec.from_defaults()
    grid = [s for s in _check_ladder(s_grid, "s") if 0.5 < s < 1.0]
    norm = h1_norm(u, measure, quad)
    if norm == 0.0:
        return {"s": grid, "ratios": [0.0] * len(grid), "constant": 0.0}
    ratios = _parallel_map(lambda s: (1.0 - s) * hs_seminorm(u, s, measure, quad=quad).squared / norm ** 2, grid)
    return {"s": grid, "ratios": ratios, "constant": max(ratios) if ratios else 0.0}


def bbm_check(u: TestFunction, measure: SpectralMeasure,
              s_ladder: Optional[Sequence[float]] = None,
              quad: Optional[QuadratureSpec] = None, tolerance: float = 2e-2) -> LadderReport:
    """(1-s)[u]^2_{H^s_a} against [u]^2_{H^1_a}, plus the uniform bound over s in (1/2, 1)."""
    ladder = _check_ladder(s_ladder if s_ladder is not None else load_defaults()["ladders"]["bbm"], "s")
    quad = quad or QuadratureSpec.from_defaults()
    target = h1_seminorm(u, measure, quad).squared
    results = _parallel_map(lambda s: hs_seminorm(u, s, measure, quad=quad), ladder)
    rows = [LadderRow(s, (1.0 - s) * r.squared, target) for s, r in zip(ladder, results)]
    errors = [row.abs_err for row in rows]
    passed = rows[-1].rel_err <= tolerance and _decreasing(errors) if target != 0 else \
        all(e == 0.0 for e in errors)

    norm = h1_norm(u, measure, quad)
    ratios = [(1.0 - row.ladder) * r.squared / norm ** 2 if norm else 0.0
              for row, r in zip(rows, results) if 0.5 < row.ladder < 1.0]
    logger.info(f"BBM check for {u.name}: target {target}, final rel err {rows[-1].rel_err:.3e}")
    return LadderReport(rows=rows, passed=passed, extras={
        "target": target,
        "uniform_bound": max(ratios) if ratios else 0.0,
        "ratios": ratios,
    })
