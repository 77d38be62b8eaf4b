"""Weighted 1-D rules, sphere rules and lattice rules.

All singular radial integrals in the toolkit are reduced to (0, 1) with an
explicit endpoint weight, so Gauss-Jacobi rules absorb the singularity and no
adaptive refinement near it is needed.
"""
import logging
import math
from dataclasses import dataclass, replace, field
from functools import lru_cache
from typing import Callable, Tuple

import numpy as np
from scipy import integrate, special

from services.errors import BadExponent, BadParameter, Overflow, UnsupportedDimension
from services.settings import load_defaults

logger = logging.getLogger(__name__)

MAX_JACOBI_NODES = 512


@dataclass(frozen=True)
class QuadratureSpec:
    """Resolutions and tolerances shared by every evaluation."""
    inner_nodes: int = 48
    panel_nodes: int = 16
    sphere_nodes: int = 64
    sphere_polar: int = 16
    sphere_azimuth: int = 32
    grid_spacing: float = 0.05
    taylor_radius: float = 1e-4
    tolerance: float = 1e-6
    split_radius: float = 1.0

    @classmethod
    def from_defaults(cls, **overrides):
        values = dict(load_defaults()["quadrature"])
        values.update({k: v for k, v in overrides.items() if v is not None})
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in values.items() if k in known})

    def __post_init__(self):
        for name in ("inner_nodes", "panel_nodes", "sphere_nodes", "sphere_polar", "sphere_azimuth"):
            if int(getattr(self, name)) < 1:
                raise BadParameter(f"{name} must be a positive integer")
        if self.grid_spacing <= 0 or self.split_radius <= 0 or self.taylor_radius < 0:
            raise BadParameter("grid_spacing and split_radius must be positive")

    def refined(self) -> "QuadratureSpec":
        """Twice the resolution everywhere; the refinement estimate compares against it."""
        return replace(
            self,
            inner_nodes=min(2 * self.inner_nodes, MAX_JACOBI_NODES),
            panel_nodes=2 * self.panel_nodes,
            sphere_nodes=2 * self.sphere_nodes,
            sphere_polar=2 * self.sphere_polar,
            sphere_azimuth=2 * self.sphere_azimuth,
            grid_spacing=self.grid_spacing / 2,
        )


@dataclass(frozen=True)
class JacobiRule:
    """Gauss rule on (0, 1) for the weight w**beta * (1 - w)**alpha."""
    alpha: float
    beta: float
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.nodes)

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))


@dataclass(frozen=True)
class SphereRule:
    dimension: int
    directions: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    degree: int

    def integrate(self, f: Callable[[np.ndarray], np.ndarray]) -> float:
        return float(np.dot(self.weights, f(self.directions)))


def beta_weight_sum(alpha: float, beta: float) -> float:
    """Total mass of w**beta (1-w)**alpha on (0, 1)."""
    return float(special.beta(beta + 1.0, alpha + 1.0))


@lru_cache(maxsize=256)
def _jacobi_arrays(alpha: float, beta: float, count: int):
    # scipy's rule lives on (-1, 1) with weight (1-x)**alpha (1+x)**beta
    x, wx = special.roots_jacobi(count, alpha, beta)
    nodes = 0.5 * (1.0 + x)
    weights = wx / 2.0 ** (alpha + beta + 1.0)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def gauss_jacobi(alpha: float, beta: float, count: int) -> JacobiRule:
    """Gauss-Jacobi rule on (0, 1); beta is the exponent at 0, alpha at 1."""
    if alpha <= -1.0 or beta <= -1.0:
        raise BadExponent(f"Jacobi exponents must exceed -1, got alpha={alpha}, beta={beta}")
    count = int(count)
    if count < 1:
        raise BadParameter("Gauss-Jacobi rule needs at least one node")
    if count > MAX_JACOBI_NODES:
        raise Overflow(f"Gauss-Jacobi rules are limited to {MAX_JACOBI_NODES} nodes, got {count}")
    nodes, weights = _jacobi_arrays(float(alpha), float(beta), count)
    logger.debug(f"Gauss-Jacobi rule alpha={alpha} beta={beta} N={count}")
    return JacobiRule(alpha=float(alpha), beta=float(beta), nodes=nodes, weights=weights)


def sphere_rule(n: int, resolution) -> SphereRule:
    """Equispaced circle rule (n=2) or Gauss-Legendre x trapezoid rule (n=3).

    For n=3 the resolution is a (polar, azimuth) pair or a single integer used
    as the polar count with twice as many azimuth nodes.
    """
    if n == 2:
        count = int(resolution)
        if count < 1:
            raise BadParameter("circle rule needs at least one node")
        theta = 2.0 * np.pi * np.arange(count) / count
        directions = np.column_stack([np.cos(theta), np.sin(theta)])
        weights = np.full(count, 2.0 * np.pi / count)
        return SphereRule(dimension=2, directions=directions, weights=weights, degree=count - 1)
    if n == 3:
        if isinstance(resolution, (tuple, list)):
            polar, azimuth = int(resolution[0]), int(resolution[1])
        else:
            polar, azimuth = int(resolution), 2 * int(resolution)
        if polar < 1 or azimuth < 1:
            raise BadParameter("sphere rule needs positive polar and azimuth counts")
        z, wz = special.roots_legendre(polar)
        phi = 2.0 * np.pi * np.arange(azimuth) / azimuth
        zz, pp = np.meshgrid(z, phi, indexing="ij")
        ring = np.sqrt(1.0 - zz ** 2)
        directions = np.column_stack([
            (ring * np.cos(pp)).ravel(),
            (ring * np.sin(pp)).ravel(),
            zz.ravel(),
        ])
        weights = np.outer(wz, np.full(azimuth, 2.0 * np.pi / azimuth)).ravel()
        return SphereRule(dimension=3, directions=directions, weights=weights,
                          degree=min(2 * polar - 1, azimuth - 1))
    raise UnsupportedDimension(f"sphere rules exist for n in {{2, 3}}, got n={n}")


def sphere_area(n: int) -> float:
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


def panel_rule(a: float, b: float, scale: float, nodes: int) -> Tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre rule on [a, b].

    Panels double in length from a until they reach the feature scale, then
    continue with width scale/2.
    """
    if not (a > 0 and b > a):
        return np.empty(0), np.empty(0)
    breaks = [a]
    while breaks[-1] < b:
        x = breaks[-1]
        step = x if x < scale else 0.5 * scale
        breaks.append(min(x + step, b))
    breaks = np.asarray(breaks)
    t, wt = special.roots_legendre(int(nodes))
    left, right = breaks[:-1], breaks[1:]
    half = 0.5 * (right - left)
    mid = 0.5 * (right + left)
    points = (mid[:, None] + half[:, None] * t[None, :]).ravel()
    weights = (half[:, None] * wt[None, :]).ravel()
    return points, weights


def oscillatory_tail(f: Callable[[float], float], start: float, frequency: float) -> Tuple[float, float]:
    """Integral of f(rho) cos(frequency rho) over (start, inf) and its error."""
    frequency = abs(float(frequency))
    if frequency < 1e-12:
        value, err = integrate.quad(f, start, np.inf, epsabs=1e-14, epsrel=1e-12, limit=200)
        return value, err
    value, err = integrate.quad(f, start, np.inf, weight="cos", wvar=frequency,
                                epsabs=1e-14, limlst=200, limit=200)
    return value, err


def lattice_rule(lo, hi, spacing: float):
    """Uniform lattice on the box [lo, hi] with equal weights.

    Integrands are expected to vanish on the box boundary, where this equals
    the trapezoid rule and converges spectrally for smooth integrands.
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    axes = []
    cell = 1.0
    for a, b in zip(lo, hi):
        count = int(math.ceil((b - a) / spacing)) + 1
        axis = np.linspace(a, b, count)
        axes.append(axis)
        cell *= (b - a) / (count - 1)
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.column_stack([m.ravel() for m in mesh])
    return points, cell
