"""Radial integrals along rays x +- rho omega, shared by the operator and the mean kernel."""
import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from services.funcs import TestFunction
from services.quadrature import QuadratureSpec, oscillatory_tail, panel_rule

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FarField:
    value: float
    error: float
    strategy: str


def ray_points(x, directions, rho):
    """Points x + rho omega with shape (directions, radii, n)."""
    x = np.asarray(x, dtype=float)
    return x[None, None, :] + rho[None, :, None] * directions[:, None, :]


def ray_sums(u: TestFunction, x, directions, rho) -> np.ndarray:
    """h(rho, omega) = u(x + rho omega) + u(x - rho omega), shape (directions, radii)."""
    rho = np.asarray(rho, dtype=float)
    return u.value(ray_points(x, directions, rho)) + u.value(ray_points(x, directions, -rho))


def far_field_strategy(u: TestFunction) -> str:
    if u.decays:
        return "panels"
    if u.wavevector is not None:
        return "oscillatory"
    return "mapped"


def far_field(u: TestFunction, x, directions, weights, start: float, s: float,
              quad: QuadratureSpec, factor: Optional[Callable] = None) -> FarField:
    """sum_j a_j int_start^inf rho^{-1-2s} f(rho) h_j(rho) d rho.

    ``factor`` is an extra smooth radial weight f (default 1). Functions
    without decay or wave information have no far-field strategy here; the
    callers integrate them through the rho = start/v map.
    """
    x = np.asarray(x, dtype=float)
    strategy = far_field_strategy(u)
    if strategy == "panels":
        reach = float(np.linalg.norm(x - u.center)) + u.effective_radius()
        if reach <= start:
            return FarField(0.0, 0.0, "vanishing")
        rho, w = panel_rule(start, reach, u.length_scale, quad.panel_nodes)
        kernel = rho ** (-1.0 - 2.0 * s)
        if factor is not None:
            kernel = kernel * factor(rho)
        h = ray_sums(u, x, directions, rho)
        value = float(weights @ (h @ (w * kernel)))
        return FarField(value, 0.0, strategy)
    if strategy == "oscillatory":
        ux = float(u.value(x))
        total, error = 0.0, 0.0
        frequencies = directions @ u.wavevector
        if factor is None:
            f = lambda r: r ** (-1.0 - 2.0 * s)
        else:
            f = lambda r: r ** (-1.0 - 2.0 * s) * float(factor(np.asarray(r)))
        for a, c in zip(weights, frequencies):
            if a == 0.0:
                continue
            value, err = oscillatory_tail(f, start, c)
            total += a * 2.0 * ux * value
            error += abs(a) * 2.0 * abs(ux) * err
        return FarField(total, error, strategy)
    raise ValueError(f"no direct far-field rule for {u.name}; use the mapped rule")
