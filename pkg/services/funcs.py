"""Catalog of test functions with analytic derivatives.

Every function is vectorized: ``value`` takes points of shape (..., n) and
returns shape (...); ``gradient`` returns (..., n) and ``hessian`` (..., n, n).
"""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from services.errors import BadParameter, UnknownFunction

logger = logging.getLogger(__name__)

SMOOTHNESS_ORDER = {"C0": 0, "C1": 1, "C2": 2}
DEFAULT_DECAY_TOLERANCE = 1e-18

CATALOG = ("gaussian", "plane-wave-cos", "bump", "cutoff-quadratic", "indicator", "constant", "linear")


@dataclass(frozen=True)
class TestFunction:
    __test__ = False  # not a pytest class

    name: str
    dimension: int
    value: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    gradient: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    hessian: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    sup_bound: float
    center: np.ndarray = field(repr=False)
    support_radius: float = math.inf
    length_scale: float = 1.0
    smoothness: str = "C2"
    decay: str = "none"  # compact | gaussian | none
    wavevector: Optional[np.ndarray] = field(default=None, repr=False)
    reach: Callable[[float], float] = field(default=None, repr=False)
    params: Dict = field(default_factory=dict, repr=False)

    def __call__(self, x):
        return self.value(x)

    @property
    def is_c2(self) -> bool:
        return SMOOTHNESS_ORDER[self.smoothness] >= 2

    @property
    def is_bounded(self) -> bool:
        return math.isfinite(self.sup_bound)

    @property
    def decays(self) -> bool:
        return self.decay in ("compact", "gaussian")

    def effective_radius(self, tol: float = DEFAULT_DECAY_TOLERANCE) -> float:
        """Radius around ``center`` outside which |u| < tol (exactly 0 for compact support)."""
        if self.decay == "compact":
            return self.support_radius
        if self.reach is None:
            return math.inf
        return self.reach(tol)

    def shifted(self, z) -> "TestFunction":
        """x -> u(x - z)."""
        z = _vector(z, self.dimension, "shift")
        u = self
        return replace(
            self,
            name=f"{self.name}-shifted",
            value=lambda x: u.value(np.asarray(x, dtype=float) - z),
            gradient=lambda x: u.gradient(np.asarray(x, dtype=float) - z),
            hessian=lambda x: u.hessian(np.asarray(x, dtype=float) - z),
            center=self.center + z,
        )

    def dilated(self, lam: float) -> "TestFunction":
        """x -> u(lam x)."""
        lam = float(lam)
        if lam <= 0:
            raise BadParameter("dilation factor must be positive")
        u = self
        return replace(
            self,
            name=f"{self.name}-dilated",
            value=lambda x: u.value(lam * np.asarray(x, dtype=float)),
            gradient=lambda x: lam * u.gradient(lam * np.asarray(x, dtype=float)),
            hessian=lambda x: lam ** 2 * u.hessian(lam * np.asarray(x, dtype=float)),
            center=self.center / lam,
            support_radius=self.support_radius / lam,
            length_scale=self.length_scale / lam,
            wavevector=None if self.wavevector is None else lam * self.wavevector,
            reach=None if self.reach is None else (lambda tol: u.reach(tol) / lam),
        )


def _vector(value, n, label):
    v = np.atleast_1d(np.asarray(value, dtype=float))
    if v.size == 1 and n > 1:
        v = np.full(n, float(v[0]))
    if v.shape != (n,):
        raise BadParameter(f"{label} must have {n} components, got {v.tolist()}")
    return v


def _points(x, n):
    x = np.asarray(x, dtype=float)
    if n == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    return x


def _positive(params, key, default):
    value = float(params.pop(key, default))
    if not value > 0:
        raise BadParameter(f"{key} must be positive, got {value}")
    return value


# -- catalog entries -----------------------------------------------------------

def _gaussian(n, params):
    center = _vector(params.pop("center", 0.0), n, "center")
    width = _positive(params, "width", 1.0)
    amp = float(params.pop("amplitude", 1.0))

    def value(x):
        y = _points(x, n) - center
        return amp * np.exp(-np.sum(y * y, axis=-1) / (2 * width ** 2))

    def gradient(x):
        y = _points(x, n) - center
        return -(value(x)[..., None] * y) / width ** 2

    def hessian(x):
        y = _points(x, n) - center
        u = value(x)[..., None, None]
        outer = np.einsum("...i,...j->...ij", y, y) / width ** 4
        return u * (outer - np.eye(n) / width ** 2)

    def reach(tol):
        return width * math.sqrt(2.0 * math.log(abs(amp) / tol)) if abs(amp) > tol else 0.0

    return dict(value=value, gradient=gradient, hessian=hessian, sup_bound=abs(amp),
                center=center, length_scale=width, decay="gaussian", reach=reach)


def _plane_wave(n, params):
    k = _vector(params.pop("k", 1.0), n, "k")
    amp = float(params.pop("amplitude", 1.0))
    phase = float(params.pop("phase", 0.0))

    def arg(x):
        return _points(x, n) @ k + phase

    def value(x):
        return amp * np.cos(arg(x))

    def gradient(x):
        return -amp * np.sin(arg(x))[..., None] * k

    def hessian(x):
        return -amp * np.cos(arg(x))[..., None, None] * np.outer(k, k)

    norm = float(np.linalg.norm(k))
    return dict(value=value, gradient=gradient, hessian=hessian, sup_bound=abs(amp),
                center=np.zeros(n), length_scale=1.0 / norm if norm > 0 else 1.0,
                decay="none", wavevector=k)


def _bump_parts(n, center, radius):
    """Value, gradient and hessian of exp(1 - 1/(1 - |y|^2/R^2)) inside the ball."""

    def parts(x):
        y = (_points(x, n) - center) / radius
        q = np.sum(y * y, axis=-1)
        inside = q < 1.0
        gap = np.where(inside, 1.0 - q, 1.0)
        u = np.where(inside, np.exp(1.0 - 1.0 / gap), 0.0)
        g = -1.0 / gap ** 2          # d(log u)/dq
        dg = -2.0 / gap ** 3
        du = u * g                   # du/dq
        d2u = u * (g * g + dg)       # d2u/dq2
        grad = (2.0 * du / radius)[..., None] * y
        outer = np.einsum("...i,...j->...ij", y, y)
        hess = (4.0 * d2u / radius ** 2)[..., None, None] * outer \
            + (2.0 * du / radius ** 2)[..., None, None] * np.eye(n)
        grad = np.where(inside[..., None], grad, 0.0)
        hess = np.where(inside[..., None, None], hess, 0.0)
        return u, grad, hess

    return parts


def _bump(n, params):
    center = _vector(params.pop("center", 0.0), n, "center")
    radius = _positive(params, "radius", 1.0)
    amp = float(params.pop("amplitude", 1.0))
    parts = _bump_parts(n, center, radius)
    return dict(value=lambda x: amp * parts(x)[0],
                gradient=lambda x: amp * parts(x)[1],
                hessian=lambda x: amp * parts(x)[2],
                sup_bound=abs(amp), center=center, support_radius=radius,
                length_scale=radius / 4.0, decay="compact")


def _cutoff_quadratic(n, params):
    center = _vector(params.pop("center", 0.0), n, "center")
    radius = _positive(params, "radius", 2.0)
    matrix = np.asarray(params.pop("matrix", np.eye(n)), dtype=float).reshape(n, n)
    matrix = 0.5 * (matrix + matrix.T)
    vector = _vector(params.pop("vector", 0.0), n, "vector")
    offset = float(params.pop("offset", 0.0))
    parts = _bump_parts(n, center, radius)

    def quad_parts(x):
        y = _points(x, n) - center
        q = 0.5 * np.einsum("...i,ij,...j->...", y, matrix, y) + y @ vector + offset
        dq = y @ matrix + vector
        return q, dq

    def value(x):
        return quad_parts(x)[0] * parts(x)[0]

    def gradient(x):
        q, dq = quad_parts(x)
        chi, dchi, _ = parts(x)
        return dq * chi[..., None] + q[..., None] * dchi

    def hessian(x):
        q, dq = quad_parts(x)
        chi, dchi, hchi = parts(x)
        cross = np.einsum("...i,...j->...ij", dq, dchi)
        return matrix * chi[..., None, None] + cross + np.swapaxes(cross, -1, -2) \
            + q[..., None, None] * hchi

    bound = 0.5 * float(np.linalg.norm(matrix, 2)) * radius ** 2 \
        + float(np.linalg.norm(vector)) * radius + abs(offset)
    return dict(value=value, gradient=gradient, hessian=hessian, sup_bound=bound,
                center=center, support_radius=radius, length_scale=radius / 4.0, decay="compact")


def _indicator(n, params):
    lower = _vector(params.pop("lower", -1.0), n, "lower")
    upper = _vector(params.pop("upper", 1.0), n, "upper")
    if np.any(upper <= lower):
        raise BadParameter("indicator box needs lower < upper in every coordinate")

    def value(x):
        p = _points(x, n)
        return np.all((p >= lower) & (p <= upper), axis=-1).astype(float)

    def gradient(x):
        p = _points(x, n)
        return np.zeros(p.shape)

    def hessian(x):
        p = _points(x, n)
        return np.zeros(p.shape + (n,))

    return dict(value=value, gradient=gradient, hessian=hessian, sup_bound=1.0,
                center=0.5 * (lower + upper),
                support_radius=0.5 * float(np.linalg.norm(upper - lower)),
                length_scale=float(np.min(upper - lower)) / 4.0, smoothness="C0", decay="compact")


def _constant(n, params):
    c = float(params.pop("value", 1.0))
    return dict(value=lambda x: np.full(_points(x, n).shape[:-1], c),
                gradient=lambda x: np.zeros(_points(x, n).shape),
                hessian=lambda x: np.zeros(_points(x, n).shape + (n,)),
                sup_bound=abs(c), center=np.zeros(n))


def _linear(n, params):
    slope = _vector(params.pop("slope", 1.0), n, "slope")
    offset = float(params.pop("offset", 0.0))
    return dict(value=lambda x: _points(x, n) @ slope + offset,
                gradient=lambda x: np.broadcast_to(slope, _points(x, n).shape).copy(),
                hessian=lambda x: np.zeros(_points(x, n).shape + (n,)),
                sup_bound=math.inf if np.any(slope) else abs(offset), center=np.zeros(n))


_BUILDERS = {
    "gaussian": _gaussian,
    "plane-wave-cos": _plane_wave,
    "bump": _bump,
    "cutoff-quadratic": _cutoff_quadratic,
    "indicator": _indicator,
    "constant": _constant,
    "linear": _linear,
}

ALIASES = {"const": "constant", "cos": "plane-wave-cos"}


def builtin(name: str, dimension: int = 1, **params) -> TestFunction:
    """Build a catalog function; vector parameters broadcast scalars to n components."""
    name = ALIASES.get(name, name)
    if name not in _BUILDERS:
        raise UnknownFunction(f"unknown function '{name}', choose from {', '.join(CATALOG)}")
    n = int(dimension)
    if n < 1:
        raise BadParameter("dimension must be at least 1")
    remaining = dict(params)
    try:
        spec = _BUILDERS[name](n, remaining)
    except (TypeError, ValueError) as e:
        if isinstance(e, BadParameter):
            raise
        raise BadParameter(f"bad parameters for {name}: {e}")
    if remaining:
        raise BadParameter(f"unknown parameters for {name}: {', '.join(sorted(remaining))}")
    logger.debug(f"Built test function {name} in dimension {n} with {params}")
    return TestFunction(name=name, dimension=n, params=dict(params), **spec)


def linear_combination(terms: Sequence[Tuple[float, TestFunction]]) -> TestFunction:
    """sum_i c_i u_i with metadata merged conservatively."""
    terms = [(float(c), u) for c, u in terms]
    if not terms:
        raise BadParameter("empty combination")
    n = terms[0][1].dimension
    if any(u.dimension != n for _, u in terms):
        raise BadParameter("combined functions must share the dimension")

    def value(x):
        return sum(c * u.value(x) for c, u in terms)

    def gradient(x):
        return sum(c * u.gradient(x) for c, u in terms)

    def hessian(x):
        return sum(c * u.hessian(x) for c, u in terms)

    center = np.mean([u.center for _, u in terms], axis=0)
    decays = [u.decay for _, u in terms]
    if all(d == "compact" for d in decays):
        decay = "compact"
    elif all(d in ("compact", "gaussian") for d in decays):
        decay = "gaussian"
    else:
        decay = "none"
    offsets = [float(np.linalg.norm(u.center - center)) for _, u in terms]
    support = max(o + u.support_radius for o, (_, u) in zip(offsets, terms))

    def reach(tol):
        return max(o + u.effective_radius(tol / len(terms)) for o, (_, u) in zip(offsets, terms))

    wavevector = None
    waves = [u.wavevector for _, u in terms]
    if all(w is not None for w in waves) and all(np.array_equal(w, waves[0]) for w in waves):
        wavevector = waves[0]
    smoothness = min((u.smoothness for _, u in terms), key=SMOOTHNESS_ORDER.get)
    return TestFunction(
        name="+".join(u.name for _, u in terms), dimension=n, value=value, gradient=gradient,
        hessian=hessian, sup_bound=sum(abs(c) * u.sup_bound for c, u in terms), center=center,
        support_radius=support, length_scale=min(u.length_scale for _, u in terms),
        smoothness=smoothness, decay=decay, wavevector=wavevector,
        reach=reach if decay != "none" else None,
    )


def finite_difference_check(u: TestFunction, points, step: float = 1e-5):
    """Largest gradient and hessian mismatch against central differences.

    Errors are scaled by max(1, |analytic|) per point.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n = u.dimension
    eye = np.eye(n) * step
    grad_err = 0.0
    hess_err = 0.0
    for p in points:
        g = np.asarray(u.gradient(p), dtype=float).reshape(n)
        h = np.asarray(u.hessian(p), dtype=float).reshape(n, n)
        fd_g = np.array([(u.value(p + e) - u.value(p - e)) / (2 * step) for e in eye]).reshape(n)
        fd_h = np.array([(np.reshape(u.gradient(p + e), n) - np.reshape(u.gradient(p - e), n)) / (2 * step)
                         for e in eye])
        grad_err = max(grad_err, float(np.max(np.abs(fd_g - g))) / max(1.0, float(np.max(np.abs(g)))))
        hess_err = max(hess_err, float(np.max(np.abs(fd_h - h))) / max(1.0, float(np.max(np.abs(h)))))
    return grad_err, hess_err
