"""Walk-on-spheres for the exterior Dirichlet problem L u = 0 in D, u = g outside D.

Each step draws a jump from the mean kernel of radius r = min(theta * dist(x), h_max);
the walk stops when it lands outside D and scores g there. Walks run in fixed-size
blocks whose generators are spawned from one seed, so results do not depend on the
number of workers.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy import integrate

from services.errors import (
    BadParameter,
    DegenerateRadius,
    DimensionMismatch,
    DomainError,
    StartOutsideDomain,
)
from services.funcs import TestFunction
from services.measure import SpectralMeasure, total_mass
from services.meankernel import MeanKernelParams, sample_jumps
from services.operator import check_order
from services.settings import load_defaults, worker_count

logger = logging.getLogger(__name__)

OUTSIDE_NUDGE = 1e-12


@dataclass(frozen=True)
class Domain:
    """A ball (center, radius) or an axis-aligned box (lower, upper)."""
    kind: str
    lower: np.ndarray
    upper: np.ndarray
    center: np.ndarray = field(default=None, repr=False)
    radius: float = 0.0

    @property
    def dimension(self) -> int:
        return len(self.lower)

    def signed_distance(self, points) -> np.ndarray:
        """Distance to the boundary for interior points, <= 0 outside."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == "ball":
            return self.radius - np.linalg.norm(p - self.center, axis=1)
        return np.min(np.minimum(p - self.lower, self.upper - p), axis=1)

    def contains(self, points) -> np.ndarray:
        return self.signed_distance(points) > 0.0

    def project_outside(self, points) -> np.ndarray:
        """Nearest point just outside the domain."""
        p = np.atleast_2d(np.asarray(points, dtype=float)).copy()
        if self.kind == "ball":
            offset = p - self.center
            norm = np.linalg.norm(offset, axis=1)
            at_center = norm == 0.0
            offset[at_center, 0] = 1.0
            norm[at_center] = 1.0
            return self.center + offset / norm[:, None] * self.radius * (1.0 + OUTSIDE_NUDGE)
        gaps = np.concatenate([p - self.lower, self.upper - p], axis=1)
        face = np.argmin(gaps, axis=1)
        rows = np.arange(len(p))
        axis = face % self.dimension
        low_side = face < self.dimension
        span = np.max(self.upper - self.lower) * OUTSIDE_NUDGE
        p[rows, axis] = np.where(low_side, self.lower[axis] - span, self.upper[axis] + span)
        return p

    @classmethod
    def ball(cls, center, radius: float) -> "Domain":
        center = np.atleast_1d(np.asarray(center, dtype=float))
        if not radius > 0:
            raise DomainError(f"ball radius must be positive, got {radius}")
        return cls(kind="ball", lower=center - radius, upper=center + radius,
                   center=center, radius=float(radius))

    @classmethod
    def box(cls, lower, upper) -> "Domain":
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        if lower.shape != upper.shape or np.any(upper <= lower):
            raise DomainError(f"box corners {lower.tolist()} and {upper.tolist()} do not bound a box")
        return cls(kind="box", lower=lower, upper=upper, center=0.5 * (lower + upper))

    def to_dict(self) -> dict:
        if self.kind == "ball":
            return {"kind": "ball", "center": self.center.tolist(), "radius": self.radius}
        return {"kind": "box", "lower": self.lower.tolist(), "upper": self.upper.tolist()}


def _floats(text: str):
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise DomainError(f"cannot read numbers from '{text}'")


def parse_domain(text: str) -> Domain:
    """'ball:<center>:<radius>' or 'box:<lo>:<hi>' with comma-separated vectors."""
    parts = text.split(":")
    if len(parts) != 3 or parts[0] not in ("ball", "box"):
        raise DomainError(f"domain must read ball:<center>:<radius> or box:<lo>:<hi>, got '{text}'")
    if parts[0] == "ball":
        radius = _floats(parts[2])
        if len(radius) != 1:
            raise DomainError("ball radius must be a single number")
        return Domain.ball(_floats(parts[1]), radius[0])
    return Domain.box(_floats(parts[1]), _floats(parts[2]))


@dataclass(frozen=True)
class WalkConfig:
    count: int = 10000
    max_steps: int = 1000
    theta: float = 1.0
    h_max: Optional[float] = None
    seed: int = 12345
    block_size: int = 4096

    def __post_init__(self):
        if self.count < 1 or self.max_steps < 1 or self.block_size < 1:
            raise BadParameter("walk count, step limit and block size must be positive")
        if not 0.0 < self.theta <= 1.0:
            raise BadParameter(f"theta must lie in (0, 1], got {self.theta}")
        if self.h_max is not None and not self.h_max > 0:
            raise BadParameter(f"h_max must be positive, got {self.h_max}")

    @classmethod
    def from_defaults(cls, **overrides) -> "WalkConfig":
        values = dict(load_defaults()["walks"])
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**{k: values[k] for k in cls.__dataclass_fields__ if k in values})


@dataclass(frozen=True)
class WalkStats:
    estimate: float
    stderr: float
    mean_len: float
    truncated_frac: float
    length_histogram: List[int]
    walks: int

    def to_dict(self) -> dict:
        return {
            "estimate": self.estimate,
            "stderr": self.stderr,
            "mean_len": self.mean_len,
            "truncated_frac": self.truncated_frac,
            "length_histogram": list(self.length_histogram),
            "walks": self.walks,
        }


def _walk_block(size, seed_seq, x, s, measure, domain, g, config):
    rng = np.random.default_rng(seed_seq)
    unit = MeanKernelParams(radius=1.0, s=s, measure=measure)
    pos = np.tile(x, (size, 1))
    scores = np.zeros(size)
    lengths = np.zeros(size, dtype=int)
    alive = np.ones(size, dtype=bool)
    for _ in range(config.max_steps):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        r = config.theta * domain.signed_distance(pos[idx])
        if config.h_max is not None:
            r = np.minimum(r, config.h_max)
        # radial law scales with r, so draw at r = 1 and rescale
        rho, omega, sign = sample_jumps(unit, rng, idx.size)
        pos[idx] = pos[idx] + (sign * rho * r)[:, None] * omega
        lengths[idx] += 1
        exited = ~domain.contains(pos[idx])
        out = idx[exited]
        if out.size:
            scores[out] = g.value(pos[out])
            alive[out] = False
    truncated = np.flatnonzero(alive)
    if truncated.size:
        scores[truncated] = g.value(domain.project_outside(pos[truncated]))
    return scores, lengths, truncated.size


def run_walks(measure: SpectralMeasure, s: float, domain: Domain, g: TestFunction, x,
              config: Optional[WalkConfig] = None) -> WalkStats:
    """Estimate u(x) for L u = 0 in the domain with exterior data g."""
    check_order(s)
    total_mass(measure)
    config = config or WalkConfig.from_defaults()
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if not (x.shape == (measure.dimension,) == (domain.dimension,)) or g.dimension != measure.dimension:
        raise DimensionMismatch("start point, domain, boundary data and measure must share a dimension")
    dist = float(domain.signed_distance(x)[0])
    if not dist >= 0.0:
        raise StartOutsideDomain(f"start point {x.tolist()} is not inside the domain")
    if dist == 0.0:
        raise DegenerateRadius(f"start point {x.tolist()} lies on the boundary, the first walk radius is 0")

    blocks = math.ceil(config.count / config.block_size)
    sizes = [config.block_size] * (blocks - 1) + [config.count - config.block_size * (blocks - 1)]
    seeds = np.random.SeedSequence(config.seed).spawn(blocks)
    workers = max(1, min(worker_count(), blocks))
    logger.info(f"Running {config.count} walks in {blocks} blocks on {workers} workers (s={s})")

    def task(i):
        return _walk_block(sizes[i], seeds[i], x, s, measure, domain, g, config)

    if workers == 1:
        results = [task(i) for i in range(blocks)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(task, range(blocks)))

    scores = np.concatenate([r[0] for r in results])
    lengths = np.concatenate([r[1] for r in results])
    truncated = sum(r[2] for r in results)
    if truncated:
        logger.warning(f"{truncated} of {config.count} walks hit the step limit {config.max_steps}")
    stderr = float(np.std(scores, ddof=1) / math.sqrt(len(scores))) if len(scores) > 1 else 0.0
    return WalkStats(estimate=float(np.mean(scores)), stderr=stderr, mean_len=float(np.mean(lengths)),
                     truncated_frac=truncated / config.count,
                     length_histogram=np.bincount(lengths).tolist(), walks=config.count)


def bias_scan(measure: SpectralMeasure, s: float, domain: Domain, g: TestFunction, x,
              caps: Sequence[float], config: Optional[WalkConfig] = None) -> List[Dict]:
    """Re-run the walks for each h_max cap and report successive differences."""
    config = config or WalkConfig.from_defaults()
    rows, previous = [], None
    for cap in caps:
        stats = run_walks(measure, s, domain, g, x, replace(config, h_max=float(cap)))
        rows.append({
            "h_max": float(cap),
            "estimate": stats.estimate,
            "stderr": stats.stderr,
            "mean_len": stats.mean_len,
            "difference": None if previous is None else stats.estimate - previous,
        })
        previous = stats.estimate
    return rows


def poisson_kernel_ball_1d(x: float, y: float, s: float, center: float = 0.0, radius: float = 1.0) -> float:
    """Poisson kernel of the interval (center - radius, center + radius) for the
    one-dimensional fractional operator: c ((R^2 - x^2) / (y^2 - R^2))^s / |x - y|."""
    check_order(s)
    xs, ys = x - center, y - center
    if abs(xs) >= radius or abs(ys) <= radius:
        raise DomainError("need |x| < R < |y| for the Poisson kernel")
    c = math.sin(math.pi * s) / math.pi
    return c * ((radius ** 2 - xs ** 2) / (ys ** 2 - radius ** 2)) ** s / abs(x - y)


def poisson_oracle_interval(x: float, lower: float, upper: float, s: float,
                            center: float = 0.0, radius: float = 1.0) -> float:
    """Harmonic measure of [lower, upper] (outside the interval) seen from x."""
    check_order(s)
    right, left = center + radius, center - radius
    if not (lower >= right or upper <= left) or upper <= lower:
        raise DomainError(f"[{lower}, {upper}] must lie outside the interval around {center}")
    if upper <= left:
        # mirror image about the center
        return poisson_oracle_interval(2.0 * center - x, 2.0 * center - upper, 2.0 * center - lower,
                                       s, center, radius)
    c = math.sin(math.pi * s) / math.pi * (radius ** 2 - (x - center) ** 2) ** s
    smooth = lambda y: c * (y - center + radius) ** (-s) / abs(x - y)
    if lower == right:
        value, _ = integrate.quad(smooth, lower, upper, weight="alg", wvar=(-s, 0.0),
                                  epsabs=1e-14, epsrel=1e-12)
    else:
        value, _ = integrate.quad(lambda y: smooth(y) * (y - right) ** (-s), lower, upper,
                                  epsabs=1e-14, epsrel=1e-12)
    return value
