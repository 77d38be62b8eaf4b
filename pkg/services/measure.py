import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Literal, Optional

import numpy as np
import pydantic
from scipy import optimize, special

from services.errors import (
    BadParameter,
    ConfigParse,
    DimensionMismatch,
    MassBoundExceeded,
    NegativeWeight,
    NonUnitDirection,
    NullMeasure,
    QuadratureUnderResolved,
    UnsupportedDimension,
)
from services.quadrature import QuadratureSpec, sphere_area, sphere_rule
from services.settings import mass_bound

logger = logging.getLogger(__name__)

UNIT_TOLERANCE = 1e-12
RENORMALIZE_TOLERANCE = 1e-9

KINDS = ("atomic", "density-grid", "uniform")


@dataclass(frozen=True)
class SpectralMeasure:
    """Finite nonnegative measure on the unit sphere of R^n.

    Atomic measures keep their atoms in ``directions``/``weights``; density
    grids keep the sample directions, the density values and the cell
    quadrature weights (``weights`` is their product). Uniform measures are
    discretized on demand by a sphere rule.
    """
    dimension: int
    kind: str
    directions: np.ndarray = field(default=None, repr=False)
    weights: np.ndarray = field(default=None, repr=False)
    densities: np.ndarray = field(default=None, repr=False)
    cell_weights: np.ndarray = field(default=None, repr=False)
    grid: Optional[str] = None

    @property
    def total_mass(self) -> float:
        if self.kind == "uniform":
            return sphere_area(self.dimension) if self.dimension > 1 else 2.0
        return float(np.sum(self.weights))

    def discretize(self, quad: Optional[QuadratureSpec] = None):
        """Directions and weights representing the measure as a finite sum."""
        if self.kind != "uniform":
            return self.directions, self.weights
        n = self.dimension
        if n == 1:
            return np.array([[1.0], [-1.0]]), np.ones(2)
        quad = quad or QuadratureSpec.from_defaults()
        if n == 2:
            rule = sphere_rule(2, quad.sphere_nodes)
        else:
            rule = sphere_rule(n, (quad.sphere_polar, quad.sphere_azimuth))
        return rule.directions, rule.weights

    def integrate(self, f, quad: Optional[QuadratureSpec] = None) -> float:
        directions, weights = self.discretize(quad)
        return float(np.dot(weights, f(directions)))

    def to_dict(self) -> dict:
        payload = {"n": self.dimension, "kind": self.kind}
        if self.kind == "atomic":
            payload["atoms"] = [{"dir": d.tolist(), "w": float(w)}
                                for d, w in zip(self.directions, self.weights)]
        elif self.kind == "density-grid":
            payload["density"] = {"grid": self.grid, "values": self.densities.tolist()}
        return payload


@dataclass(frozen=True)
class MomentMatrix:
    entries: np.ndarray

    @property
    def trace(self) -> float:
        return float(np.trace(self.entries))

    def is_symmetric(self, tol: float = 1e-12) -> bool:
        return bool(np.allclose(self.entries, self.entries.T, atol=tol, rtol=0.0))

    def is_psd(self, tol: float = 1e-12) -> bool:
        return bool(np.min(np.linalg.eigvalsh(self.entries)) >= -tol * max(1.0, self.trace))

    def pair(self, matrix) -> float:
        """Frobenius pairing sum_ij m_ij A_ij."""
        return float(np.sum(self.entries * np.asarray(matrix, dtype=float)))


@dataclass(frozen=True)
class ValidationReport:
    passed: bool
    checks: Dict[str, bool]
    messages: List[str]
    measure: SpectralMeasure
    total_mass: float


@dataclass(frozen=True)
class EllipticityResult:
    value: float
    direction: np.ndarray
    refinement: float
    s: float


# -- construction ------------------------------------------------------------

def atomic_measure(atoms) -> SpectralMeasure:
    """Measure from (direction, weight) pairs; not validated."""
    atoms = list(atoms)
    if not atoms:
        raise NullMeasure("atomic measure needs at least one atom")
    directions = np.array([np.atleast_1d(np.asarray(d, dtype=float)) for d, _ in atoms])
    weights = np.array([float(w) for _, w in atoms])
    if directions.ndim != 2:
        raise DimensionMismatch("atom directions have different lengths")
    return SpectralMeasure(dimension=directions.shape[1], kind="atomic",
                           directions=directions, weights=weights)


def uniform_measure(n: int) -> SpectralMeasure:
    if n < 1:
        raise DimensionMismatch("dimension must be at least 1")
    return SpectralMeasure(dimension=int(n), kind="uniform")


def _grid_cells(n: int, grid: str, count: int):
    if n == 2 and grid == "circle":
        rule = sphere_rule(2, count)
        return rule.directions, rule.weights
    if n == 3 and grid.startswith("sphere:"):
        try:
            polar, azimuth = (int(p) for p in grid.split(":", 1)[1].split("x"))
        except ValueError:
            raise ConfigParse(f"bad sphere grid description: {grid}")
        if polar * azimuth != count:
            raise DimensionMismatch(f"grid {grid} has {polar * azimuth} cells, got {count} values")
        rule = sphere_rule(3, (polar, azimuth))
        return rule.directions, rule.weights
    if n not in (2, 3):
        raise UnsupportedDimension(f"density measures exist for n in {{2, 3}}, got n={n}")
    raise ConfigParse(f"grid '{grid}' does not fit dimension {n}")


def density_measure(n: int, grid: str, values) -> SpectralMeasure:
    """Density samples on a named grid ('circle' for n=2, 'sphere:PxA' for n=3)."""
    values = np.asarray(values, dtype=float)
    directions, cell_weights = _grid_cells(n, grid, len(values))
    return SpectralMeasure(dimension=n, kind="density-grid", directions=directions,
                           weights=values * cell_weights, densities=values,
                           cell_weights=cell_weights, grid=grid)


def density_from_function(n: int, density, resolution) -> SpectralMeasure:
    """Sample a density function a(omega) on the default grid of dimension n."""
    if n == 2:
        grid = "circle"
        directions, _ = _grid_cells(2, grid, int(resolution))
    elif n == 3:
        polar, azimuth = resolution if isinstance(resolution, (tuple, list)) else (resolution, 2 * resolution)
        grid = f"sphere:{polar}x{azimuth}"
        directions, _ = _grid_cells(3, grid, polar * azimuth)
    else:
        raise UnsupportedDimension(f"density measures exist for n in {{2, 3}}, got n={n}")
    return density_measure(n, grid, density(directions))


# -- file format -------------------------------------------------------------

class _Atom(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(extra="forbid")
    dir: List[float]
    w: float


class _Density(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(extra="forbid")
    grid: str
    values: List[float]


class MeasureFile(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(extra="forbid")
    n: int = pydantic.Field(ge=1)
    kind: Literal["atomic", "density-grid", "uniform"]
    atoms: Optional[List[_Atom]] = None
    density: Optional[_Density] = None


def measure_from_dict(data: dict) -> SpectralMeasure:
    try:
        spec = MeasureFile.model_validate(data)
    except pydantic.ValidationError as e:
        raise ConfigParse(f"invalid measure description: {e}")
    if spec.kind == "atomic":
        if not spec.atoms:
            raise ConfigParse("atomic measure needs a non-empty 'atoms' list")
        measure = atomic_measure((a.dir, a.w) for a in spec.atoms)
    elif spec.kind == "density-grid":
        if spec.density is None:
            raise ConfigParse("density-grid measure needs a 'density' block")
        measure = density_measure(spec.n, spec.density.grid, spec.density.values)
    else:
        measure = uniform_measure(spec.n)
    if measure.dimension != spec.n:
        raise DimensionMismatch(f"declared n={spec.n} but directions have length {measure.dimension}")
    return validate(measure).measure


def load_measure(path) -> SpectralMeasure:
    """Read and validate a measure file."""
    try:
        with open(Path(path), 'r') as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        logger.error(f"Error reading measure file {path}: {str(e)}")
        raise ConfigParse(f"cannot read measure file {path}: {e}")
    return measure_from_dict(data)


# -- operations --------------------------------------------------------------

def validate(measure: SpectralMeasure, strict: bool = True) -> ValidationReport:
    """Check the measure invariants and renormalize nearly-unit directions.

    With ``strict`` the first failing invariant is raised; otherwise the
    report lists the failures.
    """
    checks = {}
    messages = []
    errors = []
    if measure.kind not in KINDS:
        raise ConfigParse(f"unknown measure kind {measure.kind}")

    normalized = measure
    if measure.kind != "uniform":
        directions = np.asarray(measure.directions, dtype=float)
        dims_ok = directions.ndim == 2 and directions.shape[1] == measure.dimension
        checks["dimension"] = dims_ok
        if not dims_ok:
            errors.append(DimensionMismatch(
                f"directions do not have length n={measure.dimension}"))
        else:
            norms = np.linalg.norm(directions, axis=1)
            off = np.abs(norms - 1.0)
            checks["unit_directions"] = bool(np.all(off <= RENORMALIZE_TOLERANCE))
            if not checks["unit_directions"]:
                worst = int(np.argmax(off))
                errors.append(NonUnitDirection(
                    f"direction {directions[worst].tolist()} has norm {norms[worst]}"))
            elif np.any(off > UNIT_TOLERANCE):
                messages.append("renormalized directions within 1e-9 of unit norm")
                normalized = replace(normalized, directions=directions / norms[:, None])
        values = measure.densities if measure.kind == "density-grid" else measure.weights
        checks["nonnegative"] = bool(np.all(np.asarray(values) >= 0))
        if not checks["nonnegative"]:
            errors.append(NegativeWeight(f"negative weight {float(np.min(values))}"))

    mass = normalized.total_mass if not errors else float("nan")
    checks["mass_bound"] = bool(not errors and mass <= mass_bound())
    if not errors and not checks["mass_bound"]:
        errors.append(MassBoundExceeded(f"total mass {mass} exceeds bound {mass_bound()}"))

    for e in errors:
        messages.append(str(e))
    passed = not errors
    if strict and errors:
        logger.debug(f"Measure validation failed: {messages}")
        raise errors[0]
    return ValidationReport(passed=passed, checks=checks, messages=messages,
                            measure=normalized, total_mass=mass)


def check_order(s: float):
    if not 0.0 < float(s) < 1.0:
        raise BadParameter(f"order s must lie in (0, 1), got {s}")


def total_mass(measure: SpectralMeasure) -> float:
    mass = measure.total_mass
    if mass <= 0:
        raise NullMeasure("measure has zero total mass")
    return mass


def _moments(directions, weights):
    return np.einsum("k,ki,kj->ij", weights, directions, directions)


def second_moment(measure: SpectralMeasure, quad: Optional[QuadratureSpec] = None) -> MomentMatrix:
    """m_ij = integral of omega_i omega_j da(omega)."""
    directions, weights = measure.discretize(quad)
    entries = _moments(directions, weights)
    if measure.kind == "density-grid":
        coarse = _coarse_grid_moments(measure)
        if coarse is not None:
            delta = float(np.max(np.abs(coarse - entries)))
            if delta > 1e-8 * max(1.0, measure.total_mass):
                raise QuadratureUnderResolved(
                    f"density grid {measure.grid} moments change by {delta} on the half grid")
    return MomentMatrix(entries=0.5 * (entries + entries.T))


def _coarse_grid_moments(measure: SpectralMeasure):
    # every other sample with doubled weight; None when the grid cannot be halved
    if measure.dimension == 2:
        count = len(measure.densities)
        if count % 2:
            return None
        idx = np.arange(0, count, 2)
        return _moments(measure.directions[idx], 2.0 * measure.weights[idx])
    polar, azimuth = (int(p) for p in measure.grid.split(":", 1)[1].split("x"))
    if azimuth % 2:
        return None
    idx = (np.arange(polar)[:, None] * azimuth + np.arange(0, azimuth, 2)[None, :]).ravel()
    return _moments(measure.directions[idx], 2.0 * measure.weights[idx])


def directional_moment(measure: SpectralMeasure, direction, s: float,
                       quad: Optional[QuadratureSpec] = None) -> np.ndarray:
    """Integral of |omega . direction|^{2s} da(omega), vectorized over directions."""
    directions, weights = measure.discretize(quad)
    bar = np.atleast_2d(np.asarray(direction, dtype=float))
    return np.abs(bar @ directions.T) ** (2.0 * s) @ weights


def _circle_minimum(measure, s, count, quad):
    theta = np.pi * np.arange(count) / count
    bars = np.column_stack([np.cos(theta), np.sin(theta)])
    values = directional_moment(measure, bars, s, quad)
    return theta, values


def _sphere_minimum(measure, s, count, quad):
    polar = 0.5 * np.pi * np.arange(count + 1) / count
    azimuth = 2.0 * np.pi * np.arange(2 * count) / (2 * count)
    tt, pp = np.meshgrid(polar, azimuth, indexing="ij")
    angles = np.column_stack([tt.ravel(), pp.ravel()])
    values = directional_moment(measure, _angles_to_direction(angles), s, quad)
    return angles, values


def _angles_to_direction(angles):
    angles = np.atleast_2d(angles)
    t, p = angles[:, 0], angles[:, 1]
    return np.column_stack([np.sin(t) * np.cos(p), np.sin(t) * np.sin(p), np.cos(t)])


def ellipticity(measure: SpectralMeasure, s: float, resolution: int = 360,
                quad: Optional[QuadratureSpec] = None) -> EllipticityResult:
    """Grid minimum of the 2s-directional moment followed by local refinement.

    The value is an upper bound on the infimum; ``refinement`` is the change of
    the grid minimum between ``resolution`` and twice that.
    """
    check_order(s)
    n = measure.dimension
    if n == 1:
        return EllipticityResult(value=total_mass(measure), direction=np.array([1.0]),
                                 refinement=0.0, s=s)
    if n == 2:
        _, coarse = _circle_minimum(measure, s, resolution, quad)
        theta, values = _circle_minimum(measure, s, 2 * resolution, quad)
        best = int(np.argmin(values))
        step = np.pi / (2 * resolution)
        found = optimize.minimize_scalar(
            lambda t: float(directional_moment(measure, [math.cos(t), math.sin(t)], s, quad)[0]),
            bounds=(theta[best] - step, theta[best] + step), method="bounded",
            options={"xatol": 1e-12})
        value, angle = float(values[best]), theta[best]
        if found.success and found.fun < value:
            value, angle = float(found.fun), float(found.x)
        direction = np.array([math.cos(angle), math.sin(angle)])
    elif n == 3:
        count = max(4, resolution // 4)
        _, coarse = _sphere_minimum(measure, s, count, quad)
        angles, values = _sphere_minimum(measure, s, 2 * count, quad)
        best = int(np.argmin(values))
        found = optimize.minimize(
            lambda a: float(directional_moment(measure, _angles_to_direction(a), s, quad)[0]),
            angles[best], method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-14})
        value, point = float(values[best]), angles[best]
        if found.success and found.fun < value:
            value, point = float(found.fun), found.x
        direction = _angles_to_direction(point)[0]
    else:
        raise UnsupportedDimension(f"ellipticity grid minimization supports n <= 3, got n={n}")
    refinement = abs(float(np.min(coarse)) - float(np.min(values)))
    logger.debug(f"Ellipticity s={s}: {value} (grid refinement {refinement})")
    return EllipticityResult(value=value, direction=direction, refinement=refinement, s=s)


def sample_directions(measure: SpectralMeasure, rng: np.random.Generator, count: int) -> np.ndarray:
    """Draw ``count`` directions distributed as da / total mass."""
    total_mass(measure)
    n = measure.dimension
    if measure.kind == "uniform":
        if n == 1:
            return np.where(rng.random(count) < 0.5, 1.0, -1.0)[:, None]
        g = rng.standard_normal((count, n))
        return g / np.linalg.norm(g, axis=1)[:, None]
    p = measure.weights / np.sum(measure.weights)
    idx = rng.choice(len(p), size=count, p=p)
    if measure.kind == "atomic":
        return measure.directions[idx].copy()
    if n == 2:
        cells = len(measure.densities)
        base = 2.0 * np.pi * idx / cells
        theta = base + (rng.random(count) - 0.5) * (2.0 * np.pi / cells)
        return np.column_stack([np.cos(theta), np.sin(theta)])
    polar, azimuth = (int(v) for v in measure.grid.split(":", 1)[1].split("x"))
    # Gauss-Legendre weights partition [-1, 1] into cells around each node
    _, wz = special.roots_legendre(polar)
    edges = np.concatenate([[-1.0], -1.0 + np.cumsum(wz)])
    i, j = np.divmod(idx, azimuth)
    z = edges[i] + rng.random(count) * (edges[i + 1] - edges[i])
    phi = 2.0 * np.pi * (j + rng.random(count) - 0.5) / azimuth
    ring = np.sqrt(np.clip(1.0 - z ** 2, 0.0, None))
    return np.column_stack([ring * np.cos(phi), ring * np.sin(phi), z])


def sample_direction(measure: SpectralMeasure, rng: np.random.Generator) -> np.ndarray:
    return sample_directions(measure, rng, 1)[0]
