"""Command-line entry point: one subcommand per toolkit operation.

Artifacts go to stdout (or --out); logs go to stderr. Exit codes: 0 success,
2 invalid input, 3 computed but not within the requested tolerance.
"""
import logging
import sys
from typing import Any, Dict, List, Optional

import click
import numpy as np
import pydantic
import typer

try:
    from typer._click import exceptions as typer_click
except ImportError:
    from click import exceptions as typer_click

from services import asymptotics, reporting
from services.errors import (BadParameter, ConfigParse, NumericalError, ToleranceExceeded,
                             UnknownSubcommand, ValidationError)
from services.funcs import builtin
from services.measure import ellipticity, load_measure, second_moment
from services.meankernel import MeanKernelParams, mean_value, sample_jumps
from services.operator import eval_operator
from services.quadrature import QuadratureSpec
from services.settings import configure_logging
from services.wos import WalkConfig, bias_scan, parse_domain, run_walks

logger = logging.getLogger(__name__)

app = typer.Typer(add_completion=False, no_args_is_help=True,
                  help="Anisotropic nonlocal operator toolkit.")

EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3

# typer may vendor its own click; usage errors can come from either copy
USAGE_ERRORS = (click.ClickException, typer_click.ClickException)
UNKNOWN_COMMAND = (click.exceptions.NoSuchCommand,
                   getattr(typer_click, "NoSuchCommand", click.exceptions.NoSuchCommand))


class ExperimentConfig(pydantic.BaseModel):
    """Numeric parameters of one run, checked before any computation starts."""
    model_config = pydantic.ConfigDict(extra="forbid")

    subcommand: str
    measure: Optional[str] = None
    fn: Optional[str] = None
    params: Dict[str, Any] = {}
    s: Optional[float] = pydantic.Field(default=None, gt=0.0, lt=1.0)
    r: Optional[float] = pydantic.Field(default=None, gt=0.0)
    x: Optional[List[float]] = None
    ladder: Optional[List[float]] = None
    inner_nodes: Optional[int] = pydantic.Field(default=None, ge=1, le=512)
    sphere_nodes: Optional[int] = pydantic.Field(default=None, ge=1)
    seed: Optional[int] = pydantic.Field(default=None, ge=0)
    tol: Optional[float] = pydantic.Field(default=None, gt=0.0)
    out: Optional[str] = None
    format: str = pydantic.Field(default="json", pattern="^(json|csv)$")

    @pydantic.field_validator("ladder")
    @classmethod
    def _ladder_nonempty(cls, value):
        if value is not None and not value:
            raise ValueError("ladder must not be empty")
        return value

    def quad(self) -> QuadratureSpec:
        return QuadratureSpec.from_defaults(inner_nodes=self.inner_nodes, sphere_nodes=self.sphere_nodes)


def _vector(text: Optional[str]) -> Optional[List[float]]:
    if text is None:
        return None
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigParse(f"cannot read a vector from '{text}'")


def _params(items: Optional[List[str]]) -> Dict[str, object]:
    params = {}
    for item in items or []:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigParse(f"--param expects key=value, got '{item}'")
        values = _vector(raw)
        if not values:
            raise ConfigParse(f"--param {key.strip()} has no value")
        params[key.strip()] = values if "," in raw else values[0]
    return params


def _config(**fields) -> ExperimentConfig:
    try:
        return ExperimentConfig(**fields)
    except pydantic.ValidationError as e:
        raise ConfigParse(f"invalid parameters: {e}")


def _function(config: ExperimentConfig, dimension: int):
    if not config.fn:
        raise BadParameter("--fn is required")
    return builtin(config.fn, dimension=dimension, **config.params)


def _emit(config: ExperimentConfig, payload: dict, rows=None, header=reporting.LADDER_HEADER):
    if config.format == "csv":
        if rows is None:
            raise BadParameter(f"{config.subcommand} has no CSV output")
        text = reporting.to_csv(rows, header)
    else:
        text = reporting.to_json(payload)
    reporting.write_text(text, config.out)
    if not config.out:
        typer.echo(text, nl=False)


def _check_tolerance(config: ExperimentConfig, error_estimate: float):
    if config.tol is not None and not error_estimate <= config.tol:
        raise ToleranceExceeded(f"error estimate {error_estimate} exceeds tolerance {config.tol}")


def _run(action):
    try:
        action()
    except ValidationError as e:
        logger.error(f"Invalid input: {str(e)}")
        raise typer.Exit(EXIT_VALIDATION)
    except NumericalError as e:
        logger.error(f"Numerical failure: {str(e)}")
        raise typer.Exit(EXIT_NUMERICAL)


@app.callback()
def main(log_level: Optional[str] = typer.Option(None, "--log-level", help="Overrides ANISOKERNEL_LOG_LEVEL.")):
    configure_logging(log_level)


@app.command("measure-info")
def measure_info(path: str = typer.Argument(..., help="Measure JSON file."),
                 s: float = typer.Option(0.5, "--s", help="Order for the ellipticity constant."),
                 out: Optional[str] = typer.Option(None, "--out")):
    """Total mass, moment matrix and ellipticity of a spectral measure."""
    def action():
        config = _config(subcommand="measure-info", measure=path, s=s, out=out)
        measure = load_measure(path)
        moments = second_moment(measure)
        payload = {
            "n": measure.dimension,
            "kind": measure.kind,
            "total_mass": measure.total_mass,
            "moment_matrix": moments.entries.tolist(),
            "trace": moments.trace,
            "symmetric": moments.is_symmetric(),
            "positive_semidefinite": moments.is_psd(),
        }
        if measure.dimension <= 3:
            result = ellipticity(measure, config.s)
            payload["ellipticity"] = {"s": config.s, "value": result.value,
                                      "direction": result.direction.tolist(),
                                      "refinement": result.refinement}
        _emit(config, payload)
    _run(action)


@app.command("eval-operator")
def eval_operator_cmd(measure: str = typer.Option(..., "--measure"),
                      fn: str = typer.Option(..., "--fn"),
                      param: Optional[List[str]] = typer.Option(None, "--param"),
                      x: str = typer.Option(..., "--x"),
                      s: float = typer.Option(..., "--s"),
                      split_radius: Optional[float] = typer.Option(None, "--split-radius"),
                      tail_cap: Optional[float] = typer.Option(None, "--tail-cap"),
                      inner_nodes: Optional[int] = typer.Option(None, "--inner-nodes"),
                      sphere_nodes: Optional[int] = typer.Option(None, "--sphere-nodes"),
                      tol: Optional[float] = typer.Option(None, "--tol"),
                      out: Optional[str] = typer.Option(None, "--out")):
    """L u(x) with its error estimate."""
    def action():
        config = _config(subcommand="eval-operator", measure=measure, fn=fn, params=_params(param),
                         x=_vector(x), s=s, inner_nodes=inner_nodes, sphere_nodes=sphere_nodes,
                         tol=tol, out=out)
        mu = load_measure(measure)
        u = _function(config, mu.dimension)
        result = eval_operator(u, config.x, config.s, mu, split_radius=split_radius,
                               quad=config.quad(), tail_cap=tail_cap)
        _emit(config, {"fn": fn, "x": config.x, "s": config.s, **result.to_dict()})
        _check_tolerance(config, result.error_estimate)
    _run(action)


@app.command("mean-value")
def mean_value_cmd(measure: str = typer.Option(..., "--measure"),
                   fn: str = typer.Option(..., "--fn"),
                   param: Optional[List[str]] = typer.Option(None, "--param"),
                   x: str = typer.Option(..., "--x"),
                   s: float = typer.Option(..., "--s"),
                   r: float = typer.Option(..., "--r"),
                   inner_nodes: Optional[int] = typer.Option(None, "--inner-nodes"),
                   sphere_nodes: Optional[int] = typer.Option(None, "--sphere-nodes"),
                   tol: Optional[float] = typer.Option(None, "--tol"),
                   out: Optional[str] = typer.Option(None, "--out")):
    """M^s_r u(x) with its error estimate."""
    def action():
        config = _config(subcommand="mean-value", measure=measure, fn=fn, params=_params(param),
                         x=_vector(x), s=s, r=r, inner_nodes=inner_nodes, sphere_nodes=sphere_nodes,
                         tol=tol, out=out)
        mu = load_measure(measure)
        u = _function(config, mu.dimension)
        result = mean_value(u, config.x, MeanKernelParams(radius=config.r, s=config.s, measure=mu),
                            config.quad())
        _emit(config, {"fn": fn, "x": config.x, "s": config.s, "r": config.r, **result.to_dict()})
        _check_tolerance(config, result.error_estimate)
    _run(action)


@app.command("sample-jump")
def sample_jump_cmd(measure: str = typer.Option(..., "--measure"),
                    s: float = typer.Option(..., "--s"),
                    r: float = typer.Option(..., "--r"),
                    count: int = typer.Option(1000, "--count", min=1),
                    seed: int = typer.Option(0, "--seed"),
                    fmt: str = typer.Option("csv", "--format"),
                    out: Optional[str] = typer.Option(None, "--out")):
    """Draw jumps (rho, omega, sign) from the mean kernel."""
    def action():
        config = _config(subcommand="sample-jump", measure=measure, s=s, r=r, seed=seed,
                         format=fmt, out=out)
        mu = load_measure(measure)
        rng = np.random.default_rng(config.seed)
        rho, omega, sign = sample_jumps(MeanKernelParams(radius=config.r, s=config.s, measure=mu), rng, count)
        header = ["rho"] + [f"omega_{i + 1}" for i in range(mu.dimension)] + ["sign"]
        rows = [[float(p)] + [float(c) for c in w] + [int(g)] for p, w, g in zip(rho, omega, sign)]
        _emit(config, {"s": config.s, "r": config.r, "seed": config.seed, "header": header, "rows": rows},
              rows=rows, header=header)
    _run(action)


@app.command("verify-expansion")
def verify_expansion_cmd(measure: str = typer.Option(..., "--measure"),
                         fn: str = typer.Option(..., "--fn"),
                         param: Optional[List[str]] = typer.Option(None, "--param"),
                         x: str = typer.Option(..., "--x"),
                         s: float = typer.Option(..., "--s"),
                         ladder: Optional[str] = typer.Option(None, "--ladder", help="Decreasing radii."),
                         min_slope: Optional[float] = typer.Option(None, "--min-slope"),
                         fmt: str = typer.Option("json", "--format"),
                         out: Optional[str] = typer.Option(None, "--out")):
    """Fit the order of the mean value expansion residual."""
    def action():
        config = _config(subcommand="verify-expansion", measure=measure, fn=fn, params=_params(param),
                         x=_vector(x), s=s, ladder=_vector(ladder), format=fmt, out=out)
        mu = load_measure(measure)
        u = _function(config, mu.dimension)
        fit = asymptotics.fit_expansion_order(u, config.x, config.s, mu, ladder=config.ladder,
                                              min_slope=min_slope)
        payload = {"fn": fn, "x": config.x, "s": config.s, "radii": fit.radii,
                   "residuals": fit.residuals, "slope": fit.slope, "fit_residual": fit.fit_residual,
                   "pass": fit.passed, "vacuous": fit.vacuous}
        _emit(config, payload, rows=[[r, e] for r, e in zip(fit.radii, fit.residuals)],
              header=["radius", "residual"])
        if not fit.passed:
            raise ToleranceExceeded(f"fitted slope {fit.slope} is below the required order")
    _run(action)


def _ladder_payload(report: asymptotics.LadderReport) -> dict:
    return {"rows": report.to_rows(), "pass": report.passed,
            "final_rel_err": report.final_rel_err, **report.extras}


@app.command("limit-s1")
def limit_s1_cmd(measure: str = typer.Option(..., "--measure"),
                 fn: str = typer.Option(..., "--fn"),
                 param: Optional[List[str]] = typer.Option(None, "--param"),
                 x: str = typer.Option(..., "--x"),
                 target: str = typer.Option("operator", "--target", help="operator or mean."),
                 r: Optional[float] = typer.Option(None, "--r", help="Radius for --target mean."),
                 ladder: Optional[str] = typer.Option(None, "--ladder"),
                 fmt: str = typer.Option("json", "--format"),
                 out: Optional[str] = typer.Option(None, "--out")):
    """The s -> 1 limits of (1-s) L u and of M^s_r u."""
    def action():
        config = _config(subcommand="limit-s1", measure=measure, fn=fn, params=_params(param),
                         x=_vector(x), r=r, ladder=_vector(ladder), format=fmt, out=out)
        mu = load_measure(measure)
        u = _function(config, mu.dimension)
        if target == "operator":
            report = asymptotics.local_limit_operator(u, config.x, mu, config.ladder)
        elif target == "mean":
            if config.r is None:
                raise BadParameter("--r is required for --target mean")
            report = asymptotics.local_limit_mean(u, config.x, config.r, mu, config.ladder)
        else:
            raise BadParameter(f"--target must be operator or mean, got '{target}'")
        _emit(config, {"fn": fn, "target_kind": target, **_ladder_payload(report)}, rows=report.to_rows())
        if not report.passed:
            raise ToleranceExceeded(f"final relative error {report.final_rel_err} is too large")
    _run(action)


@app.command("bbm")
def bbm_cmd(measure: str = typer.Option(..., "--measure"),
            fn: str = typer.Option(..., "--fn"),
            param: Optional[List[str]] = typer.Option(None, "--param"),
            ladder: Optional[str] = typer.Option(None, "--ladder"),
            fmt: str = typer.Option("json", "--format"),
            out: Optional[str] = typer.Option(None, "--out")):
    """(1-s)[u]^2_{H^s} against [u]^2_{H^1} along an s ladder."""
    def action():
        config = _config(subcommand="bbm", measure=measure, fn=fn, params=_params(param),
                         ladder=_vector(ladder), format=fmt, out=out)
        mu = load_measure(measure)
        u = _function(config, mu.dimension)
        report = asymptotics.bbm_check(u, mu, config.ladder)
        _emit(config, {"fn": fn, **_ladder_payload(report)}, rows=report.to_rows())
        if not report.passed:
            raise ToleranceExceeded(f"final relative error {report.final_rel_err} is too large")
    _run(action)


@app.command("seminorm")
def seminorm_cmd(measure: str = typer.Option(..., "--measure"),
                 fn: str = typer.Option(..., "--fn"),
                 param: Optional[List[str]] = typer.Option(None, "--param"),
                 s: float = typer.Option(..., "--s"),
                 method: str = typer.Option("tensor", "--method", help="tensor or monte-carlo."),
                 samples: int = typer.Option(200000, "--samples", min=2),
                 seed: int = typer.Option(0, "--seed"),
                 tol: Optional[float] = typer.Option(None, "--tol"),
                 out: Optional[str] = typer.Option(None, "--out")):
    """[u]_{H^s_a} by tensor quadrature or Monte Carlo."""
    def action():
        config = _config(subcommand="seminorm", measure=measure, fn=fn, params=_params(param),
                         s=s, seed=seed, tol=tol, out=out)
        mu = load_measure(measure)
        u = _function(config, mu.dimension)
        result = asymptotics.hs_seminorm(u, config.s, mu, method=method, samples=samples, seed=config.seed)
        _emit(config, {"fn": fn, "s": config.s, "method": result.method, "value": result.value,
                       "squared": result.squared, "error_estimate": result.error_estimate,
                       "truncation": result.truncation})
        _check_tolerance(config, result.error_estimate)
    _run(action)


@app.command("solve-wos")
def solve_wos_cmd(measure: str = typer.Option(..., "--measure"),
                  domain: str = typer.Option(..., "--domain", help="ball:<center>:<radius> or box:<lo>:<hi>."),
                  fn: str = typer.Option(..., "--fn", help="Exterior data g."),
                  param: Optional[List[str]] = typer.Option(None, "--param"),
                  s: float = typer.Option(..., "--s"),
                  point: str = typer.Option(..., "--point"),
                  walks: Optional[int] = typer.Option(None, "--walks", min=1),
                  seed: Optional[int] = typer.Option(None, "--seed"),
                  theta: Optional[float] = typer.Option(None, "--theta"),
                  hmax: Optional[float] = typer.Option(None, "--hmax"),
                  max_steps: Optional[int] = typer.Option(None, "--max-steps", min=1),
                  caps: Optional[str] = typer.Option(None, "--caps", help="h_max values for a bias scan."),
                  tol: Optional[float] = typer.Option(None, "--tol"),
                  out: Optional[str] = typer.Option(None, "--out")):
    """Walk-on-spheres estimate of the exterior Dirichlet problem at a point."""
    def action():
        config = _config(subcommand="solve-wos", measure=measure, fn=fn, params=_params(param),
                         x=_vector(point), s=s, seed=seed, tol=tol, out=out)
        mu = load_measure(measure)
        g = _function(config, mu.dimension)
        region = parse_domain(domain)
        walk_config = WalkConfig.from_defaults(count=walks, seed=config.seed, theta=theta,
                                               h_max=hmax, max_steps=max_steps)
        payload = {"fn": fn, "s": config.s, "point": config.x, "domain": region.to_dict()}
        cap_values = _vector(caps)
        if cap_values:
            payload["bias_scan"] = bias_scan(mu, config.s, region, g, config.x, cap_values, walk_config)
            _emit(config, payload)
            return
        stats = run_walks(mu, config.s, region, g, config.x, walk_config)
        payload.update(stats.to_dict())
        _emit(config, payload)
        _check_tolerance(config, stats.stderr)
    _run(action)


def run(argv: Optional[List[str]] = None) -> int:
    """Run the CLI on ``argv`` and return the exit code."""
    try:
        result = app(args=argv, standalone_mode=False)
    except USAGE_ERRORS as e:
        kind = UnknownSubcommand if isinstance(e, UNKNOWN_COMMAND) else ConfigParse
        logger.error(f"Invalid input: {kind(e.format_message())}")
        return EXIT_VALIDATION
    return result if isinstance(result, int) else 0


if __name__ == "__main__":
    sys.exit(run())
