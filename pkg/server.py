from mcp.server.fastmcp import FastMCP
from services.asymptotics import bbm_check, fit_expansion_order, local_limit_mean, local_limit_operator
from services.funcs import builtin
from services.measure import ellipticity, measure_from_dict, second_moment
from services.meankernel import MeanKernelParams, mean_value as mean_kernel_value
from services.operator import eval_operator as evaluate_operator
from services.settings import configure_logging, load_defaults
from services.wos import WalkConfig, parse_domain, run_walks
import logging
import json

# Configure logging
configure_logging()
logger = logging.getLogger(__name__)

mcp = FastMCP("Anisokernel-MCP-Server")


def _setup(measure: dict, fn: str, params: dict = None):
    mu = measure_from_dict(measure)
    u = builtin(fn, dimension=mu.dimension, **(params or {}))
    return mu, u


def _ladder(report) -> dict:
    return {
        "rows": report.to_rows(),
        "pass": report.passed,
        "final_rel_err": report.final_rel_err,
        **report.extras,
    }


@mcp.tool()
def measure_info(measure: dict, s: float = 0.5) -> dict:
    """
    Describe a spectral measure.
    Args:
        measure: Measure in the JSON file format ({"n", "kind", "atoms" | "density"})
        s: Order used for the ellipticity constant
    Returns:
        dict: total mass, moment matrix and ellipticity
    """
    try:
        mu = measure_from_dict(measure)
        moments = second_moment(mu)
        result = {
            "n": mu.dimension,
            "kind": mu.kind,
            "total_mass": mu.total_mass,
            "moment_matrix": moments.entries.tolist(),
        }
        if mu.dimension <= 3:
            lam = ellipticity(mu, s)
            result["ellipticity"] = {"value": lam.value, "direction": lam.direction.tolist()}
        return result
    except Exception as e:
        logger.error(f"Error in measure_info: {str(e)}", exc_info=True)
        return {"error": str(e)}


@mcp.tool()
def eval_operator(measure: dict, fn: str, x: list, s: float, params: dict = None) -> dict:
    """
    Evaluate the nonlocal operator L u(x).
    Args:
        measure: Spectral measure in the JSON file format
        fn: Catalog function name (gaussian, bump, plane-wave-cos, ...)
        x: Evaluation point
        s: Order in (0, 1)
        params: Function parameters
    Returns:
        dict: value, error_estimate and the quadrature pieces
    """
    try:
        logger.debug(f"eval_operator {fn} at {x}, s={s}")
        mu, u = _setup(measure, fn, params)
        return evaluate_operator(u, x, s, mu).to_dict()
    except Exception as e:
        logger.error(f"Error in eval_operator: {str(e)}", exc_info=True)
        return {"error": str(e)}


@mcp.tool()
def mean_value(measure: dict, fn: str, x: list, s: float, r: float, params: dict = None) -> dict:
    """
    Evaluate the mean kernel average M^s_r u(x).
    Args:
        measure: Spectral measure in the JSON file format
        fn: Catalog function name
        x: Evaluation point
        s: Order in (0, 1)
        r: Inner radius of the kernel, > 0
        params: Function parameters
    Returns:
        dict: value, error_estimate and the quadrature pieces
    """
    try:
        mu, u = _setup(measure, fn, params)
        return mean_kernel_value(u, x, MeanKernelParams(radius=r, s=s, measure=mu)).to_dict()
    except Exception as e:
        logger.error(f"Error in mean_value: {str(e)}", exc_info=True)
        return {"error": str(e)}


@mcp.tool()
def verify_expansion(measure: dict, fn: str, x: list, s: float, params: dict = None,
                     ladder: list = None) -> dict:
    """
    Fit the order of u - M^s_r u - c r^{2s} L u over a decreasing radius ladder.
    Args:
        measure: Spectral measure in the JSON file format
        fn: Catalog function name
        x: Evaluation point
        s: Order in (0, 1)
        params: Function parameters
        ladder: Decreasing radii (defaults from config)
    Returns:
        dict: radii, residuals, fitted slope, pass and vacuous flags
    """
    try:
        mu, u = _setup(measure, fn, params)
        fit = fit_expansion_order(u, x, s, mu, ladder=ladder)
        return {
            "radii": fit.radii,
            "residuals": fit.residuals,
            "slope": fit.slope,
            "pass": fit.passed,
            "vacuous": fit.vacuous,
        }
    except Exception as e:
        logger.error(f"Error in verify_expansion: {str(e)}", exc_info=True)
        return {"error": str(e)}


@mcp.tool()
def limit_s1(measure: dict, fn: str, x: list, params: dict = None, target: str = "operator",
             r: float = None, ladder: list = None) -> dict:
    """
    Follow (1-s) L u(x) (target "operator") or M^s_r u(x) (target "mean") as s -> 1.
    Args:
        measure: Spectral measure in the JSON file format
        fn: Catalog function name
        x: Evaluation point
        params: Function parameters
        target: "operator" or "mean"
        r: Radius, required for the mean target
        ladder: Increasing orders below 1 (defaults from config)
    Returns:
        dict: ladder rows, pass flag and the limit target
    """
    try:
        mu, u = _setup(measure, fn, params)
        if target == "mean":
            if r is None:
                return {"error": "radius r is required for the mean target"}
            return _ladder(local_limit_mean(u, x, r, mu, ladder))
        return _ladder(local_limit_operator(u, x, mu, ladder))
    except Exception as e:
        logger.error(f"Error in limit_s1: {str(e)}", exc_info=True)
        return {"error": str(e)}


@mcp.tool()
def bbm(measure: dict, fn: str, params: dict = None, ladder: list = None) -> dict:
    """
    Compare (1-s)[u]^2_{H^s} with [u]^2_{H^1} along an s ladder.
    Args:
        measure: Spectral measure in the JSON file format
        fn: Catalog function name
        params: Function parameters
        ladder: Orders in (0, 1) (defaults from config)
    Returns:
        dict: ladder rows, pass flag, the H^1 target and the uniform bound
    """
    try:
        mu, u = _setup(measure, fn, params)
        return _ladder(bbm_check(u, mu, ladder))
    except Exception as e:
        logger.error(f"Error in bbm: {str(e)}", exc_info=True)
        return {"error": str(e)}


@mcp.tool()
def solve_wos(measure: dict, domain: str, fn: str, point: list, s: float, params: dict = None,
              walks: int = None, seed: int = None, theta: float = None, hmax: float = None) -> dict:
    """
    Walk-on-spheres estimate for L u = 0 in the domain, u = g outside.
    Args:
        measure: Spectral measure in the JSON file format
        domain: "ball:<center>:<radius>" or "box:<lo>:<hi>"
        fn: Exterior data g as a catalog function
        point: Start point inside the domain
        s: Order in (0, 1)
        params: Function parameters
        walks: Number of walks
        seed: Base seed
        theta: Radius fraction in (0, 1]
        hmax: Cap on the step radius
    Returns:
        dict: estimate, stderr, mean walk length, truncated fraction and length histogram
    """
    try:
        mu, g = _setup(measure, fn, params)
        config = WalkConfig.from_defaults(count=walks, seed=seed, theta=theta, h_max=hmax)
        return run_walks(mu, s, parse_domain(domain), g, point, config).to_dict()
    except Exception as e:
        logger.error(f"Error in solve_wos: {str(e)}", exc_info=True)
        return {"error": str(e)}


@mcp.resource("anisokernel://defaults")
def defaults() -> dict:
    return load_defaults()


if __name__ == "__main__":
    logger.debug("Starting Anisokernel-MCP-Server...")
    try:
        logger.info("Initializing MCP server with stdio transport")
        mcp.run(transport="stdio")
    except json.JSONDecodeError as je:
        logger.error(f"JSON decode error: {str(je)}", exc_info=True)
        raise
