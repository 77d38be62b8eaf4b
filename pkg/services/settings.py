import json
import logging
import os
import sys
from pathlib import Path

from dotenv import load_dotenv

# Load environment variables
load_dotenv()

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

_BUILTIN_DEFAULTS = {
    "quadrature": {
        "inner_nodes": 48,
        "panel_nodes": 16,
        "sphere_nodes": 64,
        "sphere_polar": 16,
        "sphere_azimuth": 32,
        "grid_spacing": 0.05,
        "taylor_radius": 1e-4,
        "tolerance": 1e-6,
        "split_radius": 1.0,
    },
    "walks": {
        "count": 10000,
        "max_steps": 1000,
        "theta": 1.0,
        "h_max": None,
        "seed": 12345,
        "block_size": 4096,
    },
    "ladders": {
        "radii": [0.1, 0.05, 0.025, 0.0125, 0.00625],
        "s_to_one": [0.9, 0.99, 0.999, 0.9999],
        "bbm": [0.55, 0.65, 0.75, 0.85, 0.95, 0.99],
        "min_slope": 1.9,
    },
}

_defaults_cache = None


def load_defaults():
    """Load numeric defaults from config/defaults.json, section by section."""
    global _defaults_cache
    if _defaults_cache is not None:
        return _defaults_cache
    merged = {section: dict(values) for section, values in _BUILTIN_DEFAULTS.items()}
    try:
        config_path = Path(__file__).parent.parent / 'config' / 'defaults.json'
        with open(config_path, 'r') as f:
            config = json.load(f)
        for section, values in config.items():
            merged.setdefault(section, {}).update(values)
    except Exception as e:
        logger.warning(f"Using built-in defaults, could not read config: {str(e)}")
    _defaults_cache = merged
    return merged


def worker_count() -> int:
    try:
        return max(1, int(os.getenv("ANISOKERNEL_WORKERS", "1")))
    except ValueError:
        logger.warning("ANISOKERNEL_WORKERS is not an integer, using 1")
        return 1


def mass_bound() -> float:
    try:
        return float(os.getenv("ANISOKERNEL_MASS_BOUND", "1e6"))
    except ValueError:
        logger.warning("ANISOKERNEL_MASS_BOUND is not a number, using 1e6")
        return 1e6


def configure_logging(level=None):
    """Send logs to stderr and, unless disabled, to a log file."""
    level_name = level or os.getenv("ANISOKERNEL_LOG_LEVEL", "INFO")
    handlers = [logging.StreamHandler(sys.stderr)]
    log_file = os.getenv("ANISOKERNEL_LOG_FILE", "anisokernel.log")
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(
        level=getattr(logging, str(level_name).upper(), logging.INFO),
        format=LOG_FORMAT,
        handlers=handlers,
        force=True,
    )
