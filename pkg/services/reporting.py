"""JSON and CSV artifacts with floats written at 17 significant digits."""
import csv
import io
import json
import logging
import math
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

LADDER_HEADER = ["ladder", "computed", "target", "abs_err", "rel_err"]


def format_float(value: float) -> str:
    value = float(value)
    if not math.isfinite(value):
        return "null"
    text = format(value, ".17g")
    if "e" not in text and "." not in text:
        text += ".0"
    return text


def _plain(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if hasattr(value, "to_dict"):
        return value.to_dict()
    return value


def _encode(value, indent, level):
    value = _plain(value)
    pad = " " * (indent * (level + 1))
    close = " " * (indent * level)
    if isinstance(value, bool) or value is None:
        return json.dumps(value)
    if isinstance(value, float):
        return format_float(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in value.items()]
        return "{\n" + ",\n".join(items) + "\n" + close + "}"
    if isinstance(value, (list, tuple)):
        if not value:
            return "[]"
        if all(isinstance(_plain(v), (int, float)) and not isinstance(v, bool) for v in value):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in value) + "]"
        items = [f"{pad}{_encode(v, indent, level + 1)}" for v in value]
        return "[\n" + ",\n".join(items) + "\n" + close + "]"
    raise TypeError(f"cannot serialize {type(value).__name__}")


def to_json(payload, indent: int = 2) -> str:
    """Deterministic JSON text: keys in insertion order, floats with 17 digits."""
    return _encode(payload, indent, 0) + "\n"


def to_csv(rows: Iterable[Sequence], header: Sequence[str] = LADDER_HEADER) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buffer.getvalue()


def write_text(text: str, out: Optional[str] = None) -> str:
    """Write to ``out`` or return the text for stdout."""
    if out:
        Path(out).write_text(text)
        logger.info(f"Wrote {out}")
    return text
