"""Canonical JSON emission: sorted keys, compact separators, fixed float format.

Every on-disk JSON artifact (scanpath files, container metadata, score
reports, benchmark results) goes through this writer so identical inputs
always produce identical bytes.
"""

from __future__ import annotations

import json
import math


def format_float(x: float) -> str:
    """Format a float with 9 significant digits (shortest %g form)."""
    if not math.isfinite(x):
        raise ValueError(f"non-finite value in JSON payload: {x!r}")
    return f"{x:.9g}"


def round_sig(x: float) -> float:
    """Round to 9 significant digits, the precision stored on disk."""
    return float(f"{x:.9g}")


def canonical_json_bytes(obj) -> bytes:
    parts: list[str] = []
    _emit(obj, parts)
    parts.append("\n")
    return "".join(parts).encode("utf-8")


def _emit(obj, parts: list[str]) -> None:
    if obj is None:
        parts.append("null")
    elif isinstance(obj, bool):
        parts.append("true" if obj else "false")
    elif isinstance(obj, int):
        parts.append(repr(obj))
    elif isinstance(obj, float):
        parts.append(format_float(obj))
    elif isinstance(obj, str):
        parts.append(json.dumps(obj))
    elif isinstance(obj, dict):
        parts.append("{")
        for i, key in enumerate(sorted(obj)):
            if not isinstance(key, str):
                raise TypeError(f"JSON object keys must be strings, got {key!r}")
            if i:
                parts.append(",")
            parts.append(json.dumps(key))
            parts.append(":")
            _emit(obj[key], parts)
        parts.append("}")
    elif isinstance(obj, (list, tuple)):
        parts.append("[")
        for i, item in enumerate(obj):
            if i:
                parts.append(",")
            _emit(item, parts)
        parts.append("]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__} to canonical JSON")
