"""
Utilities for Certificate Reports

Common helpers shared by the experiment runners, the report writer and
the CLI: schema-version checks, float formatting and JSON coercion.
"""

import json
import math
import re
from typing import Any, Tuple

import numpy as np
from packaging import version


def parse_version(version_string: str) -> Tuple[int, int, int]:
    """Parse a version string into major, minor, patch components"""
    try:
        v = version.parse(str(version_string))
        return (v.major, v.minor, v.micro)
    except version.InvalidVersion:
        match = re.match(r"(\d+)(?:\.(\d+))?(?:\.(\d+))?", str(version_string))
        if match:
            return tuple(int(g) if g else 0 for g in match.groups())

    return (0, 0, 0)


def is_version_compatible(required: str, available: str, compatibility_mode: str = "major") -> bool:
    """
    Check whether a document written against `available` can be read by a
    tool expecting `required`.

    Args:
        required: Schema version the tool implements
        available: Schema version found in the document
        compatibility_mode: "exact", "minor" or "major"
    """
    if not required or not available:
        return False

    req_parts = parse_version(required)
    avail_parts = parse_version(available)

    if compatibility_mode == "exact":
        return req_parts == avail_parts
    elif compatibility_mode == "minor":
        return req_parts[0] == avail_parts[0] and avail_parts[1] <= req_parts[1]
    elif compatibility_mode == "major":
        return req_parts[0] == avail_parts[0]

    return False


def format_float(value: float) -> str:
    """Shortest decimal string that round-trips to the same double"""
    if value is None:
        return ""
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return repr(value)


def format_sig(value: float, digits: int = 17) -> str:
    """Fixed number of significant digits, as used in CSV sweeps"""
    if value is None:
        return ""
    value = float(value)
    if not math.isfinite(value):
        return format_float(value)
    return f"{value:.{digits}g}"


def to_jsonable(obj: Any) -> Any:
    """Recursively convert numpy scalars/arrays and tuples to JSON types"""
    if hasattr(obj, "to_dict") and not isinstance(obj, dict):
        return to_jsonable(obj.to_dict())
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        if math.isfinite(value):
            return value
        return format_float(value)
    return obj


def canonical_json(obj: Any) -> str:
    """Deterministic JSON: sorted keys, two-space indent, trailing newline"""
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def sanitize_filename(filename: str) -> str:
    """Sanitize filename for safe filesystem operations"""
    unsafe_chars = '<>:"/\\|?* '

    for char in unsafe_chars:
        filename = filename.replace(char, "_")

    filename = filename.strip(" ._")

    if len(filename) > 255:
        filename = filename[:255]

    return filename or "unnamed"


def format_duration(seconds: float) -> str:
    """Format a runtime estimate for listings"""
    if seconds < 1:
        return "< 1 s"
    elif seconds < 60:
        return f"~{seconds:.0f} s"
    else:
        return f"~{seconds / 60:.1f} min"
