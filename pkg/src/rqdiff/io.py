"""Deterministic number formatting for JSON and CSV output."""

from __future__ import annotations

import json
import math
from typing import Any, Iterable, Sequence


def fmt(x: Any) -> str:
    """Shortest round-trip decimal for floats; plain str otherwise."""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int,)) and not isinstance(x, bool):
        return str(x)
    if isinstance(x, float) or hasattr(x, "__float__"):
        xf = float(x)
        if math.isnan(xf):
            return "nan"
        if math.isinf(xf):
            return "inf" if xf > 0 else "-inf"
        return repr(xf)
    return str(x)


def _clean(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, int):
        return obj
    if hasattr(obj, "__float__"):
        xf = float(obj)
        # JSON has no nan/inf; emit them as strings
        if not math.isfinite(xf):
            return fmt(xf)
        return xf
    return str(obj)


def dumps(obj: Any) -> str:
    """JSON with sorted keys; floats use Python's shortest repr."""
    return json.dumps(_clean(obj), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def csv_text(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt(x) for x in row))
    return "\n".join(lines) + "\n"
