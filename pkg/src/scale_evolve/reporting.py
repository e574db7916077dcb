"""Byte-stable report emission.

Reports must be reproducible bit for bit: keys are emitted in sorted
order and every float is rendered with 17 significant digits, enough to
round-trip IEEE doubles exactly.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import InvalidInput


def format_float(x: float) -> str:
    x = float(x)
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    if math.isnan(x):
        return '"nan"'
    return format(x, ".17g")


def _render(obj) -> str:
    if obj is None:
        return "null"
    if isinstance(obj, bool) or isinstance(obj, np.bool_):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(obj)
    if isinstance(obj, str):
        out = obj.replace("\\", "\\\\").replace('"', '\\"')
        out = out.replace("\n", "\\n").replace("\t", "\\t").replace("\r", "\\r")
        return f'"{out}"'
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_render(v) for v in obj) + "]"
    if isinstance(obj, dict):
        items = sorted(obj.items(), key=lambda kv: str(kv[0]))
        return (
            "{"
            + ",".join(f"{_render(str(k))}:{_render(v)}" for k, v in items)
            + "}"
        )
    raise InvalidInput(f"cannot serialize {type(obj).__name__}")


def dumps_stable(obj) -> str:
    """Canonical JSON: sorted keys, 17-significant-digit floats, no
    whitespace variation."""
    return _render(obj) + "\n"


def dumps_csv(rows: list[dict], columns: list[str]) -> str:
    """CSV with a fixed column order and the same float formatting."""
    def cell(v):
        if isinstance(v, (float, np.floating)):
            return format(float(v), ".17g")
        return str(v)

    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(cell(row[c]) for c in columns))
    return "\n".join(lines) + "\n"


def emit_report(result: dict, fmt: str, path: str | None) -> str:
    """Render and optionally write a report; returns the rendered text."""
    if fmt == "json":
        text = dumps_stable(result)
    elif fmt == "csv":
        rows = result.get("rows")
        columns = result.get("columns")
        if rows is None or columns is None:
            raise InvalidInput("csv output needs tabular 'rows'/'columns'")
        text = dumps_csv(rows, columns)
    else:
        raise InvalidInput(f"unknown format {fmt!r}")
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text
