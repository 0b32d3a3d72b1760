"""Atomic artifact writers shared by the CLI and the figure emitter.

All numeric output is rendered with 17 significant digits so values
round-trip through text exactly; files are written to a temporary sibling
and renamed into place, and existing files are never clobbered without
force.
"""

from __future__ import annotations

import json
import os
import tempfile

import numpy as np

CSV_HEADER = ["u1", "u2", "u3", "x1", "x2", "x3", "t", "p", "stderr"]


def format_value(v) -> str:
    return f"{float(v):.17g}"


def write_text_atomic(path: str, text: str, force: bool = False) -> str:
    """Write text to path via a temporary file and rename."""
    path = os.fspath(path)
    if os.path.exists(path) and not force:
        raise FileExistsError(
            f"refusing to overwrite {path}; pass force to replace it")
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-",
                               suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def density_field_csv(field) -> str:
    """Render a DensityField as CSV; includes side when the field carries it."""
    header = list(CSV_HEADER)
    sides = field.side
    if sides is not None:
        header.append("side")
    lines = [",".join(header)]
    x = np.asarray(field.x, dtype=float)
    for i in range(len(field.values)):
        u = field.velocities[i]
        row = [format_value(u[0]), format_value(u[1]), format_value(u[2]),
               format_value(x[0]), format_value(x[1]), format_value(x[2]),
               format_value(field.t), format_value(field.values[i]),
               format_value(field.stderrs[i])]
        if sides is not None:
            row.append(sides[i])
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def json_text(payload) -> str:
    return json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n"
