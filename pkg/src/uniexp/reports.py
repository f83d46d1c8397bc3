"""JSON, CSV and SVG emitters.  Output depends only on the data, never on timing."""
from __future__ import annotations

import json
import math

import numpy as np

# anchor colours of a viridis-like ramp
_RAMP = [(68, 1, 84), (59, 82, 139), (33, 145, 140), (94, 201, 98), (253, 231, 37)]


def to_json(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, indent=2, allow_nan=True) + "\n"


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    return obj


def grid_csv(report) -> str:
    """One row per grid node: x, y, theta, value, stderr."""
    g = report.grid
    lines = ["x,y,theta,value,stderr"]
    xs, ys, ths = g.xs, g.ys, g.thetas
    vals, errs = report.values, report.stderr
    for i, x in enumerate(xs):
        for j, y in enumerate(ys):
            for t, th in enumerate(ths):
                lines.append(f"{x!r},{y!r},{th!r},{vals[i, j, t]!r},{errs[i, j, t]!r}")
    return "\n".join(lines) + "\n"


def trace_csv(reports) -> str:
    lines = ["N,mode,min_value,stderr_max,certified_lower_bound,passes"]
    for r in reports:
        bound = "" if r.certified_lower_bound is None else repr(r.certified_lower_bound)
        lines.append(f"{r.N},{r.mode},{r.min_value!r},{r.stderr_max!r},{bound},{int(r.passes)}")
    return "\n".join(lines) + "\n"


def matrix_csv(mat: np.ndarray) -> str:
    return "\n".join(",".join(repr(v) for v in row) for row in np.asarray(mat).tolist()) + "\n"


def rows_csv(header: list[str], rows) -> str:
    out = [",".join(header)]
    for row in rows:
        out.append(",".join(repr(v) if isinstance(v, float) else str(v) for v in row))
    return "\n".join(out) + "\n"


def _colour(u: float) -> str:
    if not math.isfinite(u):
        return "#000000"
    u = min(max(u, 0.0), 1.0) * (len(_RAMP) - 1)
    i = min(int(u), len(_RAMP) - 2)
    f = u - i
    r, g, b = (round(a + f * (c - a)) for a, c in zip(_RAMP[i], _RAMP[i + 1]))
    return f"#{r:02x}{g:02x}{b:02x}"


def heatmap_svg(mat: np.ndarray, title: str = "", size: int = 512) -> str:
    """Cell colours scaled between the matrix min and max; row index is x, column index is y."""
    mat = np.asarray(mat, dtype=float)
    nx, ny = mat.shape
    finite = mat[np.isfinite(mat)]
    lo, hi = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    span = hi - lo if hi > lo else 1.0
    w, h = size / nx, size / ny
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
             f'viewBox="0 0 {size} {size}">',
             f"<title>{title} (min {lo:.6g}, max {hi:.6g})</title>"]
    for i in range(nx):
        for j in range(ny):
            # y grows upwards on the torus
            parts.append(f'<rect x="{i * w:.3f}" y="{size - (j + 1) * h:.3f}" width="{w:.3f}" '
                         f'height="{h:.3f}" fill="{_colour((mat[i, j] - lo) / span)}"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
