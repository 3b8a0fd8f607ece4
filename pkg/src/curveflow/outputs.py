"""File outputs of a run: step log, curve snapshots, summary, SVG plots.

All floating-point values are serialized with Python's shortest round-trip
representation, so logs are bit-reproducible across identical runs and
snapshots restart a computation without precision loss.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .errors import ConfigError
from .splines import ControlCurve, SplineSpace, curve_eval

__all__ = [
    "STEPS_HEADER",
    "SNAPSHOT_SAMPLES",
    "fmt",
    "write_steps_csv",
    "write_snapshot",
    "read_snapshot_points",
    "write_summary",
    "write_svg",
]

STEPS_HEADER = "n,t,dt,F0,F_area,F_length,lambda0,lambda_area,lambda_length,newton_iters,residual,wall_ms"
SNAPSHOT_SAMPLES = 512


def fmt(value) -> str:
    """Shortest round-trip decimal for floats; empty string for None."""
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_steps_csv(path, records, include_wall: bool = False) -> None:
    """One row per step record, with the fixed column set.

    Columns that do not apply to the scheme stay empty.  Wall-clock times are
    only written on request, since they would break bit-level reproducibility
    of otherwise identical runs.
    """
    lines = [STEPS_HEADER]
    for r in records:
        wall = r.wall_ms if include_wall else None
        lines.append(
            ",".join(
                (
                    str(r.n),
                    fmt(r.t),
                    fmt(r.dt),
                    fmt(r.f0),
                    fmt(r.f_area),
                    fmt(r.f_length),
                    fmt(r.lambda0),
                    fmt(r.lambda_area),
                    fmt(r.lambda_length),
                    fmt(r.newton_iters),
                    fmt(r.residual_norm),
                    fmt(wall),
                )
            )
        )
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines) + "\n")


def _sample(curve: ControlCurve, count: int) -> np.ndarray:
    return np.array([curve_eval(curve, k / count) for k in range(count)])


def write_snapshot(path, curve: ControlCurve, samples: int = SNAPSHOT_SAMPLES) -> None:
    """Control points plus uniformly sampled curve points, kind-tagged."""
    lines = ["kind,x,y"]
    for x, y in curve.points:
        lines.append(f"control,{fmt(float(x))},{fmt(float(y))}")
    for x, y in _sample(curve, samples):
        lines.append(f"sample,{fmt(float(x))},{fmt(float(y))}")
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines) + "\n")


def read_snapshot_points(path, space: SplineSpace) -> ControlCurve:
    """Rebuild a curve from the control rows of a snapshot file."""
    points = []
    with open(path, "r", encoding="utf-8") as handle:
        header = handle.readline().strip()
        if header != "kind,x,y":
            raise ConfigError(f"{path}: expected snapshot header 'kind,x,y', got {header!r}")
        for line in handle:
            line = line.strip()
            if not line:
                continue
            kind, x, y = line.split(",")
            if kind == "control":
                points.append((float(x), float(y)))
    if len(points) != space.n_basis:
        raise ConfigError(
            f"{path}: {len(points)} control points, but the space has {space.n_basis}"
        )
    return ControlCurve(space, np.array(points))


def write_summary(path, summary: dict) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(summary, handle, indent=2, sort_keys=True)
        handle.write("\n")


def write_svg(path, curve: ControlCurve, samples: int = SNAPSHOT_SAMPLES) -> None:
    """Static plot: closed curve polyline plus control-point circles.

    The viewBox fits the curve's bounding box with a 10% margin; the stroke
    width is 0.5% of the box diagonal.  The y axis is flipped so the picture
    uses the usual mathematical orientation.
    """
    pts = _sample(curve, samples)
    ctrl = np.asarray(curve.points)
    allpts = np.vstack([pts, ctrl])
    lo = allpts.min(axis=0)
    hi = allpts.max(axis=0)
    span = hi - lo
    margin = 0.1 * max(float(span[0]), float(span[1]), 1e-12)
    lo = lo - margin
    hi = hi + margin
    width, height = (hi - lo).tolist()
    diag = float(np.hypot(width, height))
    stroke = 0.005 * diag
    radius = 0.008 * diag

    def sx(x):
        return fmt(float(x - lo[0]))

    def sy(y):
        return fmt(float(hi[1] - y))

    poly = " ".join(f"{sx(x)},{sy(y)}" for x, y in pts)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {fmt(width)} {fmt(height)}">',
        f'<polygon points="{poly}" fill="none" stroke="black" stroke-width="{fmt(stroke)}"/>',
    ]
    for x, y in ctrl:
        parts.append(
            f'<circle cx="{sx(x)}" cy="{sy(y)}" r="{fmt(radius)}" fill="none" '
            f'stroke="black" stroke-width="{fmt(stroke)}"/>'
        )
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\n".join(parts) + "\n")


def ensure_dir(path) -> None:
    os.makedirs(path, exist_ok=True)
