"""Trajectory comparison against a reference (simulator truth or DGPS export).

Both trajectories are anchored at their first common sample: translated so
it sits at the origin and, when both carry heading, rotated so the start
heading is zero.  That mirrors overlaying dead reckoning on a ground-truth
track from a shared origin and makes every metric invariant to a rigid
planar transform applied to both inputs.  The reference is resampled onto
the estimate timestamps by linear interpolation; no extrapolation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EvaluationError
from .geometry import wrap_angle


@dataclass(frozen=True)
class Trajectory:
    """Planar track: strictly increasing times, positions, optional heading."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    theta: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.t)
        if n == 0 or len(self.x) != n or len(self.y) != n:
            raise EvaluationError("trajectory arrays must be non-empty and equally long")
        if self.theta is not None and len(self.theta) != n:
            raise EvaluationError("theta array length mismatch")
        if np.any(np.diff(self.t) <= 0.0):
            raise EvaluationError("trajectory timestamps must be strictly increasing")


@dataclass(frozen=True)
class TrajectoryMetrics:
    """Drift summary; heading error is None when the reference has no heading."""

    endpoint_drift: float
    mean_position_error: float
    max_position_error: float
    path_length: float
    final_heading_error: float | None


def _anchor(x, y, theta):
    """Shift the track to start at the origin with zero start heading."""
    x = x - x[0]
    y = y - y[0]
    if theta is None:
        return x, y, None
    c, s = np.cos(-theta[0]), np.sin(-theta[0])
    return c * x - s * y, s * x + c * y, theta - theta[0]


def compare(estimated: Trajectory, reference: Trajectory) -> TrajectoryMetrics:
    """Drift metrics of an estimated trajectory against a reference."""
    lo = max(estimated.t[0], reference.t[0])
    hi = min(estimated.t[-1], reference.t[-1])
    keep = (estimated.t >= lo) & (estimated.t <= hi)
    if not keep.any():
        raise EvaluationError("no temporal overlap between estimate and reference")
    te = estimated.t[keep]

    ref_x = np.interp(te, reference.t, reference.x)
    ref_y = np.interp(te, reference.t, reference.y)
    ref_theta = None
    if reference.theta is not None:
        ref_theta = np.interp(te, reference.t, reference.theta)

    est_theta = estimated.theta[keep] if estimated.theta is not None else None
    both_have_theta = est_theta is not None and ref_theta is not None
    ex, ey, etheta = _anchor(estimated.x[keep], estimated.y[keep], est_theta if both_have_theta else None)
    rx, ry, rtheta = _anchor(ref_x, ref_y, ref_theta if both_have_theta else None)

    err = np.hypot(ex - rx, ey - ry)
    heading_error = None
    if both_have_theta:
        heading_error = wrap_angle(float(etheta[-1] - rtheta[-1]))
    return TrajectoryMetrics(
        endpoint_drift=float(err[-1]),
        mean_position_error=float(err.mean()),
        max_position_error=float(err.max()),
        path_length=float(np.hypot(np.diff(ex), np.diff(ey)).sum()),
        final_heading_error=heading_error,
    )


# ---------------------------------------------------------------------------
# Files: trajectories/references are CSV `t,x,y[,theta[,...]]`; extra columns
# (e.g. the simulator truth's phi/psi/heave) are ignored.  Metrics are
# written as key=value text.
# ---------------------------------------------------------------------------


def parse_trajectory(source) -> Trajectory:
    t, x, y, theta = [], [], [], []
    has_theta = None
    seen_data = False
    for lineno, raw in enumerate(source, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        try:
            values = [float(p) for p in parts]
        except ValueError:
            if not seen_data:
                continue  # header row
            raise EvaluationError(f"trajectory line {lineno}: bad number in {raw.strip()!r}") from None
        if len(values) < 3:
            raise EvaluationError(f"trajectory line {lineno}: need at least t,x,y")
        seen_data = True
        row_has_theta = len(values) >= 4
        if has_theta is None:
            has_theta = row_has_theta
        elif has_theta != row_has_theta:
            raise EvaluationError(f"trajectory line {lineno}: inconsistent column count")
        t.append(values[0])
        x.append(values[1])
        y.append(values[2])
        if has_theta:
            theta.append(values[3])
    if not seen_data:
        raise EvaluationError("trajectory file contains no data rows")
    return Trajectory(
        np.array(t),
        np.array(x),
        np.array(y),
        np.array(theta) if has_theta else None,
    )


def load_trajectory(path) -> Trajectory:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_trajectory(fh)


def format_metrics(metrics: TrajectoryMetrics) -> str:
    heading = "absent" if metrics.final_heading_error is None else f"{metrics.final_heading_error:.17g}"
    lines = [
        f"endpoint_drift_m={metrics.endpoint_drift:.17g}",
        f"mean_position_error_m={metrics.mean_position_error:.17g}",
        f"max_position_error_m={metrics.max_position_error:.17g}",
        f"path_length_m={metrics.path_length:.17g}",
        f"final_heading_error_rad={heading}",
    ]
    return "\n".join(lines) + "\n"


def overlay_svg(estimated: Trajectory, reference: Trajectory, width: int = 640, height: int = 480) -> str:
    """Deterministic SVG overlay of both anchored tracks with a start marker.

    Estimate in red, reference in blue, equal axis scales, origin marked.
    """
    both = estimated.theta is not None and reference.theta is not None
    ex, ey, _ = _anchor(estimated.x, estimated.y, estimated.theta if both else None)
    rx, ry, _ = _anchor(reference.x, reference.y, reference.theta if both else None)

    all_x = np.concatenate([ex, rx])
    all_y = np.concatenate([ey, ry])
    span = max(float(all_x.max() - all_x.min()), float(all_y.max() - all_y.min()), 1e-9)
    margin = 0.05 * span
    x0 = float(all_x.min()) - margin
    y0 = float(all_y.min()) - margin
    scale = (min(width, height) - 20) / (span + 2 * margin)

    def pixel(px, py):
        # y grows upward in world coordinates, downward in SVG.
        return 10 + (px - x0) * scale, height - 10 - (py - y0) * scale

    def polyline(xs, ys, colour):
        pts = " ".join("{:.2f},{:.2f}".format(*pixel(px, py)) for px, py in zip(xs, ys))
        return f'<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{pts}"/>'

    sx, sy = pixel(0.0, 0.0)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        polyline(rx, ry, "#1f4fd8"),
        polyline(ex, ey, "#d82626"),
        f'<circle cx="{sx:.2f}" cy="{sy:.2f}" r="4" fill="black"/>',
        f'<text x="12" y="18" font-family="monospace" font-size="12">estimate (red) vs reference (blue); '
        f'start at dot; span {span:.6g} m</text>',
        "</svg>",
    ]
    return "\n".join(parts) + "\n"
