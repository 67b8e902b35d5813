"""Heading from sampled yaw rate.

The yaw-rate sensor is the heading source (no steering model).  Between two
bus samples the integral of the yaw rate is approximated by the trapezoid
rule, which is exact whenever the underlying rate is linear in time.
Heading accumulates unbounded; wrap only when presenting.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import HeadingError

#: Largest tolerated spacing between consecutive yaw samples, seconds.
#: Bus signals arrive every 10-20 ms; anything beyond this voids the
#: constant-curvature assumption of the planar step.
DEFAULT_MAX_GAP = 0.5

#: Sanity bound on the yaw-rate magnitude, rad/s.
DEFAULT_MAX_RATE = 10.0


@dataclass(frozen=True)
class YawSample:
    """One yaw-rate reading: time in seconds, rate in rad/s (+ = left turn)."""

    t: float
    yaw_rate: float


@dataclass(frozen=True)
class HeadingState:
    """Accumulated heading plus the sample it was last advanced with."""

    theta: float
    last_sample: YawSample

    @classmethod
    def start(cls, sample: YawSample) -> "HeadingState":
        """Heading is zero at the first sample (the power-on frame)."""
        return cls(0.0, sample)


def step_heading(
    state: HeadingState,
    sample: YawSample,
    *,
    max_gap: float = DEFAULT_MAX_GAP,
    max_rate: float = DEFAULT_MAX_RATE,
) -> tuple[float, HeadingState]:
    """Advance heading by one sample; returns (delta_theta, new_state)."""
    prev = state.last_sample
    dt = sample.t - prev.t
    if dt < 0.0:
        raise HeadingError(f"time regression: sample at t={sample.t} after t={prev.t}")
    if dt > max_gap:
        raise HeadingError(f"sample gap: {dt:.6g} s between samples exceeds {max_gap:.6g} s")
    for s in (prev, sample):
        if abs(s.yaw_rate) >= max_rate:
            raise HeadingError(f"yaw rate {s.yaw_rate:.6g} rad/s at t={s.t} exceeds bound {max_rate:.6g}")
    delta_theta = 0.5 * (prev.yaw_rate + sample.yaw_rate) * dt
    return delta_theta, HeadingState(state.theta + delta_theta, sample)
