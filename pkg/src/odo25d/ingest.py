"""Sensor-log parsing, unit conversion, and multi-rate channel alignment.

Log format: UTF-8 lines ``t_seconds,channel_id,value`` with ``#`` comments
and an optional ``t,channel,value`` header.  Wheel channels carry cumulative
tick counts (unsigned, fractional allowed); suspension channels carry
millimetres; ``yaw_rate`` carries rad/s; the optional ``direction`` channel
carries +1/-1 for forward/backward.

Bus channels arrive asynchronously, so alignment resamples everything onto
the yaw-rate clock (heading integration is defined on those timestamps).
Wheel counts are interpolated as cumulative distance and then differenced,
which preserves totals; the direction flag signs each per-step distance.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, fields

import numpy as np

from .errors import IngestError
from .planar import VehicleGeometry, WheelDistances
from .suspension import SuspensionHeights

log = logging.getLogger(__name__)

YAW_CHANNEL = "yaw_rate"
WHEEL_CHANNELS = ("wheel_rl", "wheel_rr", "wheel_fl", "wheel_fr")
SUSPENSION_CHANNELS = ("susp_fl", "susp_fr", "susp_rl", "susp_rr")
DIRECTION_CHANNEL = "direction"

REQUIRED_CHANNELS = (YAW_CHANNEL,) + WHEEL_CHANNELS + SUSPENSION_CHANNELS
KNOWN_CHANNELS = REQUIRED_CHANNELS + (DIRECTION_CHANNEL,)

ALIGNMENT_POLICIES = ("linear_interpolation", "nearest")


@dataclass
class ChannelStream:
    """One bus channel in physical units, timestamps strictly increasing."""

    channel_id: str
    times: np.ndarray
    values: np.ndarray


def convert_to_physical(channel_id: str, values: np.ndarray, meters_per_tick: float) -> np.ndarray:
    """Log units to physical units: wheel ticks to metres, millimetres to metres."""
    if channel_id in WHEEL_CHANNELS:
        return values * meters_per_tick
    if channel_id in SUSPENSION_CHANNELS:
        return values / 1000.0
    return values


@dataclass(frozen=True)
class OdometrySample:
    """One time-aligned record.

    ``distances`` hold the signed wheel travel since the previous sample
    (zero at the first sample).  ``heights`` is None when the log carries no
    suspension channels and alignment ran in planar-only mode.
    """

    t: float
    yaw_rate: float
    distances: WheelDistances
    heights: SuspensionHeights | None


def parse_log(source, meters_per_tick: float) -> dict[str, ChannelStream]:
    """Parse a sensor log into one stream per channel.

    ``source`` is an iterable of lines or an open text file.  Wheel ticks
    become cumulative metres (still unsigned; the direction flag is applied
    per step during alignment) and suspension millimetres become metres.
    Unknown channels are skipped with a warning; malformed lines and
    non-monotone timestamps raise with the offending line number.
    """
    if meters_per_tick <= 0.0:
        raise IngestError(f"meters_per_tick must be positive, got {meters_per_tick}")
    times: dict[str, list[float]] = {}
    values: dict[str, list[float]] = {}
    seen_data = False
    for lineno, raw in enumerate(source, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 3:
            raise IngestError(f"line {lineno}: expected 't,channel,value', got {raw.strip()!r}")
        try:
            t = float(parts[0])
        except ValueError:
            if not seen_data:
                continue  # header row
            raise IngestError(f"line {lineno}: bad timestamp {parts[0]!r}") from None
        channel = parts[1]
        try:
            value = float(parts[2])
        except ValueError:
            raise IngestError(f"line {lineno}: bad value {parts[2]!r}") from None
        seen_data = True
        if channel not in KNOWN_CHANNELS:
            log.warning("line %d: unknown channel %r skipped", lineno, channel)
            continue
        if channel == DIRECTION_CHANNEL and value not in (1.0, -1.0):
            raise IngestError(f"line {lineno}: direction must be +1 or -1, got {value}")
        bucket_t = times.setdefault(channel, [])
        if bucket_t and t <= bucket_t[-1]:
            raise IngestError(f"line {lineno}: non-monotone timestamp {t} in channel {channel!r}")
        bucket_t.append(t)
        values.setdefault(channel, []).append(value)
    streams: dict[str, ChannelStream] = {}
    for channel, ts in times.items():
        vs = convert_to_physical(channel, np.array(values[channel]), meters_per_tick)
        streams[channel] = ChannelStream(channel, np.array(ts), vs)
    return streams


def _resample_linear(stream: ChannelStream, t: np.ndarray) -> np.ndarray:
    return np.interp(t, stream.times, stream.values)


def _resample_nearest(stream: ChannelStream, t: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(stream.times, t, side="left")
    idx = np.clip(idx, 0, len(stream.times) - 1)
    prev = np.clip(idx - 1, 0, len(stream.times) - 1)
    # Ties go to the earlier sample.
    take_prev = (t - stream.times[prev]) <= (stream.times[idx] - t)
    take_prev &= idx > 0
    chosen = np.where(take_prev, prev, idx)
    return stream.values[chosen]


def align(
    streams: dict[str, ChannelStream],
    policy: str = "linear_interpolation",
    *,
    require_suspension: bool = True,
) -> list[OdometrySample]:
    """Resample all channels onto the yaw-rate clock.

    Master timestamps are restricted to the common time support of every
    present channel (no extrapolation).  The direction channel always uses
    nearest-sample resampling (it is a step signal); everything else follows
    ``policy``.  Missing required channels and an overlap shorter than two
    master samples raise.
    """
    if policy not in ALIGNMENT_POLICIES:
        raise IngestError(f"alignment policy must be one of {ALIGNMENT_POLICIES}, got {policy!r}")
    required = [YAW_CHANNEL, *WHEEL_CHANNELS]
    if require_suspension:
        required += list(SUSPENSION_CHANNELS)
    for channel in required:
        if channel not in streams:
            raise IngestError(f"missing required channel {channel!r}")
        if len(streams[channel].times) < 2:
            raise IngestError(f"channel {channel!r} needs at least 2 samples")

    active = [streams[c] for c in required]
    if DIRECTION_CHANNEL in streams:
        active.append(streams[DIRECTION_CHANNEL])
    lo = max(s.times[0] for s in active)
    hi = min(s.times[-1] for s in active)
    master = streams[YAW_CHANNEL].times
    keep = (master >= lo) & (master <= hi)
    t = master[keep]
    if len(t) < 2:
        raise IngestError("insufficient overlap: fewer than 2 master samples in the common window")

    resample = _resample_linear if policy == "linear_interpolation" else _resample_nearest
    yaw = streams[YAW_CHANNEL].values[keep]

    cumulative = np.column_stack([resample(streams[c], t) for c in WHEEL_CHANNELS])
    steps = np.vstack([np.zeros((1, 4)), np.diff(cumulative, axis=0)])
    if DIRECTION_CHANNEL in streams:
        direction = _resample_nearest(streams[DIRECTION_CHANNEL], t)
    else:
        direction = np.ones_like(t)
    steps = steps * direction[:, None]

    heights = None
    if require_suspension:
        heights = {c: resample(streams[c], t) for c in SUSPENSION_CHANNELS}

    samples = []
    for k in range(len(t)):
        h = None
        if heights is not None:
            h = SuspensionHeights(
                fl=float(heights["susp_fl"][k]),
                fr=float(heights["susp_fr"][k]),
                rl=float(heights["susp_rl"][k]),
                rr=float(heights["susp_rr"][k]),
            )
        samples.append(
            OdometrySample(
                t=float(t[k]),
                yaw_rate=float(yaw[k]),
                distances=WheelDistances(*(float(v) for v in steps[k])),
                heights=h,
            )
        )
    return samples


# ---------------------------------------------------------------------------
# Run configuration (JSON)
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    """Everything the pipeline needs besides the log and the calibration."""

    geometry: VehicleGeometry
    meters_per_tick: float = 0.023
    alignment_policy: str = "linear_interpolation"
    straightline_epsilon: float = 1e-6
    max_sample_gap: float = 0.5
    max_yaw_rate: float = 10.0
    settling_window: float = 2.0
    height_smoothing: int = 0


_GEOMETRY_KEYS = ("track_width", "wheelbase", "rear_steering", "suspension_xy")
_CONFIG_KEYS = tuple(f.name for f in fields(RunConfig) if f.name != "geometry")


def parse_config(text: str) -> RunConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise IngestError(f"config is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise IngestError("config must be a JSON object")
    unknown = set(data) - set(_GEOMETRY_KEYS) - set(_CONFIG_KEYS)
    if unknown:
        raise IngestError(f"unknown config keys: {sorted(unknown)}")
    if "track_width" not in data or "wheelbase" not in data:
        raise IngestError("config must provide track_width and wheelbase")
    suspension_xy = data.get("suspension_xy")
    if suspension_xy is not None:
        suspension_xy = tuple(tuple(float(v) for v in pair) for pair in suspension_xy)
    geometry = VehicleGeometry(
        track_width=float(data["track_width"]),
        wheelbase=float(data["wheelbase"]),
        rear_steering=data.get("rear_steering", "fixed"),
        suspension_xy=suspension_xy,
    )
    kwargs = {}
    for key in _CONFIG_KEYS:
        if key in data:
            cast = int if key == "height_smoothing" else (str if key == "alignment_policy" else float)
            kwargs[key] = cast(data[key])
    config = RunConfig(geometry=geometry, **kwargs)
    if config.alignment_policy not in ALIGNMENT_POLICIES:
        raise IngestError(f"alignment_policy must be one of {ALIGNMENT_POLICIES}")
    if config.meters_per_tick <= 0:
        raise IngestError("meters_per_tick must be positive")
    return config


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def save_config(path, config: RunConfig) -> None:
    data = {
        "track_width": config.geometry.track_width,
        "wheelbase": config.geometry.wheelbase,
        "rear_steering": config.geometry.rear_steering,
    }
    if config.geometry.suspension_xy is not None:
        data["suspension_xy"] = [list(p) for p in config.geometry.suspension_xy]
    for key in _CONFIG_KEYS:
        data[key] = getattr(config, key)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2)
        fh.write("\n")
