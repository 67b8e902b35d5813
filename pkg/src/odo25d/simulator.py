"""Maneuver simulator: consistent sensor logs plus ground truth.

The simulated vehicle executes an exact constant-curvature arc over every
bus interval.  Interval yaw rate and speed are the trapezoid means of the
emitted channel samples, so trapezoid heading integration and the per-step
chord reconstruction used by the estimator reproduce the ground truth to
machine precision on noise-free output.  Maneuver scripts describe segments
of a continuous speed/curvature profile; the profile is realized as this
piecewise-arc motion at the bus rate.

Suspension response is quasi-static: body roll follows lateral acceleration
and body pitch follows longitudinal acceleration, tilting the height plane
about the sensor centroid.  Braking pitches the nose down, acceleration
lifts it; in a left-hand arc the left side rises.  Noise (yaw-rate sigma,
wheel tick quantization, suspension sigma) is applied after the ground
truth is captured and is deterministic for a fixed seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ManeuverError
from .ingest import (
    DIRECTION_CHANNEL,
    SUSPENSION_CHANNELS,
    WHEEL_CHANNELS,
    YAW_CHANNEL,
    ChannelStream,
    convert_to_physical,
)
from .planar import STRAIGHT_LINE_EPSILON, PlanarState, VehicleGeometry
from .suspension import SuspensionHeights, SuspensionPlane, fit_plane, suspension_delta
from .extrinsics import SensorExtrinsics, SensorPose, SuspensionDelta, compose_vehicle_pose, sensor_world_pose

DEFAULT_RATE = 50.0  # Hz; bus signals arrive every 10-20 ms
DEFAULT_METERS_PER_TICK = 0.023


@dataclass(frozen=True)
class Segment:
    """One maneuver segment.

    Speed ramps linearly from ``v0`` to ``v1`` (m/s, negative = reverse).
    Curvature (1/m, positive = left) is ``kappa`` plus an optional sinusoid
    ``kappa_amp * sin(kappa_omega * tau + kappa_phase)`` for slaloms.
    ``rear_icr_x`` shifts the turning centre forward of the rear axle to
    model adaptive rear steering (0 keeps the rear axle fixed).
    """

    duration: float
    v0: float
    v1: float
    kappa: float = 0.0
    kappa_amp: float = 0.0
    kappa_omega: float = 0.0
    kappa_phase: float = 0.0
    rear_icr_x: float = 0.0

    def __post_init__(self):
        if not (self.duration > 0.0 and math.isfinite(self.duration)):
            raise ManeuverError(f"segment duration must be positive, got {self.duration}")

    def speed(self, tau):
        return self.v0 + (self.v1 - self.v0) * (tau / self.duration)

    def curvature(self, tau):
        return self.kappa + self.kappa_amp * np.sin(self.kappa_omega * tau + self.kappa_phase)

    def accel(self) -> float:
        return (self.v1 - self.v0) / self.duration

    def max_curvature(self) -> float:
        return abs(self.kappa) + abs(self.kappa_amp)


@dataclass(frozen=True)
class ManeuverSpec:
    segments: tuple[Segment, ...]

    def __post_init__(self):
        if not self.segments:
            raise ManeuverError("maneuver needs at least one segment")

    def duration(self) -> float:
        return sum(s.duration for s in self.segments)


@dataclass(frozen=True)
class SuspensionResponse:
    """Quasi-static body response: settled heights plus roll/pitch gains.

    Gains are radians per m/s^2 of lateral (roll) and longitudinal (pitch)
    acceleration.
    """

    nominal: SuspensionHeights = field(default_factory=lambda: SuspensionHeights(0.3, 0.3, 0.3, 0.3))
    k_roll: float = 0.01
    k_pitch: float = 0.01

    def __post_init__(self):
        if self.k_roll < 0.0 or self.k_pitch < 0.0:
            raise ManeuverError("suspension response gains must be non-negative")


@dataclass(frozen=True)
class NoiseSpec:
    """Channel corruption applied after ground truth capture."""

    yaw_sigma: float = 0.0  # rad/s
    tick_quantization: float = 0.0  # metres per tick; 0 = continuous counts
    suspension_sigma: float = 0.0  # metres
    seed: int = 0

    def __post_init__(self):
        for name in ("yaw_sigma", "tick_quantization", "suspension_sigma"):
            if getattr(self, name) < 0.0:
                raise ManeuverError(f"noise {name} must be non-negative")

    @classmethod
    def defaults(cls, seed: int = 0) -> "NoiseSpec":
        """The stock noisy-vehicle profile used by the drift studies."""
        return cls(yaw_sigma=0.002, tick_quantization=0.023, suspension_sigma=0.001, seed=seed)


@dataclass(frozen=True)
class TruthTrajectory:
    """Ground truth at the sample times: planar pose plus body attitude."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    theta: np.ndarray
    roll: np.ndarray
    pitch: np.ndarray
    heave: np.ndarray


@dataclass
class SimulationResult:
    """Sensor channels (log units, ready for writing) plus ground truth."""

    channels: dict[str, ChannelStream]
    truth: TruthTrajectory
    clean_heights: np.ndarray  # (N, 4) metres, wheel order, noise free
    response: SuspensionResponse
    geometry: VehicleGeometry
    meters_per_tick: float
    rate: float


def _sample_grid(spec: ManeuverSpec, rate: float):
    """Global sample times plus per-sample and per-interval segment owners.

    Each segment contributes samples at multiples of the bus period and one
    at its exact end, so segment boundaries always land on a sample.  A
    boundary sample is owned by the ending segment.
    """
    dt = 1.0 / rate
    times = [0.0]
    sample_seg = [0]
    sample_tau = [0.0]
    interval_seg: list[int] = []
    t0 = 0.0
    for j, seg in enumerate(spec.segments):
        m = int(math.floor(seg.duration / dt + 1e-9))
        local = [i * dt for i in range(1, m + 1)]
        if local and local[-1] > seg.duration - 1e-12:
            local[-1] = seg.duration
        else:
            local.append(seg.duration)
        for tau in local:
            times.append(t0 + tau)
            sample_seg.append(j)
            sample_tau.append(tau)
            interval_seg.append(j)
        t0 += seg.duration
    return (
        np.array(times),
        np.array(sample_seg, dtype=int),
        np.array(sample_tau),
        np.array(interval_seg, dtype=int),
    )


def simulate(
    spec: ManeuverSpec,
    geom: VehicleGeometry,
    susp: SuspensionResponse | None = None,
    noise: NoiseSpec | None = None,
    rate: float = DEFAULT_RATE,
    meters_per_tick: float = DEFAULT_METERS_PER_TICK,
    *,
    allow_tight_turns: bool = False,
) -> SimulationResult:
    """Run a maneuver and emit sensor channels plus ground truth."""
    susp = susp if susp is not None else SuspensionResponse()
    noise = noise if noise is not None else NoiseSpec()
    if rate <= 0.0:
        raise ManeuverError(f"sample rate must be positive, got {rate}")
    if meters_per_tick <= 0.0:
        raise ManeuverError(f"meters_per_tick must be positive, got {meters_per_tick}")
    half_track = 0.5 * geom.track_width
    for j, seg in enumerate(spec.segments):
        if not allow_tight_turns and seg.max_curvature() * half_track >= 1.0:
            raise ManeuverError(
                f"segment {j}: curvature {seg.max_curvature():.4g} puts the turning centre "
                "inside the wheel track"
            )

    t, sample_seg, sample_tau, interval_seg = _sample_grid(spec, rate)
    n = len(t)

    # Per-sample profile values, evaluated in the owning segment.
    v = np.empty(n)
    kappa = np.empty(n)
    a_long = np.empty(n)
    for j, seg in enumerate(spec.segments):
        mask = sample_seg == j
        tau = sample_tau[mask]
        v[mask] = seg.speed(tau)
        kappa[mask] = seg.curvature(tau)
        a_long[mask] = seg.accel()
    omega = v * kappa

    # Interval quantities: the truth motion is an exact arc per interval with
    # the trapezoid-mean yaw rate and speed of its endpoint samples.
    dt_k = np.diff(t)
    omega_bar = 0.5 * (omega[:-1] + omega[1:])
    v_bar = 0.5 * (v[:-1] + v[1:])
    dtheta = omega_bar * dt_k
    straight = np.abs(dtheta) < STRAIGHT_LINE_EPSILON
    turning = ~straight

    icr_x = np.array([spec.segments[j].rear_icr_x for j in interval_seg])
    c_x = np.zeros(len(dt_k))
    c_y = np.zeros(len(dt_k))
    if turning.any():
        rho = v_bar[turning] / omega_bar[turning]  # signed datum radius
        offset = icr_x[turning]
        lateral_sq = rho**2 - offset**2
        if np.any(lateral_sq <= 0.0):
            raise ManeuverError("rear_icr_x exceeds the turning radius on some interval")
        lateral = np.sqrt(lateral_sq)
        side = np.where(rho >= 0.0, 1.0, -1.0)
        c_x[turning] = offset
        c_y[turning] = side * lateral
        if not allow_tight_turns and np.any(np.hypot(c_x[turning], c_y[turning]) <= half_track):
            raise ManeuverError("turning centre falls inside the wheel track")

    # Vehicle-frame chord of the datum arc (rigid rotation about the ICR).
    sin_d = np.sin(dtheta)
    cos_d = np.cos(dtheta)
    dx = np.where(straight, v_bar * dt_k, c_x * (1.0 - cos_d) + c_y * sin_d)
    dy = np.where(straight, 0.0, c_y * (1.0 - cos_d) - c_x * sin_d)

    theta = np.concatenate([[0.0], np.cumsum(dtheta)])
    c0 = np.cos(theta[:-1])
    s0 = np.sin(theta[:-1])
    x = np.concatenate([[0.0], np.cumsum(c0 * dx - s0 * dy)])
    y = np.concatenate([[0.0], np.cumsum(s0 * dx + c0 * dy)])

    # Unsigned wheel travel per interval: arc length at each wheel's distance
    # to the interval ICR (equal to datum travel when straight).
    wheel_xy = geom.wheel_positions()[:, :2]
    wheel_abs = np.empty((len(dt_k), 4))
    wheel_abs[straight] = np.abs(v_bar[straight] * dt_k[straight])[:, None]
    if turning.any():
        dist = np.hypot(
            wheel_xy[None, :, 0] - c_x[turning, None],
            wheel_xy[None, :, 1] - c_y[turning, None],
        )
        wheel_abs[turning] = np.abs(omega_bar[turning] * dt_k[turning])[:, None] * dist
    cumulative = np.vstack([np.zeros((1, 4)), np.cumsum(wheel_abs, axis=0)])

    direction = np.ones(n)
    interval_dir = np.where(v_bar >= 0.0, 1.0, -1.0)
    direction[1:] = interval_dir
    if n > 1:
        direction[0] = interval_dir[0]

    # Quasi-static suspension: the height plane tilts about the sensor
    # centroid with roll following lateral and pitch following longitudinal
    # acceleration (braking drops the nose, a left arc lifts the left side).
    sensor_xy = geom.suspension_positions()
    centroid_xy = sensor_xy.mean(axis=0)
    rel = sensor_xy - centroid_xy
    a_lat = v * omega
    pitch = -susp.k_pitch * a_long  # positive = nose down
    roll = susp.k_roll * a_lat  # positive = left side high
    h0 = susp.nominal.as_array()
    clean_heights = (
        h0[None, :]
        - rel[None, :, 0] * np.tan(pitch)[:, None]
        + rel[None, :, 1] * np.tan(roll)[:, None]
    )

    # Truth attitude, defined exactly as the estimator recovers it: plane
    # slope angles of the live fit relative to the nominal fit.  The fit is
    # linear in the heights, so slopes shift by exactly tan(pitch)/tan(roll).
    design = np.column_stack([sensor_xy, np.ones(4)])
    pinv = np.linalg.pinv(design)
    params0 = pinv @ h0
    params = clean_heights @ pinv.T  # (N, 3) rows (a, b, c)
    truth_roll = np.arctan(params[:, 1]) - math.atan(params0[1])
    truth_pitch = np.arctan(-params[:, 0]) - math.atan(-params0[0])
    heave = clean_heights.mean(axis=1) - h0.mean()

    truth = TruthTrajectory(t, x, y, theta, truth_roll, truth_pitch, heave)

    rng = np.random.default_rng(noise.seed)
    yaw_out = omega.copy()
    if noise.yaw_sigma > 0.0:
        yaw_out = yaw_out + rng.normal(0.0, noise.yaw_sigma, n)
    heights_out = clean_heights.copy()
    if noise.suspension_sigma > 0.0:
        heights_out = heights_out + rng.normal(0.0, noise.suspension_sigma, (n, 4))

    if noise.tick_quantization > 0.0:
        q = noise.tick_quantization
        ticks = np.floor(cumulative / q) * (q / meters_per_tick)
    else:
        ticks = cumulative / meters_per_tick

    channels: dict[str, ChannelStream] = {
        YAW_CHANNEL: ChannelStream(YAW_CHANNEL, t, yaw_out),
    }
    for i, channel in enumerate(WHEEL_CHANNELS):
        channels[channel] = ChannelStream(channel, t, ticks[:, i])
    # Heights arrays are in wheel order (rl, rr, fl, fr); channels are named.
    susp_columns = {"susp_rl": 0, "susp_rr": 1, "susp_fl": 2, "susp_fr": 3}
    for channel in SUSPENSION_CHANNELS:
        channels[channel] = ChannelStream(channel, t, heights_out[:, susp_columns[channel]] * 1000.0)
    channels[DIRECTION_CHANNEL] = ChannelStream(DIRECTION_CHANNEL, t, direction)

    return SimulationResult(
        channels=channels,
        truth=truth,
        clean_heights=clean_heights,
        response=susp,
        geometry=geom,
        meters_per_tick=meters_per_tick,
        rate=rate,
    )


def nominal_plane(result: SimulationResult) -> SuspensionPlane:
    """Reference plane of the simulated vehicle (fit of the settled heights)."""
    return fit_plane(result.response.nominal, result.geometry)


def true_suspension_delta(result: SimulationResult, k: int) -> SuspensionDelta:
    """Noise-free suspension delta at sample ``k`` (live plane vs settled)."""
    live = fit_plane(SuspensionHeights.from_array(result.clean_heights[k]), result.geometry)
    return suspension_delta(nominal_plane(result), live)


def physical_streams(result: SimulationResult) -> dict[str, ChannelStream]:
    """Channels converted to physical units, exactly as parsing the written
    log would produce them (same conversion arithmetic, bit for bit)."""
    return {
        channel: ChannelStream(
            channel, stream.times, convert_to_physical(channel, stream.values, result.meters_per_tick)
        )
        for channel, stream in result.channels.items()
    }


def ground_truth_sensor_pose(
    truth_pose: PlanarState,
    ext: SensorExtrinsics,
    delta: SuspensionDelta,
) -> SensorPose:
    """World pose of a mounted sensor under the true vehicle state.

    Same composition the estimator applies, fed with noise-free truth.
    """
    return sensor_world_pose(compose_vehicle_pose(ext, delta), truth_pose)


def truth_state(truth: TruthTrajectory, k: int) -> PlanarState:
    """Planar state at truth sample ``k``."""
    return PlanarState(np.array([truth.x[k], truth.y[k], 0.0]), float(truth.theta[k]))


# ---------------------------------------------------------------------------
# Maneuver scripts
#
# Line-oriented text, '#' comments.  One directive per line:
#
#   suspension h0=0.31 k_roll=0.01 k_pitch=0.01
#   segment duration=10 v=1.5 kappa=0.1
#   segment duration=8 v0=1.5 v1=0 kappa=0
#   segment duration=20 v=1 kappa_amp=0.1 kappa_omega=0.5 [kappa_phase=0]
#   segment duration=5 v=-0.5 kappa=0.05 icr_x=0.4
#
# Speed is either constant (v=) or a linear ramp (v0= and v1=).  The
# suspension directive is optional; h0 may also be given per corner as
# h0_fl/h0_fr/h0_rl/h0_rr.
# ---------------------------------------------------------------------------

_SEGMENT_KEYS = {"duration", "v", "v0", "v1", "kappa", "kappa_amp", "kappa_omega", "kappa_phase", "icr_x"}
_SUSPENSION_KEYS = {"h0", "h0_fl", "h0_fr", "h0_rl", "h0_rr", "k_roll", "k_pitch"}


def _parse_pairs(tokens, allowed, lineno):
    pairs = {}
    for token in tokens:
        if "=" not in token:
            raise ManeuverError(f"maneuver line {lineno}: expected key=value, got {token!r}")
        key, _, raw = token.partition("=")
        if key not in allowed:
            raise ManeuverError(f"maneuver line {lineno}: unknown key {key!r}")
        try:
            pairs[key] = float(raw)
        except ValueError:
            raise ManeuverError(f"maneuver line {lineno}: bad number {raw!r} for {key}") from None
    return pairs


def parse_maneuver(source) -> tuple[ManeuverSpec, SuspensionResponse]:
    """Parse a maneuver script from an iterable of lines or a file object."""
    segments: list[Segment] = []
    susp_pairs: dict[str, float] | None = None
    for lineno, raw in enumerate(source, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        directive = tokens[0]
        if directive == "segment":
            pairs = _parse_pairs(tokens[1:], _SEGMENT_KEYS, lineno)
            if "duration" not in pairs:
                raise ManeuverError(f"maneuver line {lineno}: segment needs a duration")
            if "v" in pairs and ("v0" in pairs or "v1" in pairs):
                raise ManeuverError(f"maneuver line {lineno}: give either v or v0/v1, not both")
            if "v" in pairs:
                v0 = v1 = pairs["v"]
            elif "v0" in pairs and "v1" in pairs:
                v0, v1 = pairs["v0"], pairs["v1"]
            else:
                raise ManeuverError(f"maneuver line {lineno}: segment needs v or both v0 and v1")
            try:
                segments.append(
                    Segment(
                        duration=pairs["duration"],
                        v0=v0,
                        v1=v1,
                        kappa=pairs.get("kappa", 0.0),
                        kappa_amp=pairs.get("kappa_amp", 0.0),
                        kappa_omega=pairs.get("kappa_omega", 0.0),
                        kappa_phase=pairs.get("kappa_phase", 0.0),
                        rear_icr_x=pairs.get("icr_x", 0.0),
                    )
                )
            except ManeuverError as exc:
                raise ManeuverError(f"maneuver line {lineno}: {exc}") from None
        elif directive == "suspension":
            susp_pairs = _parse_pairs(tokens[1:], _SUSPENSION_KEYS, lineno)
        else:
            raise ManeuverError(f"maneuver line {lineno}: unknown directive {directive!r}")
    spec = ManeuverSpec(tuple(segments))
    if susp_pairs is None:
        return spec, SuspensionResponse()
    base = susp_pairs.get("h0", 0.3)
    nominal = SuspensionHeights(
        fl=susp_pairs.get("h0_fl", base),
        fr=susp_pairs.get("h0_fr", base),
        rl=susp_pairs.get("h0_rl", base),
        rr=susp_pairs.get("h0_rr", base),
    )
    return spec, SuspensionResponse(
        nominal=nominal,
        k_roll=susp_pairs.get("k_roll", 0.01),
        k_pitch=susp_pairs.get("k_pitch", 0.01),
    )


def load_maneuver(path) -> tuple[ManeuverSpec, SuspensionResponse]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_maneuver(fh)


# ---------------------------------------------------------------------------
# Output files
# ---------------------------------------------------------------------------

_CHANNEL_ORDER = (YAW_CHANNEL,) + WHEEL_CHANNELS + SUSPENSION_CHANNELS + (DIRECTION_CHANNEL,)


def format_sensor_log(result: SimulationResult) -> str:
    """Log text: per sample time, one line per channel in a fixed order."""
    lines = ["# odo25d sensor log", "t,channel,value"]
    t = result.channels[YAW_CHANNEL].times
    columns = [(c, result.channels[c].values) for c in _CHANNEL_ORDER if c in result.channels]
    for k in range(len(t)):
        stamp = f"{t[k]:.17g}"
        for channel, values in columns:
            lines.append(f"{stamp},{channel},{values[k]:.17g}")
    return "\n".join(lines) + "\n"


def format_truth(truth: TruthTrajectory) -> str:
    lines = ["t,x,y,theta,phi,psi,heave"]
    for k in range(len(truth.t)):
        lines.append(
            ",".join(
                f"{v:.17g}"
                for v in (
                    truth.t[k],
                    truth.x[k],
                    truth.y[k],
                    truth.theta[k],
                    truth.roll[k],
                    truth.pitch[k],
                    truth.heave[k],
                )
            )
        )
    return "\n".join(lines) + "\n"
