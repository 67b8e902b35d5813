"""End-to-end estimation: aligned samples -> trajectory, suspension, sensor poses.

Two equivalent drivers exist.  :func:`run_estimation` vectorizes the
fixed-rear-steer math over the whole stream (the hot path for logs with a
few hundred thousand samples).  :func:`run_estimation_stepwise` walks the
per-step operations one sample at a time; it is the reference the vectorized
path is tested against and the route taken for adaptive rear steering,
whose least-squares solve is iterative per step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import HeadingError, PlanarError
from .extrinsics import Calibration, compose_vehicle_pose, sensor_world_pose
from .geometry import rot_z
from .heading import HeadingState, YawSample, step_heading
from .ingest import OdometrySample, RunConfig
from .planar import (
    SPIN_EPSILON,
    PlanarState,
    WheelDistances,
    step_planar,
)
from .suspension import (
    SuspensionDelta,
    SuspensionHeights,
    SuspensionPlane,
    capture_reference,
    delta_angles,
    fit_plane,
    heave as plane_heave,
    plane_angles,
    suspension_delta,
)


@dataclass
class EstimationResult:
    """Estimated state at every aligned sample time.

    Suspension fields are None in planar-only runs; ``sensor_poses`` maps
    sensor id to (rotations (N,3,3), positions (N,3)) in the world frame and
    is empty without a calibration.
    """

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    theta: np.ndarray
    roll: np.ndarray | None
    pitch: np.ndarray | None
    heave: np.ndarray | None
    suspension_rotations: np.ndarray | None
    suspension_translations: np.ndarray | None
    sensor_poses: dict[str, tuple[np.ndarray, np.ndarray]]

    def planar_states(self) -> list[PlanarState]:
        return [
            PlanarState(np.array([self.x[k], self.y[k], 0.0]), float(self.theta[k]))
            for k in range(len(self.t))
        ]


def _sample_arrays(samples: list[OdometrySample]):
    t = np.array([s.t for s in samples])
    yaw = np.array([s.yaw_rate for s in samples])
    d = np.array([s.distances.as_array() for s in samples])
    heights = None
    if samples and all(s.heights is not None for s in samples):
        heights = np.array([s.heights.as_array() for s in samples])
    return t, yaw, d, heights


def _validate_stream(t: np.ndarray, yaw: np.ndarray, config: RunConfig) -> None:
    dt = np.diff(t)
    if np.any(dt < 0.0):
        k = int(np.argmax(dt < 0.0))
        raise HeadingError(f"time regression at sample {k + 1} (t={t[k + 1]} after t={t[k]})")
    if np.any(dt > config.max_sample_gap):
        k = int(np.argmax(dt > config.max_sample_gap))
        raise HeadingError(
            f"sample gap: {dt[k]:.6g} s at t={t[k]:.6g} exceeds {config.max_sample_gap:.6g} s"
        )
    if np.any(np.abs(yaw) >= config.max_yaw_rate):
        k = int(np.argmax(np.abs(yaw) >= config.max_yaw_rate))
        raise HeadingError(f"yaw rate {yaw[k]:.6g} rad/s at t={t[k]:.6g} exceeds bound")


def _smooth_trailing(values: np.ndarray, width: int) -> np.ndarray:
    """Trailing moving average; early rows use the partial window available."""
    if width <= 1:
        return values
    cum = np.cumsum(values, axis=0)
    out = np.empty_like(values)
    n = len(values)
    counts = np.minimum(np.arange(1, n + 1), width).astype(float)
    out[:width] = cum[:width] / counts[:width, None]
    out[width:] = (cum[width:] - cum[:-width]) / width
    return out


def _planar_vectorized(t, yaw, d, config: RunConfig):
    """Fixed-rear planar odometry over the whole stream at once."""
    geom = config.geometry
    dt = np.diff(t)
    dtheta = 0.5 * (yaw[:-1] + yaw[1:]) * dt
    step_d = d[1:]  # distances at sample k cover (t_{k-1}, t_k]

    straight = np.abs(dtheta) < config.straightline_epsilon
    spin = ~straight & (np.max(np.abs(step_d), axis=1) < SPIN_EPSILON)
    turning = ~straight & ~spin

    dx = np.where(straight, 0.5 * (step_d[:, 0] + step_d[:, 1]), 0.0)
    dy = np.zeros_like(dx)

    if turning.any():
        r = step_d[turning] / dtheta[turning, None]
        rear_vote = r[:, 0] + r[:, 1]
        total_vote = r.sum(axis=1)
        sign = np.where(rear_vote != 0.0, np.sign(rear_vote), np.sign(total_vote))
        sign = np.where(sign == 0.0, 1.0, sign)

        w = geom.track_width
        l = geom.wheelbase
        half = 0.5 * w
        est = np.full_like(r, np.nan)
        rear_ok = np.abs(r[:, :2]) > half
        est[:, 0] = np.where(rear_ok[:, 0], sign * np.abs(r[:, 0]) + half, np.nan)
        est[:, 1] = np.where(rear_ok[:, 1], sign * np.abs(r[:, 1]) - half, np.nan)
        front_sq = r[:, 2:] ** 2 - l**2
        with np.errstate(invalid="ignore"):
            est[:, 2] = np.where(front_sq[:, 0] >= 0.0, sign * np.sqrt(np.maximum(front_sq[:, 0], 0.0)) + half, np.nan)
            est[:, 3] = np.where(front_sq[:, 1] >= 0.0, sign * np.sqrt(np.maximum(front_sq[:, 1], 0.0)) - half, np.nan)
        usable = np.isfinite(est)
        if not usable.any(axis=1).all():
            k = int(np.argmin(usable.any(axis=1)))
            step = np.flatnonzero(turning)[k] + 1
            raise PlanarError(f"ICR inside wheelbase at sample {step} (t={t[step]:.6g})")
        datum = np.nanmean(est, axis=1)
        sin_d = np.sin(dtheta[turning])
        cos_d = np.cos(dtheta[turning])
        dx[turning] = datum * sin_d
        dy[turning] = datum * (1.0 - cos_d)

    theta = np.concatenate([[0.0], np.cumsum(dtheta)])
    c0 = np.cos(theta[:-1])
    s0 = np.sin(theta[:-1])
    x = np.concatenate([[0.0], np.cumsum(c0 * dx - s0 * dy)])
    y = np.concatenate([[0.0], np.cumsum(s0 * dx + c0 * dy)])
    return x, y, theta


def _rotations_from_normals(normals: np.ndarray, n_ref: np.ndarray) -> np.ndarray:
    """Batch Rodrigues: rotations mapping each live normal onto the reference.

    Vectorized version of geometry.rotation_between_normals; near-parallel
    rows return exact identities.
    """
    n = len(normals)
    axis = np.cross(normals, n_ref[None, :])
    s = np.linalg.norm(axis, axis=1)
    c = normals @ n_ref
    out = np.broadcast_to(np.eye(3), (n, 3, 3)).copy()
    active = s >= 1e-12
    if active.any():
        a = axis[active] / s[active, None]
        zeros = np.zeros(int(active.sum()))
        k = np.stack(
            [
                np.stack([zeros, -a[:, 2], a[:, 1]], axis=1),
                np.stack([a[:, 2], zeros, -a[:, 0]], axis=1),
                np.stack([-a[:, 1], a[:, 0], zeros], axis=1),
            ],
            axis=1,
        )
        kk = k @ k
        out[active] = (
            np.eye(3)[None, :, :] + s[active, None, None] * k + (1.0 - c[active, None, None]) * kk
        )
    return out


def _suspension_batch(heights: np.ndarray, reference: SuspensionPlane, config: RunConfig):
    """Per-sample plane fits and deltas, vectorized over the stream."""
    geom = config.geometry
    xy = geom.suspension_positions()
    design = np.column_stack([xy, np.ones(4)])
    pinv = np.linalg.pinv(design)
    params = heights @ pinv.T  # rows (a, b, c)

    ref_roll, ref_pitch = plane_angles(reference)
    roll = np.arctan(params[:, 1]) - ref_roll
    pitch = np.arctan(-params[:, 0]) - ref_pitch

    normals = np.column_stack([-params[:, 0], -params[:, 1], np.ones(len(params))])
    normals /= np.linalg.norm(normals, axis=1)[:, None]
    rotations = _rotations_from_normals(normals, reference.normal)

    centroid_z = heights.mean(axis=1)
    heave = centroid_z - reference.reference_point[2]
    translations = np.zeros((len(params), 3))
    translations[:, 2] = reference.reference_point[2] - centroid_z
    return roll, pitch, heave, rotations, translations


def _sensor_batch(calibration: Calibration, rotations, translations, x, y, theta):
    """World poses for every calibrated sensor at every sample."""
    n = len(theta)
    cos_t = np.cos(theta)
    sin_t = np.sin(theta)
    r_vw = np.zeros((n, 3, 3))
    r_vw[:, 0, 0] = cos_t
    r_vw[:, 0, 1] = -sin_t
    r_vw[:, 1, 0] = sin_t
    r_vw[:, 1, 1] = cos_t
    r_vw[:, 2, 2] = 1.0
    p_w = np.column_stack([x, y, np.zeros(n)])

    poses = {}
    for sensor_id, ext in calibration.sensors.items():
        rot_v = np.einsum("ij,njk->nik", ext.rotation, rotations)
        pos_v = np.einsum("nij,nj->ni", rotations, ext.position[None, :] + translations)
        rot_w = np.einsum("nij,nkj->nik", rot_v, r_vw)  # rot_v @ r_vw.T per sample
        pos_w = np.einsum("nij,nj->ni", r_vw, pos_v) + p_w
        poses[sensor_id] = (rot_w, pos_w)
    return poses


def resolve_reference_plane(
    samples: list[OdometrySample],
    config: RunConfig,
    calibration: Calibration | None,
    reference_plane: SuspensionPlane | None,
) -> SuspensionPlane:
    """Reference plane priority: explicit arg, calibration file, settled log start."""
    if reference_plane is not None:
        return reference_plane
    if calibration is not None:
        return calibration.reference_plane
    return capture_reference(samples, config.geometry, config.settling_window)


def run_estimation(
    samples: list[OdometrySample],
    config: RunConfig,
    *,
    calibration: Calibration | None = None,
    reference_plane: SuspensionPlane | None = None,
    planar_only: bool = False,
) -> EstimationResult:
    """Full estimation over an aligned sample stream."""
    if len(samples) < 2:
        raise PlanarError("need at least 2 aligned samples")
    t, yaw, d, heights = _sample_arrays(samples)
    _validate_stream(t, yaw, config)

    if config.geometry.rear_steering == "adaptive":
        x, y, theta = _planar_stepwise(samples, config)
    else:
        x, y, theta = _planar_vectorized(t, yaw, d, config)

    roll = pitch = heave = rotations = translations = None
    use_suspension = not planar_only and heights is not None
    if use_suspension:
        heights = _smooth_trailing(heights, config.height_smoothing)
        reference = resolve_reference_plane(samples, config, calibration, reference_plane)
        roll, pitch, heave, rotations, translations = _suspension_batch(heights, reference, config)

    sensor_poses: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    if calibration is not None and calibration.sensors:
        if use_suspension:
            rot_susp, t_susp = rotations, translations
        else:
            # Planar-only: compose with the identity suspension state.
            rot_susp = np.broadcast_to(np.eye(3), (len(t), 3, 3)).copy()
            t_susp = np.zeros((len(t), 3))
        sensor_poses = _sensor_batch(calibration, rot_susp, t_susp, x, y, theta)

    return EstimationResult(
        t=t,
        x=x,
        y=y,
        theta=theta,
        roll=roll,
        pitch=pitch,
        heave=heave,
        suspension_rotations=rotations,
        suspension_translations=translations,
        sensor_poses=sensor_poses,
    )


def _planar_stepwise(samples: list[OdometrySample], config: RunConfig):
    state = PlanarState.origin()
    heading = HeadingState.start(YawSample(samples[0].t, samples[0].yaw_rate))
    xs = [0.0]
    ys = [0.0]
    thetas = [0.0]
    for sample in samples[1:]:
        delta_theta, heading = step_heading(
            heading,
            YawSample(sample.t, sample.yaw_rate),
            max_gap=config.max_sample_gap,
            max_rate=config.max_yaw_rate,
        )
        state = step_planar(
            state,
            sample.distances,
            delta_theta,
            config.geometry,
            straightline_epsilon=config.straightline_epsilon,
        )
        xs.append(float(state.position[0]))
        ys.append(float(state.position[1]))
        thetas.append(state.heading)
    return np.array(xs), np.array(ys), np.array(thetas)


def run_estimation_stepwise(
    samples: list[OdometrySample],
    config: RunConfig,
    *,
    calibration: Calibration | None = None,
    reference_plane: SuspensionPlane | None = None,
    planar_only: bool = False,
) -> EstimationResult:
    """Reference implementation walking the per-step operations."""
    if len(samples) < 2:
        raise PlanarError("need at least 2 aligned samples")
    t = np.array([s.t for s in samples])
    x, y, theta = _planar_stepwise(samples, config)

    roll = pitch = heave = rotations = translations = None
    heights_present = all(s.heights is not None for s in samples)
    use_suspension = not planar_only and heights_present
    if use_suspension:
        reference = resolve_reference_plane(samples, config, calibration, reference_plane)
        raw = np.array([s.heights.as_array() for s in samples])
        smoothed = _smooth_trailing(raw, config.height_smoothing)
        roll_l, pitch_l, heave_l, rot_l, tr_l = [], [], [], [], []
        for row in smoothed:
            live = fit_plane(SuspensionHeights.from_array(row), config.geometry)
            delta = suspension_delta(reference, live)
            r_angle, p_angle = delta_angles(reference, live)
            roll_l.append(r_angle)
            pitch_l.append(p_angle)
            heave_l.append(plane_heave(reference, live))
            rot_l.append(delta.rotation)
            tr_l.append(delta.translation)
        roll = np.array(roll_l)
        pitch = np.array(pitch_l)
        heave = np.array(heave_l)
        rotations = np.array(rot_l)
        translations = np.array(tr_l)

    sensor_poses: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    if calibration is not None and calibration.sensors:
        for sensor_id, ext in calibration.sensors.items():
            rots = np.empty((len(samples), 3, 3))
            poss = np.empty((len(samples), 3))
            for k in range(len(samples)):
                delta = (
                    SuspensionDelta(rotations[k], translations[k])
                    if use_suspension
                    else SuspensionDelta.identity()
                )
                pose_v = compose_vehicle_pose(ext, delta)
                state = PlanarState(np.array([x[k], y[k], 0.0]), float(theta[k]))
                pose_w = sensor_world_pose(pose_v, state)
                rots[k] = pose_w.rotation
                poss[k] = pose_w.position
            sensor_poses[sensor_id] = (rots, poss)

    return EstimationResult(
        t=t,
        x=x,
        y=y,
        theta=theta,
        roll=roll,
        pitch=pitch,
        heave=heave,
        suspension_rotations=rotations,
        suspension_translations=translations,
        sensor_poses=sensor_poses,
    )


# ---------------------------------------------------------------------------
# Output files (17 significant digits so runs are reproducible and diffable)
# ---------------------------------------------------------------------------


def format_trajectory(result: EstimationResult) -> str:
    lines = ["t,x,y,theta"]
    for k in range(len(result.t)):
        lines.append(
            f"{result.t[k]:.17g},{result.x[k]:.17g},{result.y[k]:.17g},{result.theta[k]:.17g}"
        )
    return "\n".join(lines) + "\n"


def format_suspension(result: EstimationResult) -> str:
    if result.roll is None:
        raise PlanarError("no suspension estimates in this run")
    lines = ["t,roll,pitch,heave"]
    for k in range(len(result.t)):
        lines.append(
            f"{result.t[k]:.17g},{result.roll[k]:.17g},{result.pitch[k]:.17g},{result.heave[k]:.17g}"
        )
    return "\n".join(lines) + "\n"


def format_sensor_poses(result: EstimationResult) -> str:
    header = "t,sensor_id," + ",".join(f"r{i}{j}" for i in range(1, 4) for j in range(1, 4)) + ",x,y,z"
    lines = [header]
    for k in range(len(result.t)):
        for sensor_id, (rots, poss) in result.sensor_poses.items():
            flat = rots[k].reshape(9)
            fields = [f"{result.t[k]:.17g}", sensor_id]
            fields += [f"{v:.17g}" for v in flat]
            fields += [f"{v:.17g}" for v in poss[k]]
            lines.append(",".join(fields))
    return "\n".join(lines) + "\n"
