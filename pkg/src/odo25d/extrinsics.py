"""Sensor extrinsics: suspension compensation and pose composition.

Extrinsic calibration is measured against the local road plane, so whatever
suspension state held during calibration is baked into the numbers.
:func:`compensate_calibration` removes it, yielding extrinsics against the
nominal (reference) suspension; :func:`compose_vehicle_pose` re-applies the
live suspension state, and :func:`sensor_world_pose` carries the result into
the world frame through the planar odometry pose.  Compensation is the exact
inverse of composition, so a compose-then-compensate round trip returns the
original extrinsics to machine precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CalibrationError, GeometryError
from .geometry import Frame, is_rotation, orthonormalize, orthonormality_error, rot_z
from .planar import PlanarState
from .suspension import SuspensionDelta, SuspensionPlane

#: Mounted sensors live within this box around the vehicle origin, metres.
POSITION_BOUND = 5.0

#: Rotations are re-orthonormalized when drift exceeds this.
DRIFT_GUARD = 1e-9


def _check_rotation(r, what: str) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if not is_rotation(r):
        raise GeometryError(f"{what} is not a rotation matrix (orthonormality error {orthonormality_error(r):.3e})")
    return r


def _check_position(p, what: str) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(p)) or np.abs(p).max() > POSITION_BOUND:
        raise GeometryError(f"{what} {p.tolist()} outside the {POSITION_BOUND} m mounting box")
    return p


@dataclass(frozen=True, eq=False)
class SensorExtrinsics:
    """Pose of a mounted sensor in the vehicle frame, nominal suspension.

    ``rotation`` maps vehicle coordinates into sensor coordinates.
    """

    sensor_id: str
    rotation: np.ndarray
    position: np.ndarray

    def __post_init__(self):
        _check_rotation(self.rotation, f"extrinsics rotation ({self.sensor_id})")
        _check_position(self.position, f"extrinsics position ({self.sensor_id})")


@dataclass(frozen=True, eq=False)
class CalibrationCapture:
    """Raw calibration output plus the suspension state while it ran."""

    sensor_id: str
    rotation: np.ndarray
    position: np.ndarray
    suspension: SuspensionDelta

    def __post_init__(self):
        _check_rotation(self.rotation, f"calibration rotation ({self.sensor_id})")
        _check_position(self.position, f"calibration position ({self.sensor_id})")


@dataclass(frozen=True, eq=False)
class SensorPose:
    """Rotation + position of a sensor, tagged with the frame they live in.

    ``rotation`` maps coordinates of ``frame`` into sensor coordinates;
    ``position`` is the sensor origin expressed in ``frame``.
    """

    rotation: np.ndarray
    position: np.ndarray
    frame: Frame


def _drift_guarded(r: np.ndarray) -> np.ndarray:
    if orthonormality_error(r) > DRIFT_GUARD:
        return orthonormalize(r)
    return r


def compensate_calibration(cap: CalibrationCapture) -> SensorExtrinsics:
    """Remove the calibration-time suspension state from a capture.

    Exact inverse of :func:`compose_vehicle_pose` with the same delta:
    rotation R_cal R_s^T, position R_s^T c_cal - t_s.
    """
    rs = cap.suspension.rotation
    ts = cap.suspension.translation
    rotation = _drift_guarded(cap.rotation @ rs.T)
    position = rs.T @ cap.position - ts
    return SensorExtrinsics(cap.sensor_id, rotation, position)


def compose_vehicle_pose(ext: SensorExtrinsics, delta: SuspensionDelta) -> SensorPose:
    """Sensor pose in the vehicle frame under the given suspension state.

    Rotation R_e R_s, position R_s (c_e + t_s).
    """
    rotation = _drift_guarded(ext.rotation @ delta.rotation)
    position = delta.rotation @ (ext.position + delta.translation)
    return SensorPose(rotation, position, Frame.VEHICLE)


def sensor_world_pose(pose_v: SensorPose, planar: PlanarState) -> SensorPose:
    """Carry a vehicle-frame sensor pose into the world frame.

    The planar pose contributes rot_z(heading) (vehicle to world) and the
    vehicle position; planar motion never changes the sensor height.
    """
    if pose_v.frame is not Frame.VEHICLE:
        raise GeometryError(f"expected a vehicle-frame pose, got {pose_v.frame}")
    r_vw = rot_z(planar.heading)
    rotation = _drift_guarded(pose_v.rotation @ r_vw.T)
    position = r_vw @ pose_v.position + planar.position
    return SensorPose(rotation, position, Frame.WORLD)


# ---------------------------------------------------------------------------
# Calibration file
#
# Line-oriented UTF-8 text; '#' starts a comment.  Floats are written with
# 17 significant digits so files round-trip the exact binary values.
#
#   reference_plane normal <nx> <ny> <nz>
#   reference_plane point <x> <y> <z>
#   sensor <id> rotation <r11> <r12> <r13> <r21> ... <r33>   (row-major)
#   sensor <id> position <x> <y> <z>
# ---------------------------------------------------------------------------


@dataclass
class Calibration:
    """Per-sensor extrinsics plus the reference suspension plane."""

    reference_plane: SuspensionPlane
    sensors: dict[str, SensorExtrinsics]


def format_calibration(calib: Calibration) -> str:
    lines = ["# odo25d calibration v1"]
    n = calib.reference_plane.normal
    p = calib.reference_plane.reference_point
    lines.append("reference_plane normal " + " ".join(f"{v:.17g}" for v in n))
    lines.append("reference_plane point " + " ".join(f"{v:.17g}" for v in p))
    for sensor_id, ext in calib.sensors.items():
        if any(ch.isspace() for ch in sensor_id):
            raise CalibrationError(f"sensor id {sensor_id!r} must not contain whitespace")
        flat = np.asarray(ext.rotation, dtype=float).reshape(9)
        lines.append(f"sensor {sensor_id} rotation " + " ".join(f"{v:.17g}" for v in flat))
        lines.append(f"sensor {sensor_id} position " + " ".join(f"{v:.17g}" for v in ext.position))
    return "\n".join(lines) + "\n"


def save_calibration(path, calib: Calibration) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_calibration(calib))


def parse_calibration(source) -> Calibration:
    """Parse calibration text from an iterable of lines or a file object."""
    normal = None
    point = None
    rotations: dict[str, np.ndarray] = {}
    positions: dict[str, np.ndarray] = {}
    order: list[str] = []
    for lineno, raw in enumerate(source, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        try:
            if tokens[0] == "reference_plane":
                kind, values = tokens[1], [float(v) for v in tokens[2:]]
                if kind == "normal" and len(values) == 3:
                    normal = np.array(values)
                elif kind == "point" and len(values) == 3:
                    point = np.array(values)
                else:
                    raise ValueError("bad reference_plane entry")
            elif tokens[0] == "sensor":
                sensor_id, kind = tokens[1], tokens[2]
                values = [float(v) for v in tokens[3:]]
                if sensor_id not in order:
                    order.append(sensor_id)
                if kind == "rotation" and len(values) == 9:
                    rotations[sensor_id] = np.array(values).reshape(3, 3)
                elif kind == "position" and len(values) == 3:
                    positions[sensor_id] = np.array(values)
                else:
                    raise ValueError("bad sensor entry")
            else:
                raise ValueError(f"unknown directive {tokens[0]!r}")
        except (ValueError, IndexError) as exc:
            raise CalibrationError(f"calibration line {lineno}: {exc}") from None
    if normal is None or point is None:
        raise CalibrationError("calibration missing the reference_plane normal/point")
    try:
        plane = SuspensionPlane(normal, point)
    except GeometryError as exc:
        raise CalibrationError(f"bad reference plane: {exc}") from None
    sensors: dict[str, SensorExtrinsics] = {}
    for sensor_id in order:
        if sensor_id not in rotations or sensor_id not in positions:
            raise CalibrationError(f"sensor {sensor_id!r} needs both a rotation and a position line")
        try:
            sensors[sensor_id] = SensorExtrinsics(sensor_id, rotations[sensor_id], positions[sensor_id])
        except GeometryError as exc:
            raise CalibrationError(f"sensor {sensor_id!r}: {exc}") from None
    return Calibration(plane, sensors)


def load_calibration(path) -> Calibration:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_calibration(fh)
