"""Suspension plane model.

Four linear height sensors at the wheel arches sample the body height above
each corner.  Lifting those heights to 3D points at the (fixed) sensor x,y
positions defines a plane; the live plane relative to a settled reference
plane encodes roll, pitch and heave of the body on its suspension as a
rotation plus a pure-z translation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError
from .geometry import rotation_between_normals
from .planar import VehicleGeometry

#: Physical range of a corner height, metres.
HEIGHT_RANGE = (0.0, 2.0)

#: Suspension tilts are small; a fitted normal should stay near +z.
MIN_NORMAL_Z = 0.9

#: Seconds of samples averaged when capturing a reference plane from a log.
DEFAULT_SETTLING_WINDOW = 2.0


@dataclass(frozen=True)
class SuspensionHeights:
    """Corner body heights in metres (converted from the bus millimetres)."""

    fl: float
    fr: float
    rl: float
    rr: float

    def __post_init__(self):
        lo, hi = HEIGHT_RANGE
        for name in ("fl", "fr", "rl", "rr"):
            h = getattr(self, name)
            if not (math.isfinite(h) and lo <= h <= hi):
                raise GeometryError(f"suspension height {name}={h} outside [{lo}, {hi}] m")

    def as_array(self) -> np.ndarray:
        """Heights in wheel order (rl, rr, fl, fr), matching position arrays."""
        return np.array([self.rl, self.rr, self.fl, self.fr])

    @classmethod
    def from_array(cls, h) -> "SuspensionHeights":
        """Inverse of :meth:`as_array` (wheel order in, named fields out)."""
        rl, rr, fl, fr = (float(v) for v in h)
        return cls(fl=fl, fr=fr, rl=rl, rr=rr)


@dataclass(frozen=True, eq=False)
class SuspensionPlane:
    """Plane through the four lifted sensor points.

    ``normal`` is unit length with positive z; ``reference_point`` is the
    centroid of the four points (its x,y never change, only z does).
    """

    normal: np.ndarray
    reference_point: np.ndarray

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        if abs(np.linalg.norm(n) - 1.0) > 1e-12:
            raise GeometryError(f"plane normal must be unit length, |n| = {np.linalg.norm(n)!r}")
        if n[2] <= MIN_NORMAL_Z:
            raise GeometryError(f"plane normal z = {n[2]:.6g} too far from vertical; not a suspension plane")


@dataclass(frozen=True, eq=False)
class SuspensionDelta:
    """Live plane relative to the reference plane.

    ``rotation`` maps the live normal onto the reference normal.
    ``translation`` is reference centroid minus live centroid and is pure z
    by construction (the sensor x,y are fixed to the body).
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=float)
        if max(abs(t[0]), abs(t[1])) > 1e-9:
            raise GeometryError(f"suspension translation must be pure z, got {t.tolist()}")

    @classmethod
    def identity(cls) -> "SuspensionDelta":
        return cls(np.eye(3), np.zeros(3))


def fit_plane(heights: SuspensionHeights, geom: VehicleGeometry) -> SuspensionPlane:
    """Ordinary least squares plane z = a*x + b*y + c over the four corners.

    The sensor x,y rectangle guarantees full rank, and with four points and
    three parameters any coplanar heights are reproduced with zero residual.
    The normal is (-a, -b, 1) normalized, so it always points up.
    """
    xy = geom.suspension_positions()
    h = heights.as_array()
    design = np.column_stack([xy, np.ones(4)])
    coef, *_ = np.linalg.lstsq(design, h, rcond=None)
    a, b, _ = coef
    normal = np.array([-a, -b, 1.0])
    normal /= np.linalg.norm(normal)
    centroid = np.array([xy[:, 0].mean(), xy[:, 1].mean(), h.mean()])
    return SuspensionPlane(normal, centroid)


def suspension_delta(reference: SuspensionPlane, live: SuspensionPlane) -> SuspensionDelta:
    """Rotation + translation taking the live plane to the reference plane."""
    translation = np.asarray(reference.reference_point, dtype=float) - np.asarray(
        live.reference_point, dtype=float
    )
    rotation = rotation_between_normals(live.normal, reference.normal)
    return SuspensionDelta(rotation, translation)


def plane_angles(plane: SuspensionPlane) -> tuple[float, float]:
    """(roll, pitch) of a plane against level ground.

    Roll is positive with the left side high; pitch is positive nose down.
    """
    n = plane.normal
    slope_x = -n[0] / n[2]  # a in z = a*x + b*y + c
    slope_y = -n[1] / n[2]
    roll = math.atan(slope_y)
    pitch = math.atan(-slope_x)
    return roll, pitch


def delta_angles(reference: SuspensionPlane, live: SuspensionPlane) -> tuple[float, float]:
    """(roll, pitch) of the live plane relative to the reference plane."""
    roll_ref, pitch_ref = plane_angles(reference)
    roll_live, pitch_live = plane_angles(live)
    return roll_live - roll_ref, pitch_live - pitch_ref


def heave(reference: SuspensionPlane, live: SuspensionPlane) -> float:
    """Vertical centroid displacement, positive when the body sits higher."""
    return float(live.reference_point[2] - reference.reference_point[2])


def mean_heights(samples) -> SuspensionHeights:
    """Average a sequence of SuspensionHeights (vibration rejection)."""
    stack = np.array([s.as_array() for s in samples])
    if stack.size == 0:
        raise GeometryError("cannot average an empty height sequence")
    return SuspensionHeights.from_array(stack.mean(axis=0))


def capture_reference(
    samples,
    geom: VehicleGeometry,
    settling_window: float = DEFAULT_SETTLING_WINDOW,
) -> SuspensionPlane:
    """Reference plane from the settled start of an aligned sample stream.

    Heights are averaged over the first ``settling_window`` seconds before
    fitting, which rejects vibration in the settled state.
    """
    picked = []
    t0 = None
    for sample in samples:
        if sample.heights is None:
            continue
        if t0 is None:
            t0 = sample.t
        if sample.t - t0 > settling_window:
            break
        picked.append(sample.heights)
    if not picked:
        raise GeometryError("no suspension heights available to capture a reference plane")
    return fit_plane(mean_heights(picked), geom)
