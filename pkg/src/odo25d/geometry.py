"""Frame conventions, 3-vectors and 3x3 rotations shared by all modules.

Conventions:

* Vectors are float64 numpy arrays of shape ``(3,)``, in metres unless they
  are unit directions.
* A rotation named ``R_ab`` maps coordinates of frame ``a`` into frame ``b``
  (source on the left, destination on the right).  Matrices act on column
  vectors, so chains read right to left.
* The vehicle frame has its origin at the rear-axle midpoint, x forward,
  y to the left, z up.  World and sensor frames are right handed as well.
"""

from __future__ import annotations

import math
from enum import Enum

import numpy as np

from .errors import GeometryError

Vec3 = np.ndarray  # shape (3,)
Rot3 = np.ndarray  # shape (3, 3)

#: Tolerance for treating a matrix as orthonormal / a vector as unit length.
ORTHONORMAL_TOL = 1e-9

# Below this cross-product norm two normals count as parallel and the
# rotation between them is the identity (continuity at the settled state).
_PARALLEL_EPS = 1e-12
_ANTIPARALLEL_EPS = 1e-9


class Frame(Enum):
    """Coordinate frame a vector or pose is expressed in."""

    VEHICLE = "vehicle"
    WORLD = "world"
    SENSOR = "sensor"


def vec3(x: float, y: float, z: float) -> Vec3:
    """Build a float64 3-vector, rejecting non-finite components."""
    v = np.array([x, y, z], dtype=float)
    if not np.all(np.isfinite(v)):
        raise GeometryError(f"non-finite vector components: {v.tolist()}")
    return v


def rot_z(theta: float) -> Rot3:
    """Right-handed rotation about +z by ``theta`` radians.

    For a vehicle at heading ``theta`` this is the vehicle-to-world rotation.
    """
    if not math.isfinite(theta):
        raise GeometryError(f"non-finite angle: {theta}")
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def skew(v) -> np.ndarray:
    """Cross-product matrix: skew(a) @ b == a x b."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rotation_between_normals(n_live, n_ref) -> Rot3:
    """Minimal rotation R with ``R @ n_live == n_ref``.

    Rodrigues construction: axis = normalized cross product, sine and cosine
    taken from the cross and dot products of the (unit) inputs.  Parallel
    inputs return the identity exactly; antiparallel inputs have no unique
    minimal rotation and raise.
    """
    n_live = np.asarray(n_live, dtype=float)
    n_ref = np.asarray(n_ref, dtype=float)
    for name, n in (("n_live", n_live), ("n_ref", n_ref)):
        if abs(np.linalg.norm(n) - 1.0) > ORTHONORMAL_TOL:
            raise GeometryError(f"{name} is not unit length: |{name}| = {np.linalg.norm(n)!r}")
    a = np.cross(n_live, n_ref)
    s = float(np.linalg.norm(a))
    c = float(np.dot(n_live, n_ref))
    if c <= -1.0 + _ANTIPARALLEL_EPS:
        raise GeometryError("degenerate 180° rotation between normals")
    if s < _PARALLEL_EPS:
        return np.eye(3)
    k = skew(a / s)
    return np.eye(3) + s * k + (1.0 - c) * (k @ k)


def orthonormality_error(r) -> float:
    """Max-norm deviation of R^T R from the identity."""
    r = np.asarray(r, dtype=float)
    return float(np.abs(r.T @ r - np.eye(3)).max())


def is_rotation(r, tol: float = ORTHONORMAL_TOL) -> bool:
    """True when R is orthonormal within ``tol`` and has determinant +1."""
    r = np.asarray(r, dtype=float)
    if r.shape != (3, 3) or not np.all(np.isfinite(r)):
        return False
    return orthonormality_error(r) <= tol and abs(np.linalg.det(r) - 1.0) <= tol


def orthonormalize(r) -> Rot3:
    """Project a nearly-orthonormal matrix back onto SO(3) (SVD polar factor)."""
    u, _, vt = np.linalg.svd(np.asarray(r, dtype=float))
    out = u @ vt
    if np.linalg.det(out) < 0:
        u[:, -1] = -u[:, -1]
        out = u @ vt
    return out


def wrap_angle(theta: float) -> float:
    """Wrap an angle to [-pi, pi) for presentation; accumulation stays unbounded."""
    return float((theta + math.pi) % (2.0 * math.pi) - math.pi)
