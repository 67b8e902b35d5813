"""Planar odometry: turning-centre estimation and pose accumulation.

Every point of the rigidly moving vehicle turns about a shared instantaneous
centre of rotation (ICR).  Given the per-step heading increment and the four
signed wheel travel distances, each wheel yields a turning radius; the datum
radius (rear-axle midpoint to ICR) follows either from the fixed-rear-steer
closed form or from a two-parameter least-squares fit when the rear axle
steers too.  The step displacement is the chord of the datum arc, rotated
into the world frame by the heading at the step start.

Wheel order for all arrays in this package is ``(rl, rr, fl, fr)``.
Signs: wheel distances are + for forward travel, heading increments + for
left turns.  The ratio d/dtheta therefore carries the turn side: positive
radii put the ICR on the +y (left) side of the vehicle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import IcrConvergenceError, PlanarError
from .geometry import Vec3, rot_z, vec3

WHEEL_ORDER = ("rl", "rr", "fl", "fr")

#: |delta_theta| below this is treated as straight-line motion (r = d/dtheta
#: is numerically unstable there); radians per step.
STRAIGHT_LINE_EPSILON = 1e-6

#: All wheel distances below this magnitude with a non-negligible heading
#: change count as spin in place; metres.
SPIN_EPSILON = 1e-9

#: Sanity bound on per-step wheel travel at bus rates; metres.
MAX_STEP_DISTANCE = 2.0

REAR_STEERING_MODES = ("fixed", "adaptive")


@dataclass(frozen=True)
class VehicleGeometry:
    """Static vehicle geometry.

    ``track_width`` separates a wheel pair laterally, ``wheelbase`` separates
    the axles.  Wheels sit at rl=(0,+w/2), rr=(0,-w/2), fl=(l,+w/2),
    fr=(l,-w/2) in the vehicle frame (datum at the rear-axle midpoint).
    ``suspension_xy`` optionally overrides where the suspension height
    sensors are mounted; by default they share the wheel x,y.
    """

    track_width: float
    wheelbase: float
    rear_steering: str = "fixed"
    suspension_xy: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        if not (self.track_width > 0.0 and math.isfinite(self.track_width)):
            raise PlanarError(f"track_width must be positive, got {self.track_width}")
        if not (self.wheelbase > 0.0 and math.isfinite(self.wheelbase)):
            raise PlanarError(f"wheelbase must be positive, got {self.wheelbase}")
        if self.rear_steering not in REAR_STEERING_MODES:
            raise PlanarError(f"rear_steering must be one of {REAR_STEERING_MODES}, got {self.rear_steering!r}")
        if self.suspension_xy is not None and np.asarray(self.suspension_xy, dtype=float).shape != (4, 2):
            raise PlanarError("suspension_xy override must be 4 (x, y) pairs in wheel order")

    def wheel_positions(self) -> np.ndarray:
        """(4, 3) vehicle-frame wheel positions in wheel order."""
        w, l = self.track_width, self.wheelbase
        return np.array(
            [[0.0, w / 2, 0.0], [0.0, -w / 2, 0.0], [l, w / 2, 0.0], [l, -w / 2, 0.0]]
        )

    def suspension_positions(self) -> np.ndarray:
        """(4, 2) x,y of the suspension height sensors, wheel order."""
        if self.suspension_xy is not None:
            return np.asarray(self.suspension_xy, dtype=float)
        return self.wheel_positions()[:, :2].copy()


@dataclass(frozen=True)
class WheelDistances:
    """Signed per-step wheel travel in metres (+ = forward)."""

    rl: float
    rr: float
    fl: float
    fr: float

    def __post_init__(self):
        for name in WHEEL_ORDER:
            d = getattr(self, name)
            if not math.isfinite(d) or abs(d) >= MAX_STEP_DISTANCE:
                raise PlanarError(f"wheel distance {name}={d} outside sane per-step range")

    def as_array(self) -> np.ndarray:
        return np.array([self.rl, self.rr, self.fl, self.fr])

    def rear_mean(self) -> float:
        """Datum travel for the straight branch: the rear-axle midpoint mean."""
        return 0.5 * (self.rl + self.rr)


@dataclass(frozen=True, eq=False)
class IcrEstimate:
    """Instantaneous centre of rotation in the vehicle frame (z = 0).

    ``datum_radius`` is signed: + puts the centre on the +y (left) side.
    For ``straight_line`` estimates the centre is at infinity and the other
    fields are not meaningful.
    """

    centre: np.ndarray
    datum_radius: float
    straight_line: bool = False

    @classmethod
    def straight(cls) -> "IcrEstimate":
        return cls(np.zeros(3), math.inf, True)

    @classmethod
    def spin_in_place(cls) -> "IcrEstimate":
        """Degenerate centre at the datum: pure heading change, no travel."""
        return cls(np.zeros(3), 0.0, False)


@dataclass(frozen=True, eq=False)
class PlanarState:
    """World-frame 2D pose: position (z exactly 0) and unbounded heading."""

    position: np.ndarray
    heading: float

    @classmethod
    def origin(cls) -> "PlanarState":
        return cls(np.zeros(3), 0.0)


def wheel_radii(distances, delta_theta: float) -> np.ndarray:
    """Per-wheel turning radii r_i = d_i / delta_theta, wheel order.

    The plain ratio keeps its sign, which encodes the turn side (positive =
    ICR on the left) and is invariant under reversing (both numerator and
    denominator flip).  Callers must take the straight-line branch before
    coming here; only an exactly zero increment is rejected.
    """
    if delta_theta == 0.0:
        raise PlanarError("zero heading increment: straight-line branch must be taken first")
    d = distances.as_array() if isinstance(distances, WheelDistances) else np.asarray(distances, dtype=float)
    return d / delta_theta


def icr_fixed_rear(radii, geom: VehicleGeometry, turn_sign: int) -> IcrEstimate:
    """Datum radius for a fixed rear axle: average of the per-wheel estimates.

    Rear wheels are offset from the datum by half the track width; front
    wheels additionally carry the wheelbase, removed by the Pythagorean
    reduction sqrt(r^2 - l^2).  A wheel whose radius would place the ICR
    inside the track (rear) or inside the wheelbase (front) is excluded
    from the average; with no usable wheel left the estimate fails.
    """
    if turn_sign not in (1, -1):
        raise PlanarError(f"turn_sign must be +1 or -1, got {turn_sign!r}")
    r = np.asarray(radii, dtype=float)
    if r.shape != (4,):
        raise PlanarError("expected four wheel radii in wheel order")
    w = geom.track_width
    l = geom.wheelbase
    half = 0.5 * w
    est = np.full(4, np.nan)
    if abs(r[0]) > half:
        est[0] = turn_sign * abs(r[0]) + half
    if abs(r[1]) > half:
        est[1] = turn_sign * abs(r[1]) - half
    if r[2] ** 2 >= l**2:
        est[2] = turn_sign * math.sqrt(r[2] ** 2 - l**2) + half
    if r[3] ** 2 >= l**2:
        est[3] = turn_sign * math.sqrt(r[3] ** 2 - l**2) - half
    valid = np.isfinite(est)
    if not valid.any():
        raise PlanarError("ICR inside wheelbase: no usable radius estimate")
    datum = float(est[valid].mean())
    return IcrEstimate(vec3(0.0, datum, 0.0), datum)


def icr_adaptive_rear(
    radii,
    wheel_positions,
    init: IcrEstimate,
    *,
    max_iterations: int = 50,
    gradient_tol: float = 1e-10,
) -> IcrEstimate:
    """Two-parameter turning centre for adaptive rear steering.

    Minimizes the circle-consistency objective
    ``sum_i (|w_i - c|^2 - r_i^2)^2`` by damped Gauss-Newton, starting from
    the fixed-rear solution.  Non-finite radii are dropped (at least three
    must remain).  Raises :class:`IcrConvergenceError` carrying the best
    iterate when the gradient tolerance is not reached.
    """
    r = np.asarray(radii, dtype=float)
    wp = np.asarray(wheel_positions, dtype=float)[:, :2]
    keep = np.isfinite(r)
    if keep.sum() < 3:
        raise PlanarError(f"adaptive ICR needs at least 3 finite radii, got {int(keep.sum())}")
    r2 = r[keep] ** 2
    anchors = wp[keep]

    def residuals(c):
        return ((anchors - c) ** 2).sum(axis=1) - r2

    # Objective values scale with r^4; treat a stall below the float noise
    # floor of that scale as converged rather than failing the solve.
    noise_floor = (1e-12 * max(1.0, float(np.max(r2)))) ** 2

    c = np.array(init.centre[:2], dtype=float)
    f = residuals(c)
    obj = float(f @ f)
    for _ in range(max_iterations):
        jac = -2.0 * (anchors - c)  # d residual_i / d c
        grad = jac.T @ f
        if np.linalg.norm(grad) < gradient_tol:
            return _adaptive_result(c)
        try:
            step = np.linalg.solve(jac.T @ jac, -grad)
        except np.linalg.LinAlgError:
            break
        # Damping: halve the step until the objective decreases.
        scale = 1.0
        improved = False
        for _ in range(30):
            candidate = c + scale * step
            f_new = residuals(candidate)
            obj_new = float(f_new @ f_new)
            if obj_new < obj:
                c, f, obj = candidate, f_new, obj_new
                improved = True
                break
            scale *= 0.5
        if not improved:
            break
    jac = -2.0 * (anchors - c)
    if np.linalg.norm(jac.T @ f) < gradient_tol or obj <= noise_floor:
        return _adaptive_result(c)
    raise IcrConvergenceError(
        f"adaptive ICR did not converge (gradient norm {np.linalg.norm(jac.T @ f):.3e})",
        best=_adaptive_result(c),
    )


def _adaptive_result(c) -> IcrEstimate:
    radius = math.copysign(math.hypot(c[0], c[1]), c[1]) if c[1] != 0.0 else math.hypot(c[0], c[1])
    return IcrEstimate(vec3(c[0], c[1], 0.0), radius)


def planar_displacement(icr: IcrEstimate, delta_theta: float, d_rear_mean: float) -> Vec3:
    """Vehicle-frame motion vector for one step.

    Straight line: advance along +x by the rear-axle mean travel.  Otherwise
    the datum moves along the chord of its arc about the ICR:
    (r sin dtheta, r (1 - cos dtheta), 0).  The chord vanishes with dtheta
    and with r, so spin in place falls out naturally.
    """
    if icr.straight_line:
        return vec3(d_rear_mean, 0.0, 0.0)
    r = icr.datum_radius
    return vec3(r * math.sin(delta_theta), r * (1.0 - math.cos(delta_theta)), 0.0)


def accumulate_pose(state: PlanarState, delta_p, delta_theta: float) -> PlanarState:
    """World-frame accumulation: rotate the step by the heading at its start."""
    p = rot_z(state.heading) @ np.asarray(delta_p, dtype=float) + state.position
    return PlanarState(p, state.heading + delta_theta)


def resolve_turn_sign(radii) -> int:
    """Turn side from the signed radii: +1 = ICR left, -1 = right.

    Rear wheels vote first (their radii are unambiguous); the front pair
    breaks a tie.  A fully degenerate all-zero vote defaults to +1.
    """
    r = np.asarray(radii, dtype=float)
    rear = r[0] + r[1]
    if rear != 0.0:
        return 1 if rear > 0.0 else -1
    total = float(np.nansum(r))
    if total != 0.0:
        return 1 if total > 0.0 else -1
    return 1


def step_planar(
    state: PlanarState,
    distances: WheelDistances,
    delta_theta: float,
    geom: VehicleGeometry,
    *,
    straightline_epsilon: float = STRAIGHT_LINE_EPSILON,
    spin_epsilon: float = SPIN_EPSILON,
) -> PlanarState:
    """One full planar step: branch, estimate the ICR, displace, accumulate."""
    icr = estimate_icr(
        distances,
        delta_theta,
        geom,
        straightline_epsilon=straightline_epsilon,
        spin_epsilon=spin_epsilon,
    )
    dp = planar_displacement(icr, delta_theta, distances.rear_mean())
    return accumulate_pose(state, dp, delta_theta)


def estimate_icr(
    distances: WheelDistances,
    delta_theta: float,
    geom: VehicleGeometry,
    *,
    straightline_epsilon: float = STRAIGHT_LINE_EPSILON,
    spin_epsilon: float = SPIN_EPSILON,
) -> IcrEstimate:
    """Branching ICR estimate: straight line, spin in place, or turning."""
    if abs(delta_theta) < straightline_epsilon:
        return IcrEstimate.straight()
    d = distances.as_array()
    if np.max(np.abs(d)) < spin_epsilon:
        return IcrEstimate.spin_in_place()
    radii = wheel_radii(d, delta_theta)
    turn_sign = resolve_turn_sign(radii)
    fixed = icr_fixed_rear(radii, geom, turn_sign)
    if geom.rear_steering == "adaptive":
        return icr_adaptive_rear(radii, geom.wheel_positions(), fixed)
    return fixed
