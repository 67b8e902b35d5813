"""Exception hierarchy shared across the package."""


class Odo25dError(Exception):
    """Base class for every error raised by odo25d."""


class GeometryError(Odo25dError):
    """Invalid vector/rotation input or a degenerate geometric construction."""


class HeadingError(Odo25dError):
    """Yaw-rate integration contract violated (time regression, sample gap)."""


class PlanarError(Odo25dError):
    """Planar odometry failure (unusable turning-centre estimates, bad inputs)."""


class IcrConvergenceError(PlanarError):
    """Adaptive turning-centre solve did not converge; carries the best iterate."""

    def __init__(self, message, best):
        super().__init__(message)
        self.best = best


class IngestError(Odo25dError):
    """Log parsing or channel alignment failure."""


class ManeuverError(Odo25dError):
    """Invalid maneuver script or simulation request."""


class CalibrationError(Odo25dError):
    """Calibration file missing, malformed, or inconsistent."""


class EvaluationError(Odo25dError):
    """Trajectory comparison impossible (no overlap, malformed reference)."""
