"""odo25d: 2.5D vehicle dead reckoning.

Planar wheel/yaw odometry fused with a suspension plane model: yaw rate
integrates into heading, four wheel distances locate the instantaneous
centre of rotation, and four suspension height sensors tilt and lift the
mounted-sensor extrinsics, producing world-frame poses for the vehicle and
everything bolted to it.
"""

from .errors import (
    CalibrationError,
    EvaluationError,
    GeometryError,
    HeadingError,
    IcrConvergenceError,
    IngestError,
    ManeuverError,
    Odo25dError,
    PlanarError,
)
from .geometry import Frame, rot_z, rotation_between_normals, vec3, wrap_angle
from .heading import HeadingState, YawSample, step_heading
from .planar import (
    IcrEstimate,
    PlanarState,
    VehicleGeometry,
    WheelDistances,
    accumulate_pose,
    icr_adaptive_rear,
    icr_fixed_rear,
    planar_displacement,
    step_planar,
    wheel_radii,
)
from .suspension import (
    SuspensionDelta,
    SuspensionHeights,
    SuspensionPlane,
    capture_reference,
    fit_plane,
    plane_angles,
    suspension_delta,
)
from .extrinsics import (
    Calibration,
    CalibrationCapture,
    SensorExtrinsics,
    SensorPose,
    compensate_calibration,
    compose_vehicle_pose,
    load_calibration,
    save_calibration,
    sensor_world_pose,
)
from .ingest import ChannelStream, OdometrySample, RunConfig, align, load_config, parse_log
from .simulator import (
    ManeuverSpec,
    NoiseSpec,
    Segment,
    SimulationResult,
    SuspensionResponse,
    ground_truth_sensor_pose,
    parse_maneuver,
    physical_streams,
    simulate,
)
from .pipeline import EstimationResult, run_estimation, run_estimation_stepwise
from .evaluate import Trajectory, TrajectoryMetrics, compare

__version__ = "0.1.0"

__all__ = [
    "Calibration",
    "CalibrationCapture",
    "CalibrationError",
    "ChannelStream",
    "EstimationResult",
    "EvaluationError",
    "Frame",
    "GeometryError",
    "HeadingError",
    "HeadingState",
    "IcrConvergenceError",
    "IcrEstimate",
    "IngestError",
    "ManeuverError",
    "ManeuverSpec",
    "NoiseSpec",
    "Odo25dError",
    "OdometrySample",
    "PlanarError",
    "PlanarState",
    "RunConfig",
    "Segment",
    "SensorExtrinsics",
    "SensorPose",
    "SimulationResult",
    "SuspensionDelta",
    "SuspensionHeights",
    "SuspensionPlane",
    "SuspensionResponse",
    "Trajectory",
    "TrajectoryMetrics",
    "VehicleGeometry",
    "WheelDistances",
    "YawSample",
    "accumulate_pose",
    "align",
    "capture_reference",
    "compare",
    "compensate_calibration",
    "compose_vehicle_pose",
    "fit_plane",
    "ground_truth_sensor_pose",
    "icr_adaptive_rear",
    "icr_fixed_rear",
    "load_calibration",
    "load_config",
    "parse_log",
    "parse_maneuver",
    "physical_streams",
    "plane_angles",
    "planar_displacement",
    "rot_z",
    "rotation_between_normals",
    "run_estimation",
    "run_estimation_stepwise",
    "save_calibration",
    "sensor_world_pose",
    "simulate",
    "step_heading",
    "step_planar",
    "suspension_delta",
    "vec3",
    "wheel_radii",
    "wrap_angle",
]
