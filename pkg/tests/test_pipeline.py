import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from odo25d.errors import HeadingError, PlanarError
from odo25d.extrinsics import Calibration, SensorExtrinsics
from odo25d.geometry import vec3
from odo25d.ingest import OdometrySample, RunConfig, align
from odo25d.pipeline import (
    EstimationResult,
    format_sensor_poses,
    format_suspension,
    format_trajectory,
    run_estimation,
    run_estimation_stepwise,
)
from odo25d.planar import VehicleGeometry, WheelDistances
from odo25d.simulator import (
    ManeuverSpec,
    NoiseSpec,
    Segment,
    SuspensionResponse,
    ground_truth_sensor_pose,
    nominal_plane,
    physical_streams,
    simulate,
    true_suspension_delta,
    truth_state,
)
from odo25d.suspension import SuspensionHeights

GEOM = VehicleGeometry(track_width=1.6, wheelbase=2.7)
CONFIG = RunConfig(geometry=GEOM)

COMPLEX_SEGMENTS = (
    Segment(duration=15, v0=1.5, v1=1.5),
    Segment(duration=12, v0=1.5, v1=1.5, kappa=0.08),
    Segment(duration=6, v0=1.5, v1=0.0),
    Segment(duration=8, v0=-0.8, v1=-0.8, kappa=0.05),
    Segment(duration=20, v0=1.2, v1=1.2, kappa_amp=0.1, kappa_omega=0.6),
    Segment(duration=10, v0=1.2, v1=1.2, kappa=-0.09),
)


def simulate_samples(spec, noise=None, susp=None):
    res = simulate(spec, GEOM, susp or SuspensionResponse(), noise or NoiseSpec())
    return res, align(physical_streams(res))


def test_noise_free_oracle_consistency():
    res, samples = simulate_samples(ManeuverSpec(COMPLEX_SEGMENTS))
    est = run_estimation(samples, CONFIG, reference_plane=nominal_plane(res))
    err = np.hypot(est.x - res.truth.x, est.y - res.truth.y)
    assert err.mean() < 1e-6
    assert np.abs(est.theta - res.truth.theta).max() < 1e-8
    assert np.abs(est.roll - res.truth.roll).max() < 1e-9
    assert np.abs(est.pitch - res.truth.pitch).max() < 1e-9
    assert np.abs(est.heave - res.truth.heave).max() < 1e-9


def test_vectorized_matches_stepwise():
    res, samples = simulate_samples(ManeuverSpec(COMPLEX_SEGMENTS), noise=NoiseSpec.defaults(seed=9))
    calib = Calibration(
        nominal_plane(res),
        {"FV": SensorExtrinsics("FV", np.eye(3), vec3(3.8, 0.0, 0.60323))},
    )
    fast = run_estimation(samples, CONFIG, calibration=calib)
    slow = run_estimation_stepwise(samples, CONFIG, calibration=calib)
    assert np.abs(fast.x - slow.x).max() < 1e-12
    assert np.abs(fast.y - slow.y).max() < 1e-12
    assert np.abs(fast.theta - slow.theta).max() < 1e-12
    assert np.abs(fast.roll - slow.roll).max() < 1e-12
    assert np.abs(fast.heave - slow.heave).max() < 1e-12
    assert np.abs(fast.suspension_rotations - slow.suspension_rotations).max() < 1e-12
    r_f, p_f = fast.sensor_poses["FV"]
    r_s, p_s = slow.sensor_poses["FV"]
    assert np.abs(r_f - r_s).max() < 1e-12
    assert np.abs(p_f - p_s).max() < 1e-12


def test_sensor_poses_match_truth_chain():
    res, samples = simulate_samples(ManeuverSpec(COMPLEX_SEGMENTS))
    ext = SensorExtrinsics("FV", np.eye(3), vec3(3.8, 0.0, 0.60323))
    calib = Calibration(nominal_plane(res), {"FV": ext})
    est = run_estimation(samples, CONFIG, calibration=calib)
    rots, poss = est.sensor_poses["FV"]
    for k in (0, len(samples) // 2, len(samples) - 1):
        want = ground_truth_sensor_pose(truth_state(res.truth, k), ext, true_suspension_delta(res, k))
        assert np.abs(rots[k] - want.rotation).max() < 1e-9
        assert np.abs(poss[k] - want.position).max() < 1e-9


def test_planar_only_mode():
    res, samples = simulate_samples(ManeuverSpec(COMPLEX_SEGMENTS))
    est = run_estimation(samples, CONFIG, planar_only=True)
    assert est.roll is None and est.pitch is None and est.heave is None
    assert est.sensor_poses == {}
    err = np.hypot(est.x - res.truth.x, est.y - res.truth.y)
    assert err.mean() < 1e-6


def test_planar_only_sensor_poses_use_identity_delta():
    res, samples = simulate_samples(ManeuverSpec(COMPLEX_SEGMENTS))
    ext = SensorExtrinsics("FV", np.eye(3), vec3(3.8, 0.0, 0.6))
    calib = Calibration(nominal_plane(res), {"FV": ext})
    est = run_estimation(samples, CONFIG, calibration=calib, planar_only=True)
    _, poss = est.sensor_poses["FV"]
    assert_allclose(poss[:, 2], np.full(len(samples), 0.6), atol=1e-12)


def test_reference_plane_from_settling_window():
    # without an explicit reference, the settled start of the log is used
    spec = ManeuverSpec(
        (
            Segment(duration=3.0, v0=0.0, v1=0.0),  # parked: settled state
            Segment(duration=5.0, v0=0.0, v1=2.0),
        )
    )
    res, samples = simulate_samples(spec)
    est = run_estimation(samples, CONFIG)
    assert np.abs(est.roll - res.truth.roll).max() < 1e-9
    assert np.abs(est.pitch - res.truth.pitch).max() < 1e-9


def test_height_smoothing_config():
    res, samples = simulate_samples(
        ManeuverSpec((Segment(duration=5.0, v0=1.0, v1=1.0),)),
        noise=NoiseSpec(suspension_sigma=0.002, seed=3),
    )
    smooth_cfg = RunConfig(geometry=GEOM, height_smoothing=25)
    raw = run_estimation(samples, CONFIG, reference_plane=nominal_plane(res))
    smoothed = run_estimation(samples, smooth_cfg, reference_plane=nominal_plane(res))
    assert smoothed.roll[50:].std() < raw.roll[50:].std()


def test_mirrored_log_mirrors_trajectory():
    spec = ManeuverSpec((Segment(duration=12, v0=1.5, v1=1.5, kappa=0.07),))
    res, samples = simulate_samples(spec)
    mirrored = [
        OdometrySample(
            t=s.t,
            yaw_rate=-s.yaw_rate,
            distances=WheelDistances(
                rl=s.distances.rr, rr=s.distances.rl, fl=s.distances.fr, fr=s.distances.fl
            ),
            heights=s.heights,
        )
        for s in samples
    ]
    est = run_estimation(samples, CONFIG, reference_plane=nominal_plane(res))
    est_m = run_estimation(mirrored, CONFIG, reference_plane=nominal_plane(res))
    assert np.abs(est_m.x - est.x).max() < 1e-9
    assert np.abs(est_m.y + est.y).max() < 1e-9
    assert np.abs(est_m.theta + est.theta).max() < 1e-12


def test_adaptive_config_runs_stepwise():
    cfg = RunConfig(geometry=VehicleGeometry(1.6, 2.7, rear_steering="adaptive"))
    spec = ManeuverSpec((Segment(duration=6, v0=1.0, v1=1.0, kappa=0.1),))
    res, samples = simulate_samples(spec)
    est = run_estimation(samples, cfg, reference_plane=nominal_plane(res))
    err = np.hypot(est.x - res.truth.x, est.y - res.truth.y)
    assert err.mean() < 1e-6


def test_stream_validation_errors():
    def sample(t, yaw=0.0):
        return OdometrySample(t, yaw, WheelDistances(0, 0, 0, 0), None)

    with pytest.raises(HeadingError, match="time regression"):
        run_estimation([sample(0.0), sample(1.0), sample(0.5)], CONFIG, planar_only=True)
    with pytest.raises(HeadingError, match="sample gap"):
        run_estimation([sample(0.0), sample(2.0)], CONFIG, planar_only=True)
    with pytest.raises(HeadingError, match="yaw rate"):
        run_estimation([sample(0.0, 11.0), sample(0.02)], CONFIG, planar_only=True)
    with pytest.raises(PlanarError, match="2 aligned samples"):
        run_estimation([sample(0.0)], CONFIG, planar_only=True)


def test_icr_failure_names_sample():
    samples = [
        OdometrySample(0.0, 0.0, WheelDistances(0, 0, 0, 0), None),
        OdometrySample(0.02, 5.0, WheelDistances(0.001, 0.001, 0.001, 0.001), None),
    ]
    with pytest.raises(PlanarError, match="sample 1"):
        run_estimation(samples, CONFIG, planar_only=True)


def test_output_row_count_matches_samples():
    res, samples = simulate_samples(ManeuverSpec((Segment(duration=2, v0=1.0, v1=1.0),)))
    est = run_estimation(samples, CONFIG, reference_plane=nominal_plane(res))
    text = format_trajectory(est)
    assert len(text.strip().splitlines()) == len(samples) + 1
    susp = format_suspension(est)
    assert len(susp.strip().splitlines()) == len(samples) + 1


def test_format_trajectory_precision_round_trip():
    res, samples = simulate_samples(ManeuverSpec((Segment(duration=1, v0=1.0, v1=1.0, kappa=0.1),)))
    est = run_estimation(samples, CONFIG, reference_plane=nominal_plane(res))
    line = format_trajectory(est).strip().splitlines()[-1]
    t, x, y, theta = (float(v) for v in line.split(","))
    assert x == est.x[-1]  # 17 significant digits round-trip the float exactly
    assert theta == est.theta[-1]


def test_format_sensor_poses_columns():
    res, samples = simulate_samples(ManeuverSpec((Segment(duration=1, v0=1.0, v1=1.0),)))
    calib = Calibration(
        nominal_plane(res),
        {
            "FV": SensorExtrinsics("FV", np.eye(3), vec3(3.8, 0.0, 0.6)),
            "RV": SensorExtrinsics("RV", np.eye(3), vec3(-0.9, 0.0, 0.88)),
        },
    )
    est = run_estimation(samples, CONFIG, calibration=calib)
    lines = format_sensor_poses(est).strip().splitlines()
    assert lines[0].startswith("t,sensor_id,r11")
    assert len(lines) == 2 * len(samples) + 1
    first = lines[1].split(",")
    assert first[1] == "FV"
    assert len(first) == 14
