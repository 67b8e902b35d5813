import io
import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from odo25d.errors import IngestError
from odo25d.ingest import (
    ChannelStream,
    RunConfig,
    align,
    load_config,
    parse_config,
    parse_log,
    save_config,
)
from odo25d.planar import VehicleGeometry

M_PER_TICK = 0.023


def make_stream(channel, times, values):
    return ChannelStream(channel, np.asarray(times, dtype=float), np.asarray(values, dtype=float))


def full_streams(t=None):
    """Nine required channels sharing one clock, forward drive."""
    if t is None:
        t = np.arange(0.0, 1.0, 0.02)
    t = np.asarray(t, dtype=float)
    streams = {"yaw_rate": make_stream("yaw_rate", t, np.full(len(t), 0.1))}
    for i, c in enumerate(("wheel_rl", "wheel_rr", "wheel_fl", "wheel_fr")):
        cum = (1.0 + 0.1 * i) * t  # metres, already physical
        streams[c] = make_stream(c, t, cum)
    for c, h in (("susp_fl", 0.30), ("susp_fr", 0.30), ("susp_rl", 0.32), ("susp_rr", 0.32)):
        streams[c] = make_stream(c, t, np.full(len(t), h))
    return streams


# ---------------------------------------------------------------------------
# parse_log
# ---------------------------------------------------------------------------


def test_parse_basic_line():
    streams = parse_log(["0.020,yaw_rate,0.100"], M_PER_TICK)
    assert streams["yaw_rate"].times[0] == 0.020
    assert streams["yaw_rate"].values[0] == 0.100


def test_parse_wheel_tick_conversion():
    streams = parse_log(["0.0,wheel_rl,0", "0.02,wheel_rl,4"], M_PER_TICK)
    assert_allclose(streams["wheel_rl"].values, [0.0, 4 * M_PER_TICK], atol=0.0)
    # a 4-tick step driven backward becomes -0.092 m after alignment signing
    assert 4 * M_PER_TICK == pytest.approx(0.092)


def test_parse_suspension_mm_to_m():
    streams = parse_log(["0.0,susp_fl,310.0"], M_PER_TICK)
    assert streams["susp_fl"].values[0] == pytest.approx(0.310)


def test_parse_empty_file():
    assert parse_log([], M_PER_TICK) == {}
    assert parse_log(io.StringIO(""), M_PER_TICK) == {}


def test_parse_header_and_comments():
    text = "# comment\nt,channel,value\n0.0,yaw_rate,0.1\n"
    streams = parse_log(io.StringIO(text), M_PER_TICK)
    assert len(streams["yaw_rate"].times) == 1


def test_parse_malformed_line_names_line_number():
    lines = ["0.0,yaw_rate,0.1", "0.02,yaw_rate,0.1", "garbage"]
    with pytest.raises(IngestError, match="line 3"):
        parse_log(lines, M_PER_TICK)


def test_parse_bad_value_names_line_number():
    lines = ["0.0,yaw_rate,0.1", "0.02,yaw_rate,abc"]
    with pytest.raises(IngestError, match="line 2"):
        parse_log(lines, M_PER_TICK)


def test_parse_unknown_channel_warns_and_skips(caplog):
    with caplog.at_level("WARNING", logger="odo25d.ingest"):
        streams = parse_log(["0.0,mystery,1.0", "0.0,yaw_rate,0.1"], M_PER_TICK)
    assert "mystery" in caplog.text
    assert "mystery" not in streams


def test_parse_non_monotone_timestamp_rejected():
    lines = ["0.02,yaw_rate,0.1", "0.01,yaw_rate,0.1"]
    with pytest.raises(IngestError, match="non-monotone"):
        parse_log(lines, M_PER_TICK)
    with pytest.raises(IngestError, match="non-monotone"):
        parse_log(["0.02,yaw_rate,0.1", "0.02,yaw_rate,0.1"], M_PER_TICK)


def test_parse_direction_must_be_unit():
    with pytest.raises(IngestError, match="direction"):
        parse_log(["0.0,direction,0.5"], M_PER_TICK)


# ---------------------------------------------------------------------------
# align
# ---------------------------------------------------------------------------


def test_align_identical_clocks_bit_identical():
    streams = full_streams()
    samples = align(streams)
    assert len(samples) == len(streams["yaw_rate"].times)
    for k, s in enumerate(samples):
        assert s.yaw_rate == streams["yaw_rate"].values[k]
        assert s.heights.fl == streams["susp_fl"].values[k]
    # wheel steps reconstruct the cumulative channel exactly
    cum = np.cumsum([s.distances.rl for s in samples])
    assert_allclose(cum, streams["wheel_rl"].values - streams["wheel_rl"].values[0], atol=0.0)


def test_align_first_sample_distances_zero():
    samples = align(full_streams())
    assert samples[0].distances.as_array().tolist() == [0.0, 0.0, 0.0, 0.0]


def test_align_half_rate_suspension_midpoints():
    t = np.arange(0.0, 1.0, 0.02)
    streams = full_streams(t)
    slow_t = t[::2]
    ramp = np.linspace(300.0, 320.0, len(slow_t)) / 1000.0  # metres
    streams["susp_fl"] = make_stream("susp_fl", slow_t, ramp)
    samples = align(streams)
    # midpoint samples are arithmetic means of the slow channel's neighbours
    fl = np.array([s.heights.fl for s in samples])
    t_out = np.array([s.t for s in samples])
    assert t_out[-1] == slow_t[-1]  # no extrapolation past the slow channel
    for k in range(1, len(t_out) - 1, 2):
        left = fl[k - 1]
        right = fl[k + 1]
        assert fl[k] == pytest.approx(0.5 * (left + right), abs=1e-15)


def test_align_restricts_to_common_support():
    t = np.arange(0.0, 3.0, 0.02)
    streams = full_streams(t)
    keep = (t >= 1.0) & (t <= 2.0)
    streams["susp_rr"] = make_stream("susp_rr", t[keep], np.full(int(keep.sum()), 0.32))
    samples = align(streams)
    assert samples[0].t >= 1.0
    assert samples[-1].t <= 2.0


def test_align_missing_channel_named():
    streams = full_streams()
    del streams["wheel_fr"]
    with pytest.raises(IngestError, match="wheel_fr"):
        align(streams)


def test_align_insufficient_overlap():
    streams = full_streams()
    streams["susp_fl"] = make_stream("susp_fl", [0.0, 0.001], [0.30, 0.30])
    with pytest.raises(IngestError, match="insufficient overlap"):
        align(streams)


def test_align_direction_signs_steps():
    t = np.arange(0.0, 0.2, 0.02)
    streams = full_streams(t)
    streams["direction"] = make_stream("direction", t, np.full(len(t), -1.0))
    samples = align(streams)
    assert all(s.distances.rl <= 0.0 for s in samples)


def test_align_planar_only_mode():
    streams = full_streams()
    for c in ("susp_fl", "susp_fr", "susp_rl", "susp_rr"):
        del streams[c]
    with pytest.raises(IngestError):
        align(streams)  # suspension required by default
    samples = align(streams, require_suspension=False)
    assert samples[0].heights is None


def test_align_idempotent():
    samples = align(full_streams())
    t = np.array([s.t for s in samples])
    rebuilt = {
        "yaw_rate": make_stream("yaw_rate", t, [s.yaw_rate for s in samples]),
        "wheel_rl": make_stream("wheel_rl", t, np.cumsum([s.distances.rl for s in samples])),
        "wheel_rr": make_stream("wheel_rr", t, np.cumsum([s.distances.rr for s in samples])),
        "wheel_fl": make_stream("wheel_fl", t, np.cumsum([s.distances.fl for s in samples])),
        "wheel_fr": make_stream("wheel_fr", t, np.cumsum([s.distances.fr for s in samples])),
        "susp_fl": make_stream("susp_fl", t, [s.heights.fl for s in samples]),
        "susp_fr": make_stream("susp_fr", t, [s.heights.fr for s in samples]),
        "susp_rl": make_stream("susp_rl", t, [s.heights.rl for s in samples]),
        "susp_rr": make_stream("susp_rr", t, [s.heights.rr for s in samples]),
    }
    again = align(rebuilt)
    assert len(again) == len(samples)
    for a, b in zip(again, samples):
        assert a.t == b.t
        assert a.yaw_rate == b.yaw_rate
        assert a.distances.as_array().tolist() == b.distances.as_array().tolist()
        assert a.heights.as_array().tolist() == b.heights.as_array().tolist()


def test_align_preserves_totals():
    # resampled per-wheel travel matches the raw channel total within a tick
    rng = np.random.default_rng(13)
    t_fast = np.arange(0.0, 2.0, 0.02)
    t_slow = np.arange(0.0, 2.0, 0.05)
    streams = full_streams(t_fast)
    cum_slow = np.cumsum(rng.uniform(0.0, 0.05, size=len(t_slow)))
    streams["wheel_rl"] = make_stream("wheel_rl", t_slow, cum_slow)
    samples = align(streams)
    got = sum(s.distances.rl for s in samples)
    lo, hi = samples[0].t, samples[-1].t
    raw = np.interp(hi, t_slow, cum_slow) - np.interp(lo, t_slow, cum_slow)
    assert abs(got - raw) < M_PER_TICK


def test_align_nearest_policy():
    t = np.arange(0.0, 0.2, 0.02)
    streams = full_streams(t)
    slow_t = np.array([0.0, 0.1, 0.2])
    streams["susp_fl"] = make_stream("susp_fl", slow_t, np.array([0.30, 0.40, 0.30]))
    samples = align(streams, policy="nearest")
    fl = [s.heights.fl for s in samples]
    assert fl[1] == 0.30  # t=0.02 nearest to 0.0
    assert fl[4] == 0.40  # t=0.08 nearest to 0.1


def test_align_bad_policy():
    with pytest.raises(IngestError, match="policy"):
        align(full_streams(), policy="cubic")


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------


def test_config_round_trip(tmp_path):
    config = RunConfig(
        geometry=VehicleGeometry(1.6, 2.7, rear_steering="adaptive"),
        meters_per_tick=0.02,
        alignment_policy="nearest",
        straightline_epsilon=2e-6,
        max_sample_gap=0.4,
        max_yaw_rate=8.0,
        settling_window=1.5,
        height_smoothing=3,
    )
    path = tmp_path / "config.json"
    save_config(path, config)
    back = load_config(path)
    assert back == config


def test_config_minimal():
    config = parse_config(json.dumps({"track_width": 1.6, "wheelbase": 2.7}))
    assert config.geometry.track_width == 1.6
    assert config.meters_per_tick == 0.023
    assert config.alignment_policy == "linear_interpolation"


def test_config_unknown_key_rejected():
    with pytest.raises(IngestError, match="unknown config keys"):
        parse_config(json.dumps({"track_width": 1.6, "wheelbase": 2.7, "wheel_base": 2.8}))


def test_config_requires_geometry():
    with pytest.raises(IngestError, match="track_width"):
        parse_config(json.dumps({"wheelbase": 2.7}))


def test_config_suspension_override():
    data = {
        "track_width": 1.6,
        "wheelbase": 2.7,
        "suspension_xy": [[0.2, 0.6], [0.2, -0.6], [2.5, 0.6], [2.5, -0.6]],
    }
    config = parse_config(json.dumps(data))
    assert config.geometry.suspension_positions()[2, 0] == 2.5


def test_config_bad_json():
    with pytest.raises(IngestError, match="JSON"):
        parse_config("{not json")
