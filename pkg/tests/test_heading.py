import numpy as np
import pytest

from odo25d.errors import HeadingError
from odo25d.heading import HeadingState, YawSample, step_heading


def integrate(samples, max_gap=10.0):
    state = HeadingState.start(samples[0])
    for s in samples[1:]:
        _, state = step_heading(state, s, max_gap=max_gap)
    return state.theta


def test_constant_rate_step():
    state = HeadingState.start(YawSample(0.0, 0.10))
    delta, state = step_heading(state, YawSample(0.02, 0.10))
    assert delta == pytest.approx(0.002, abs=1e-18)
    assert state.theta == pytest.approx(0.002, abs=1e-18)


def test_stationary():
    state = HeadingState.start(YawSample(0.0, 0.0))
    delta, state = step_heading(state, YawSample(0.02, 0.0))
    assert delta == 0.0
    assert state.theta == 0.0


def test_linear_ramp_exact_on_any_partition():
    # theta'(t) = 0.2 t integrates to 0.1 rad over [0, 1] for any partition,
    # because the trapezoid rule is exact on linear integrands.
    rng = np.random.default_rng(11)
    for _ in range(20):
        cuts = np.sort(rng.uniform(0.0, 1.0, size=rng.integers(1, 40)))
        ts = np.concatenate([[0.0], cuts, [1.0]])
        samples = [YawSample(float(t), 0.2 * float(t)) for t in ts]
        assert integrate(samples) == pytest.approx(0.1, abs=1e-15)


def test_additivity_bitwise():
    rng = np.random.default_rng(5)
    ts = np.sort(rng.uniform(0.0, 2.0, size=60))
    samples = [YawSample(float(t), float(rng.normal(0.0, 0.5))) for t in ts]
    whole = integrate(samples)

    split = 30
    state = HeadingState.start(samples[0])
    for s in samples[1:split]:
        _, state = step_heading(state, s)
    for s in samples[split:]:
        _, state = step_heading(state, s)
    assert state.theta == whole  # same op order, bit identical


def test_positive_rates_strictly_increase():
    ts = np.linspace(0.0, 1.0, 51)
    samples = [YawSample(float(t), 0.3) for t in ts]
    state = HeadingState.start(samples[0])
    prev = state.theta
    for s in samples[1:]:
        _, state = step_heading(state, s)
        assert state.theta > prev
        prev = state.theta


def test_heading_starts_at_zero():
    state = HeadingState.start(YawSample(5.0, 1.0))
    assert state.theta == 0.0


def test_time_regression_rejected():
    state = HeadingState.start(YawSample(1.0, 0.0))
    with pytest.raises(HeadingError, match="time regression"):
        step_heading(state, YawSample(0.5, 0.0))


def test_equal_timestamps_are_a_zero_step():
    state = HeadingState.start(YawSample(1.0, 0.3))
    delta, state = step_heading(state, YawSample(1.0, 0.5))
    assert delta == 0.0


def test_sample_gap_rejected():
    state = HeadingState.start(YawSample(0.0, 0.0))
    with pytest.raises(HeadingError, match="sample gap"):
        step_heading(state, YawSample(0.6, 0.0))
    # configurable guard
    delta, _ = step_heading(state, YawSample(0.6, 0.0), max_gap=1.0)
    assert delta == 0.0


def test_yaw_rate_bound_rejected():
    state = HeadingState.start(YawSample(0.0, 0.0))
    with pytest.raises(HeadingError, match="yaw rate"):
        step_heading(state, YawSample(0.02, 11.0))
