import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import critical_current_ua, dead_time_loop, recovery_time_ps
from sspdmatrix.detector import (
    REFERENCE_RISE_TIME,
    REFERENCE_SLOPE,
    SHEET_INDUCTANCE_PH,
    BiasPoint,
    DarkCountParams,
    DetectorTimingParams,
    EfficiencyCurveParams,
    NanowireDesign,
    absorption_efficiency,
    apply_dead_time,
    calibrate_efficiency,
    critical_current,
    dark_count_rate,
    dead_time,
    electrical_pulse_waveform,
    internal_efficiency,
    kinetic_inductance,
    on_chip_efficiency,
    recovery_time,
    sample_detection_events,
    width_for_recovery_time,
)
from sspdmatrix.fit import fit_gaussian
from sspdmatrix.presets import make_design
from sspdmatrix.tcspc import Histogram, HistogramSpec

W70 = make_design(70.0, 80.0)
W85 = make_design(85.0, 60.0)
W100 = make_design(100.0, 20.0)


# --- absorption and efficiency ----------------------------------------------------


def test_absorption_values():
    assert absorption_efficiency(NanowireDesign(70, 20)) == pytest.approx(0.99, rel=1e-15)
    assert absorption_efficiency(NanowireDesign(70, 80)) == pytest.approx(1 - 1e-8, rel=1e-15)
    assert absorption_efficiency(NanowireDesign(70, 0)) == 0.0


@given(st.floats(0.0, 100.0), st.floats(0.01, 50.0), st.floats(50.0, 150.0), st.floats(50.0, 150.0))
def test_absorption_increases_with_length_and_ignores_width(length, extra, w1, w2):
    a = absorption_efficiency(NanowireDesign(w1, length, absorption_rate=0.1))
    assert a == absorption_efficiency(NanowireDesign(w2, length, absorption_rate=0.1))
    assert absorption_efficiency(NanowireDesign(w1, length + extra, absorption_rate=0.1)) > a


def test_efficiency_anchors_exact():
    assert on_chip_efficiency(W70, BiasPoint(0.99, 1.64)) == pytest.approx(0.88, abs=1e-12)
    assert on_chip_efficiency(W70, BiasPoint(0.99, 4.0)) == pytest.approx(0.59, abs=1e-12)
    assert on_chip_efficiency(W70, BiasPoint(0.99, 1.4)) == pytest.approx(0.86, abs=1e-12)
    assert on_chip_efficiency(W85, BiasPoint(0.99, 1.4)) == pytest.approx(0.55, abs=1e-12)
    assert on_chip_efficiency(W100, BiasPoint(0.86, 1.4)) == pytest.approx(0.15, abs=1e-12)


def test_calibration_rejects_unreachable_anchor():
    with pytest.raises(ValueError):
        calibrate_efficiency(0.5, [(1.4, 0.99, 0.9, 0.7)], 25.0)


def test_efficiency_table_validation_and_interpolation():
    params = EfficiencyCurveParams(10.0, ((4.0, 0.5, 0.8), (1.0, 0.9, 0.6)))
    assert params.table[0][0] == 1.0
    assert params.at(2.5) == pytest.approx((0.7, 0.7))
    assert params.at(0.5) == (0.9, 0.6)
    with pytest.raises(ValueError):
        EfficiencyCurveParams(10.0, ((1.0, 1.2, 0.5),))
    with pytest.raises(ValueError):
        EfficiencyCurveParams(10.0, ((1.0, 0.5, 1.0),))
    with pytest.raises(ValueError):
        EfficiencyCurveParams(10.0, ())


def test_internal_efficiency_is_logistic():
    params = EfficiencyCurveParams(20.0, ((1.4, 0.8, 0.7),))
    assert internal_efficiency(params, BiasPoint(0.7, 1.4)) == pytest.approx(0.4, rel=1e-14)
    expected = 0.8 / (1.0 + math.exp(-20.0 * (0.9 - 0.7)))
    assert internal_efficiency(params, BiasPoint(0.9, 1.4)) == pytest.approx(expected, rel=1e-14)


@given(
    st.sampled_from([(w, l) for w in (70.0, 85.0, 100.0) for l in (20.0, 40.0, 60.0, 80.0)]),
    st.floats(0.0, 0.999),
    st.floats(0.0, 0.999),
    st.floats(1.0, 5.0),
)
def test_ocde_bounded_and_monotone_in_bias(design, b1, b2, temperature):
    d = make_design(*design)
    lo, hi = sorted((b1, b2))
    e_lo = on_chip_efficiency(d, BiasPoint(lo, temperature))
    e_hi = on_chip_efficiency(d, BiasPoint(hi, temperature))
    assert 0.0 <= e_lo <= e_hi <= 1.0


def test_ocde_needs_a_curve():
    with pytest.raises(ValueError):
        on_chip_efficiency(NanowireDesign(70, 80), BiasPoint(0.5, 1.4))


def test_bias_point_validation():
    with pytest.raises(ValueError):
        BiasPoint(1.0, 1.4)
    with pytest.raises(ValueError):
        BiasPoint(0.5, 0.0)


# --- dark counts -----------------------------------------------------------------------


def test_dark_count_anchors():
    assert dark_count_rate(W70, BiasPoint(0.99, 1.4)) == pytest.approx(450.0, rel=1e-14)
    assert dark_count_rate(W70, BiasPoint(0.86, 1.4)) < 1.0
    assert dark_count_rate(W85, BiasPoint(0.99, 1.4)) == pytest.approx(50.0, rel=1e-14)
    assert dark_count_rate(W100, BiasPoint(0.86, 1.4)) < 1.0
    assert dark_count_rate(NanowireDesign(70, 80), BiasPoint(0.99, 1.4)) == 0.0


@given(st.floats(0.0, 0.99), st.floats(0.001, 0.009), st.floats(1.0, 5.0), st.floats(0.01, 2.0))
def test_dark_counts_increase_with_bias_and_temperature(bias, db, temperature, dt):
    base = dark_count_rate(W70, BiasPoint(bias, temperature))
    assert dark_count_rate(W70, BiasPoint(bias + db, temperature)) > base
    assert dark_count_rate(W70, BiasPoint(bias, temperature + dt)) > base


def test_dark_count_params_validation():
    with pytest.raises(ValueError):
        DarkCountParams(-1.0)
    with pytest.raises(ValueError):
        DarkCountParams(1.0, bias_slope=0.0)


# --- inductance, recovery, critical current ---------------------------------------


def test_recovery_time_anchor():
    assert SHEET_INDUCTANCE_PH == pytest.approx(61.25, rel=1e-14)
    assert recovery_time(W70) == pytest.approx(1400.0, rel=1e-14)
    assert recovery_time(W70) == pytest.approx(recovery_time_ps(70, 80, 61.25), rel=1e-14)
    assert kinetic_inductance(W70) == pytest.approx(70.0, rel=1e-14)
    assert recovery_time(NanowireDesign(70, 0)) == 0.0
    with pytest.raises(ValueError):
        recovery_time(W70, 0.0)


def test_kinetic_inductance_scaling():
    base = kinetic_inductance(NanowireDesign(80, 40))
    assert kinetic_inductance(NanowireDesign(80, 80)) == pytest.approx(2 * base, rel=1e-14)
    assert kinetic_inductance(NanowireDesign(40, 40)) == pytest.approx(2 * base, rel=1e-14)


def test_455ps_short_wire_width():
    # 20 um wire recovering in 455 ps needs ~54 nm under the 1.4 ns calibration
    width = width_for_recovery_time(20.0, 455.0)
    assert width == pytest.approx(53.846, abs=1e-3)
    assert recovery_time(NanowireDesign(width, 20.0)) == pytest.approx(455.0, rel=1e-12)


def test_critical_current_values_and_scaling():
    assert critical_current(W70, 1.4) == pytest.approx(critical_current_ua(70, 3.5, 1.4), rel=1e-14)
    assert critical_current(W70, 1.4) == pytest.approx(19.0797, abs=1e-4)
    assert critical_current(W100, 1.4) / critical_current(W70, 1.4) == pytest.approx(10 / 7, rel=1e-14)
    thick = NanowireDesign(70, 80, film_thickness=7.0)
    assert critical_current(thick, 1.4) == pytest.approx(2 * critical_current(W70, 1.4), rel=1e-14)
    assert critical_current(W70, 10.5 - 1e-9) < 1e-9
    with pytest.raises(ValueError):
        critical_current(W70, 10.5)


@given(st.floats(1.4, 3.99))
def test_critical_current_decreases_with_temperature(t):
    assert critical_current(W70, t + 0.01) < critical_current(W70, t)


# --- event sampling ----------------------------------------------------------------


def _pulses(n, period=20000.0, mu=1.0):
    return np.column_stack([np.arange(n) * period + 100.0, np.full(n, mu)])


TIMING = DetectorTimingParams()


def test_no_efficiency_no_dark_gives_no_tags():
    tags = sample_detection_events(_pulses(1000), W70, BiasPoint(0.5, 1.4), TIMING, 2e7, 1, ocde=0.0, dark_rate=0.0)
    assert len(tags) == 0


def test_ideal_detector_tags_every_pulse():
    arrivals = _pulses(500, mu=50.0)
    tags = sample_detection_events(
        arrivals, W70, BiasPoint(0.5, 1.4), DetectorTimingParams(0.0), 1e7, 1, ocde=1.0, dark_rate=0.0
    )
    np.testing.assert_array_equal(tags.time, arrivals[:, 0].astype(np.int64))


def test_click_count_binomial():
    n, eta = 1_000_000, 0.15
    tags = sample_detection_events(_pulses(n), W100, BiasPoint(0.86, 1.4), TIMING, n * 20000.0, 7, dark_rate=0.0)
    p = 1 - math.exp(-eta)
    assert abs(len(tags) - n * p) <= 3 * math.sqrt(n * p * (1 - p))


def test_sampling_is_deterministic_and_sorted():
    args = (_pulses(20000, 3000.0, 2.0), W70, BiasPoint(0.99, 1.4), TIMING, 6e7)
    a = sample_detection_events(*args, 42)
    b = sample_detection_events(*args, 42)
    c = sample_detection_events(*args, 43)
    assert a == b and a != c
    assert a.is_sorted()


def test_sampling_rejects_unsorted_arrivals():
    with pytest.raises(ValueError):
        sample_detection_events([(10.0, 1.0), (5.0, 1.0)], W70, BiasPoint(0.5, 1.4), TIMING, 100.0, 0)
    with pytest.raises(ValueError):
        sample_detection_events([], W70, BiasPoint(0.5, 1.4), TIMING, 0.0, 0)


def test_dead_time_respected_on_million_events():
    # dense pulses (every 500 ps) against a 4.2 ns dead time
    arrivals = _pulses(1_000_000, 500.0, 5.0)
    tags = sample_detection_events(arrivals, W70, BiasPoint(0.99, 1.4), TIMING, 5e8, 3)
    assert np.diff(tags.time).min() >= dead_time(W70, TIMING)


@settings(max_examples=50)
@given(st.lists(st.integers(0, 10_000), max_size=200), st.integers(0, 500))
def test_apply_dead_time_matches_loop(times, dead):
    times = np.sort(np.array(times, dtype=np.int64))
    kept = times[apply_dead_time(times, dead)]
    assert kept.tolist() == dead_time_loop(times.tolist(), dead)


def test_dark_stream_is_poissonian():
    window = 10e12
    tags = sample_detection_events(np.zeros((0, 2)), W70, BiasPoint(0.99, 1.4), TIMING, window, 11)
    counts = np.bincount((tags.time // int(window / 1000)).astype(int), minlength=1000)
    assert len(tags) == pytest.approx(4500, abs=4 * math.sqrt(4500))
    assert 0.9 <= counts.var(ddof=1) / counts.mean() <= 1.1


def test_jitter_sample_fwhm():
    tags = sample_detection_events(
        _pulses(100_000, mu=100.0), W70, BiasPoint(0.5, 1.4), TIMING, 2e9, 5, ocde=1.0, dark_rate=0.0
    )
    delays = tags.time - (tags.time // 20000) * 20000
    assert delays.std() * 2.3548 == pytest.approx(18.4, rel=0.03)
    spec = HistogramSpec(1, 400, 20000)
    hist = Histogram(spec, np.bincount(delays, minlength=400)[:400])
    assert fit_gaussian(hist)["fwhm"] == pytest.approx(18.4, rel=0.03)


def test_extra_jitter_adds_in_quadrature():
    tags = sample_detection_events(
        _pulses(100_000, mu=100.0), W70, BiasPoint(0.5, 1.4), TIMING, 2e9, 6,
        ocde=1.0, dark_rate=0.0, extra_jitter_fwhm=10.0,
    )
    delays = tags.time - (tags.time // 20000) * 20000
    assert delays.std() * 2.3548 == pytest.approx(math.hypot(18.4, 10.0), rel=0.03)


def test_timing_params_validation():
    assert DetectorTimingParams().jitter_sigma == pytest.approx(18.4 / 2.35482, rel=1e-5)
    with pytest.raises(ValueError):
        DetectorTimingParams(-1.0)
    with pytest.raises(ValueError):
        DetectorTimingParams(18.4, 0.0)


# --- waveform -----------------------------------------------------------------------


def test_waveform_reference_slope():
    bias = BiasPoint(0.99, 1.64)
    wave = electrical_pulse_waveform(W70, bias, np.arange(0.0, 200.0, 0.01))
    assert wave.max_slope == pytest.approx(REFERENCE_SLOPE, rel=1e-12)
    assert np.max(np.diff(wave.voltage) / 0.01) == pytest.approx(REFERENCE_SLOPE, rel=1e-3)
    assert REFERENCE_RISE_TIME == pytest.approx(116.864, abs=1e-3)


def test_waveform_zero_bias_is_flat():
    wave = electrical_pulse_waveform(W70, BiasPoint(0.0, 1.4), np.linspace(0, 1000, 101))
    assert np.all(wave.voltage == 0.0) and wave.amplitude == 0.0


def test_waveform_tail_decays_with_recovery_time():
    t = np.arange(0.0, 12000.0, 1.0)
    wave = electrical_pulse_waveform(W70, BiasPoint(0.86, 1.4), t)
    tail = t > 1500.0
    slope = np.polyfit(t[tail], np.log(wave.voltage[tail]), 1)[0]
    assert -1.0 / slope == pytest.approx(recovery_time(W70), rel=0.01)


def test_waveform_noise_is_seeded():
    grid = np.linspace(0, 100, 11)
    a = electrical_pulse_waveform(W70, BiasPoint(0.5, 1.4), grid, noise=1.0, rng_seed=3)
    b = electrical_pulse_waveform(W70, BiasPoint(0.5, 1.4), grid, noise=1.0, rng_seed=3)
    np.testing.assert_array_equal(a.voltage, b.voltage)
    with pytest.raises(ValueError):
        electrical_pulse_waveform(W70, BiasPoint(0.5, 1.4), [1.0, 0.0])
