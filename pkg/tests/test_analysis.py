import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fcsmpcc.analysis import (MetricSpec, NoRecoveryError, check_same_grid, compare_report,
                              harmonic_amplitudes, ripple, step_metrics, thd, trace_thd)
from fcsmpcc.sim import ScenarioConfig, Trace, run_scenario

FS = 20000.0
F1 = 200.0 / 3  # 1000 rpm, 4 pole pairs


def wave(amps, periods=10, fs=FS, f=F1, phase=0.3):
    n = int(round(periods * fs / f))
    t = np.arange(n) / fs
    return sum(a * np.sin(2 * np.pi * h * f * t + h * phase) for h, a in amps.items())


def test_pure_sine():
    assert thd(wave({1: 1.0}), FS, F1) <= 1e-8


def test_third_harmonic():
    assert thd(wave({1: 1.0, 3: 0.1}), FS, F1) == pytest.approx(10.0, abs=1e-9)


def test_third_and_fifth():
    assert thd(wave({1: 1.0, 3: 0.1, 5: 0.05}), FS, F1) == pytest.approx(11.180, abs=1e-3)
    assert thd(wave({1: 1.0, 3: 0.1, 5: 0.05}), FS, F1) == pytest.approx(100 * math.sqrt(0.0125), rel=1e-9)


def test_harmonic_count_reaches_nyquist():
    amps = harmonic_amplitudes(wave({1: 2.0, 7: 0.5}), FS, F1)
    assert len(amps) == 150
    assert amps[0] == pytest.approx(2.0) and amps[6] == pytest.approx(0.5)


def test_rejects_fractional_periods():
    x = wave({1: 1.0})
    with pytest.raises(ValueError):
        thd(x[:-7], FS, F1)


def test_rejects_missing_fundamental():
    with pytest.raises(ValueError):
        thd(wave({3: 1.0}), FS, F1)
    with pytest.raises(ValueError):
        thd(np.zeros(300), FS, F1)


@settings(max_examples=30)
@given(st.floats(1e-3, 1e3), st.floats(0, 0.5), st.floats(0, 0.5))
def test_thd_scale_invariant(scale, h3, h5):
    x = wave({1: 1.0, 3: h3, 5: h5})
    assert thd(scale * x, FS, F1) == pytest.approx(thd(x, FS, F1), rel=1e-9, abs=1e-9)


def test_ripple_examples():
    assert ripple(np.full(50, 3.0)) == (0.0, 0.0)
    sq = np.tile([0.5, -0.5], 50)
    assert ripple(sq) == pytest.approx((1.0, 0.5))
    assert ripple(wave({1: 2.0}))[1] == pytest.approx(2.0 / math.sqrt(2), rel=1e-9)
    with pytest.raises(ValueError):
        ripple([])


def dip(depth, t_rec, band=1.0, t_d=0.5, dt=1e-4, t_end=1.0):
    """Speed that drops by ``depth`` (negative) right after ``t_d`` and climbs
    back linearly, touching the ``band`` edge exactly at ``t_d + t_rec``."""
    t = np.arange(0.0, t_end, dt)
    err = np.zeros_like(t)
    after = t >= t_d - dt / 2
    s = t[after] - t_d
    ramp = depth + (-band - depth) * s / t_rec
    err[after] = np.where(s < t_rec - dt / 2, ramp, -band * np.exp(-(s - t_rec) / 0.01))
    return t, 1000.0 + err


def test_no_disturbance():
    t = np.arange(0, 1, 1e-3)
    m = step_metrics(t, np.full_like(t, 1000.0), 1000.0, 0.5)
    assert (m.e_max, m.t_c) == (0.0, 0.0)


def test_fixture_dip_values():
    t, w = dip(-8.32, 0.23)
    m = step_metrics(t, w, 1000.0, 0.5, band_fraction=0.001)
    assert m.e_max == pytest.approx(-8.32, abs=1e-9)
    assert m.t_c == pytest.approx(0.23, abs=1e-4)
    # the same dip never leaves a 1% band of 1000 rpm
    assert step_metrics(t, w, 1000.0, 0.5, band_fraction=0.01).t_c == 0.0


def test_exponential_recovery_inside_band():
    t = np.arange(0, 1, 1e-4)
    w = 1000.0 - 10 * np.exp(-(t - 0.5) / 0.02) * (t >= 0.5)
    m = step_metrics(t, w, 1000.0, 0.5)
    assert m.e_max == pytest.approx(-10.0)
    assert m.t_c == 0.0


def test_no_recovery():
    t = np.arange(0, 1, 1e-3)
    w = np.where(t >= 0.5, 950.0, 1000.0)
    with pytest.raises(NoRecoveryError):
        step_metrics(t, w, 1000.0, 0.5)


def test_disturb_outside_trace():
    t = np.arange(0, 1, 1e-3)
    with pytest.raises(ValueError):
        step_metrics(t, np.full_like(t, 1000.0), 1000.0, 2.0)


@settings(max_examples=30)
@given(st.floats(-5, 5), st.floats(-500, 500))
def test_step_metrics_invariances(shift, offset):
    t, w = dip(-30.0, 0.1)
    base = step_metrics(t, w, 1000.0, 0.5)
    moved = step_metrics(t + shift, w + offset, 1000.0 + offset, 0.5 + shift,
                         band_fraction=0.01 * 1000.0 / (1000.0 + offset))
    assert moved.e_max == pytest.approx(base.e_max, abs=1e-9)
    assert moved.t_c == pytest.approx(base.t_c, abs=1e-6)


def test_torque_recovery():
    t = np.arange(0, 1, 1e-4)
    te = np.where(t < 0.5, 0.0, 5.0 * (1 - np.exp(-(t - 0.5) / 0.01)))
    m = step_metrics(t, np.full_like(t, 1000.0), 1000.0, 0.5, torque=te, torque_smooth=1)
    # 2% band of 5 N m is reached after ln(50) time constants
    assert m.t_c_torque == pytest.approx(0.01 * math.log(50), abs=2e-4)


@pytest.fixture(scope="module")
def pair():
    base = dict(duration=0.15, load_profile=((0.0, 0.0), (0.08, 5.0)))
    return {c: run_scenario(ScenarioConfig(controller=c, **base)) for c in ("PI+MPCC", "PI+IMMPCC")}


def test_trace_thd_fundamental(pair):
    rep = trace_thd(pair["PI+MPCC"], (0.1, 0.15))
    assert rep.fundamental == pytest.approx(F1, rel=5e-3)
    assert rep.periods >= 3
    assert rep.harmonics == math.floor(FS / 2 / rep.fundamental + 1e-9)
    assert 0 < rep.average < 50


def test_compare_identical_is_zero(pair):
    tr = pair["PI+MPCC"]
    spec = MetricSpec(thd_window=(0.1, 0.15), ripple_window=(0.1, 0.15))
    rep = compare_report({"a": tr, "b": tr}, spec)
    assert all(v == 0.0 for v in rep.reductions["b"].values())


def test_compare_report_shape(pair):
    spec = MetricSpec(thd_window=(0.1, 0.15), ripple_window=(0.1, 0.15))
    rep = compare_report({**pair, "again": pair["PI+IMMPCC"]}, spec)
    assert rep.labels == ["PI+MPCC", "PI+IMMPCC", "again"]
    lines = rep.thd_table().splitlines()
    assert len(lines) == 2 + 3
    a, b = rep.rows["PI+MPCC"]["thd"]["average"], rep.rows["PI+IMMPCC"]["thd"]["average"]
    assert rep.reductions["PI+IMMPCC"]["thd_average"] == pytest.approx(100 * (a - b) / a)
    assert '"reductions"' in rep.to_json()


def test_mismatched_grid(pair):
    other = run_scenario(ScenarioConfig(duration=0.15, Ts=25e-6, load_profile=((0.0, 0.0),)))
    with pytest.raises(ValueError, match="mismatched grid"):
        check_same_grid({"a": pair["PI+MPCC"], "b": other})
