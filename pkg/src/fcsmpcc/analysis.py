"""Post-hoc metrics on simulation traces: current THD, ripple, and
load-step response (peak speed error and recovery time)."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .sim import Trace

STARTUP_EXCLUDE_S = 0.04


class NoRecoveryError(ValueError):
    """The signal never settles inside its tolerance band."""


@dataclass
class ThdReport:
    phases: dict[str, float]
    fundamental: float
    window: tuple[float, float]
    harmonics: int
    periods: int

    @property
    def average(self) -> float:
        return float(np.mean(list(self.phases.values())))


@dataclass
class StepMetrics:
    e_max: float
    t_c: float
    t_peak: float
    t_c_torque: float | None = None


def harmonic_amplitudes(samples, sample_rate: float, fundamental: float) -> np.ndarray:
    """Amplitudes c_1..c_H at integer multiples of ``fundamental``, with H set
    by the Nyquist limit. The window must hold a whole number of periods."""
    x = np.asarray(samples, dtype=float)
    n = len(x)
    if n == 0:
        raise ValueError("empty sample window")
    if not (fundamental > 0 and sample_rate > 0):
        raise ValueError("sample_rate and fundamental must be positive")
    periods = n * fundamental / sample_rate
    p = int(round(periods))
    if p < 1 or abs(periods - p) > 1e-6 * max(1.0, periods):
        raise ValueError(f"window spans {periods:.6f} fundamental periods, not an integer")
    spectrum = np.fft.rfft(x)
    h_max = int(math.floor(sample_rate / 2.0 / fundamental + 1e-9))
    amps = np.empty(h_max)
    for h in range(1, h_max + 1):
        k = h * p
        scale = 1.0 if 2 * k == n else 2.0
        amps[h - 1] = scale * abs(spectrum[k]) / n
    return amps


def thd(samples, sample_rate: float, fundamental: float) -> float:
    """Total harmonic distortion in percent over all harmonics up to Nyquist."""
    amps = harmonic_amplitudes(samples, sample_rate, fundamental)
    full_scale = float(np.max(np.abs(samples)))
    if full_scale == 0.0 or amps[0] < 1e-12 * full_scale:
        raise ValueError("fundamental amplitude is negligible; THD undefined")
    return 100.0 * math.sqrt(float(np.sum(amps[1:] ** 2))) / amps[0]


def trace_thd(trace: Trace, window: tuple[float, float] | None = None,
              columns: Sequence[str] = ("ia", "ib", "ic")) -> ThdReport:
    """THD of the phase currents over the largest whole number of electrical
    periods ending at the window's end.

    The fundamental comes from the mean speed over the window. The sample
    count is rounded to whole periods and the fundamental snapped to match,
    so the estimate is leakage-free.
    """
    t = trace["t"]
    if window is None:
        window = (STARTUP_EXCLUDE_S, float(t[-1]) + trace.Ts)
    t0, t1 = window
    mask = trace.mask(t0, t1)
    if not mask.any():
        raise ValueError(f"window {window} selects no samples")
    fs = 1.0 / trace.Ts
    rpm = float(np.mean(np.abs(trace["omega_m_rpm"][mask])))
    f_est = trace.pole_pairs * rpm / 60.0
    if f_est <= 0:
        raise ValueError("machine is not rotating in the THD window")
    n_avail = int(mask.sum())
    periods = int(math.floor(n_avail * f_est / fs + 1e-9))
    if periods < 1:
        raise ValueError("THD window shorter than one electrical period")
    n = int(round(periods * fs / f_est))
    n = min(n, n_avail)
    f_used = periods * fs / n
    idx = np.nonzero(mask)[0][-n:]
    phases = {c: thd(trace[c][idx], fs, f_used) for c in columns}
    h = int(math.floor(fs / 2.0 / f_used + 1e-9))
    span = (float(t[idx[0]]), float(t[idx[-1]] + trace.Ts))
    return ThdReport(phases=phases, fundamental=f_used, window=span, harmonics=h, periods=periods)


def ripple(values) -> tuple[float, float]:
    """(peak-to-peak, RMS about the mean)."""
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise ValueError("empty ripple window")
    return float(np.ptp(x)), float(np.sqrt(np.mean((x - x.mean()) ** 2)))


def _recovery_time(t: np.ndarray, err: np.ndarray, band: np.ndarray, t_disturb: float) -> float | None:
    outside = np.abs(err) > band
    if not outside.any():
        return 0.0
    last = int(np.nonzero(outside)[0][-1])
    if last == len(err) - 1:
        return None
    return float(t[last + 1] - t_disturb)


def moving_average(x: np.ndarray, n: int) -> np.ndarray:
    if n <= 1:
        return x
    kernel = np.ones(n) / n
    # trailing average so the filtered signal does not see the future
    padded = np.concatenate([np.full(n - 1, x[0]), x])
    return np.convolve(padded, kernel, mode="valid")


def step_metrics(t, speed, ref, t_disturb: float, band_fraction: float = 0.01,
                 t_end: float | None = None, torque=None, torque_band_fraction: float = 0.02,
                 torque_smooth: int = 20) -> StepMetrics:
    """Response indicators after a load disturbance at ``t_disturb``.

    ``e_max`` is the signed extremum of speed minus reference. ``t_c`` is the
    time until the speed error enters ``band_fraction * |ref|`` and stays
    there until ``t_end``. Torque recovery (optional) is measured against the
    mean of the final fifth of the window after a trailing moving average of
    ``torque_smooth`` samples; it is None when the band is never held.
    """
    t = np.asarray(t, dtype=float)
    speed = np.asarray(speed, dtype=float)
    ref = np.broadcast_to(np.asarray(ref, dtype=float), speed.shape)
    if t_end is None:
        t_end = float(t[-1]) + 1.0
    if not (t[0] <= t_disturb < t_end) or t_disturb > t[-1]:
        raise ValueError(f"t_disturb={t_disturb} lies outside the trace")
    # half-sample slack so float time grids do not drop the first sample
    dt = float(np.min(np.diff(t))) if len(t) > 1 else 0.0
    m = (t >= t_disturb - 0.5 * dt) & (t < t_end - 0.5 * dt)
    tw, err = t[m], speed[m] - ref[m]
    if err.size == 0:
        raise ValueError("empty step-response window")
    k = int(np.argmax(np.abs(err)))
    e_max = float(err[k])
    t_c = _recovery_time(tw, err, band_fraction * np.abs(ref[m]), t_disturb)
    if t_c is None:
        raise NoRecoveryError(f"speed never holds the ±{100 * band_fraction:g}% band after t={t_disturb}")

    t_c_torque = None
    if torque is not None:
        te = moving_average(np.asarray(torque, dtype=float)[m], torque_smooth)
        steady = float(np.mean(te[-max(1, len(te) // 5):]))
        band = np.full_like(te, torque_band_fraction * max(abs(steady), 1e-12))
        t_c_torque = _recovery_time(tw, te - steady, band, t_disturb)
    return StepMetrics(e_max=e_max, t_c=t_c, t_peak=float(tw[k] - t_disturb), t_c_torque=t_c_torque)


def trace_step_metrics(trace: Trace, t_disturb: float, t_end: float | None = None,
                       band_fraction: float = 0.01) -> StepMetrics:
    """Step metrics of a trace. Torque is averaged over one electrical period
    at the reference speed, which removes the switching and sector ripple."""
    rpm = float(np.mean(np.abs(trace["omega_ref_rpm"][trace["t"] >= t_disturb])))
    f_e = trace.pole_pairs * rpm / 60.0
    smooth = int(round(1.0 / (f_e * trace.Ts))) if f_e > 0 else 1
    return step_metrics(trace["t"], trace["omega_m_rpm"], trace["omega_ref_rpm"], t_disturb,
                        band_fraction=band_fraction, t_end=t_end, torque=trace["te"],
                        torque_smooth=smooth)


@dataclass
class MetricSpec:
    thd_window: tuple[float, float] | None = None
    ripple_window: tuple[float, float] | None = None
    ripple_columns: tuple[str, ...] = ("omega_m_rpm", "te", "ia")
    t_disturb: float | None = None
    t_end: float | None = None
    band_fraction: float = 0.01


@dataclass
class ComparisonReport:
    labels: list[str]
    rows: dict[str, dict] = field(default_factory=dict)
    reductions: dict[str, dict] = field(default_factory=dict)
    baseline: str = ""
    spec: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False, default=_json_default)

    def thd_table(self) -> str:
        header = ["Strategy", "ia THD %", "ib THD %", "ic THD %", "avg %", "reduction %"]
        body = []
        for lab in self.labels:
            thd_row = self.rows[lab].get("thd")
            if thd_row is None:
                continue
            ph = thd_row["phases"]
            body.append([lab, *(f"{ph[c]:.3f}" for c in ("ia", "ib", "ic")),
                         f"{thd_row['average']:.3f}", _fmt(self.reductions[lab].get("thd_average"))])
        return _align(header, body)

    def step_table(self) -> str:
        header = ["Strategy", "e_max speed (rpm)", "t_c speed (s)", "t_c torque (s)"]
        body = []
        for lab in self.labels:
            st = self.rows[lab].get("step")
            if st is None:
                continue
            if st.get("error"):
                body.append([lab, "-", "not recovered", "-"])
                continue
            body.append([lab, f"{st['e_max']:.3f}", f"{st['t_c']:.4f}", _fmt(st["t_c_torque"], "{:.4f}")])
        return _align(header, body)

    def ripple_table(self) -> str:
        cols = self.spec.get("ripple_columns", [])
        header = ["Strategy", *(f"{c} p-p" for c in cols)]
        body = []
        for lab in self.labels:
            rp = self.rows[lab].get("ripple")
            if rp is None:
                continue
            body.append([lab, *(f"{rp[c]['peak_to_peak']:.4f}" for c in cols)])
        return _align(header, body)

    def to_text(self) -> str:
        parts = []
        for title, table in (("Phase-current THD", self.thd_table()),
                             ("Ripple", self.ripple_table()),
                             ("Load-step response", self.step_table())):
            if table.count("\n") > 1:
                parts.append(f"{title} (baseline: {self.baseline})\n{table}")
        return "\n\n".join(parts) + "\n"


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not JSON serialisable: {type(o)}")


def _fmt(x, pattern="{:.2f}") -> str:
    return "-" if x is None else pattern.format(x)


def _align(header: list[str], body: list[list[str]]) -> str:
    widths = [max(len(r[i]) for r in [header, *body]) for i in range(len(header))]
    line = lambda r: "  ".join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(r, widths)))
    rule = "  ".join("-" * w for w in widths)
    return "\n".join([line(header), rule, *(line(r) for r in body)])


def _reduction(base: float | None, value: float | None) -> float | None:
    if base is None or value is None:
        return None
    if base == 0:
        return 0.0 if value == 0 else None
    return 100.0 * (base - value) / base


def check_same_grid(traces: Mapping[str, Trace]) -> None:
    items = list(traces.items())
    ref_label, ref = items[0]
    for label, tr in items[1:]:
        if not math.isclose(tr.Ts, ref.Ts, rel_tol=1e-12):
            raise ValueError(f"mismatched grid: {label} has Ts={tr.Ts}, {ref_label} has Ts={ref.Ts}")
        if len(tr) != len(ref) or not np.allclose(tr["t"], ref["t"], rtol=0, atol=1e-9):
            raise ValueError(f"mismatched grid: {label} and {ref_label} have different time axes")


def compare_report(traces: Mapping[str, Trace], spec: MetricSpec | None = None,
                   baseline: str | None = None) -> ComparisonReport:
    """Metrics per labelled trace plus percent reductions against the baseline
    (the first label unless given)."""
    if len(traces) < 1:
        raise ValueError("need at least one trace")
    spec = spec or MetricSpec()
    check_same_grid(traces)
    labels = list(traces)
    baseline = baseline or labels[0]
    if baseline not in traces:
        raise ValueError(f"unknown baseline label {baseline!r}")

    rows: dict[str, dict] = {}
    for lab, tr in traces.items():
        row: dict = {}
        rep = trace_thd(tr, spec.thd_window)
        row["thd"] = {"phases": rep.phases, "average": rep.average, "fundamental_hz": rep.fundamental,
                      "window_s": list(rep.window), "harmonics": rep.harmonics, "periods": rep.periods}
        rw = spec.ripple_window or (STARTUP_EXCLUDE_S, float(tr["t"][-1]) + tr.Ts)
        row["ripple"] = {}
        for col in spec.ripple_columns:
            pp, rms = ripple(tr.window(col, *rw))
            row["ripple"][col] = {"peak_to_peak": pp, "rms": rms}
        if spec.t_disturb is not None:
            try:
                sm = trace_step_metrics(tr, spec.t_disturb, spec.t_end, spec.band_fraction)
                row["step"] = asdict(sm)
            except NoRecoveryError as exc:
                row["step"] = {"error": str(exc)}
        rows[lab] = row

    reductions: dict[str, dict] = {}
    base = rows[baseline]
    for lab, row in rows.items():
        red = {"thd_average": _reduction(base["thd"]["average"], row["thd"]["average"])}
        for col in spec.ripple_columns:
            red[f"ripple_{col}"] = _reduction(base["ripple"][col]["peak_to_peak"],
                                              row["ripple"][col]["peak_to_peak"])
        if "step" in row and "e_max" in row["step"] and "e_max" in base.get("step", {}):
            red["e_max"] = _reduction(abs(base["step"]["e_max"]), abs(row["step"]["e_max"]))
            red["t_c"] = _reduction(base["step"]["t_c"], row["step"]["t_c"])
        reductions[lab] = red

    spec_dict = asdict(spec)
    return ComparisonReport(labels=labels, rows=rows, reductions=reductions, baseline=baseline,
                            spec=spec_dict)
