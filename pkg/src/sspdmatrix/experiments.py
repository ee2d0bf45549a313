"""End-to-end simulated measurements on one device of a chip layout.

Every runner writes into ``config.out_dir``: ``config.json`` (echo of the
configuration), raw CSV data, ``fit.json`` where a fit is made, an optional SVG
plot and ``report.json`` listing every file by relative path.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np
from scipy import signal

from . import svg
from .chipmatrix import (
    ChipLayout,
    DeviceHandle,
    address_device,
    group_mean_by_width,
    load_chip_config,
    load_reference_chip,
    prescreen_devices,
    survey_critical_currents,
    write_survey_csv,
)
from .circuit import (
    GratingCoupler,
    ballistic_drop_train,
    ballistic_regime_ok,
    ballistic_through_train,
    decay_time_from_ring,
    free_spectral_range,
    nearest_resonance,
    photon_flux_at_detector,
    q_from_decay,
    round_trip_time,
    steady_state_spectrum,
    write_pulse_train_csv,
    write_spectrum_csv,
)
from .detector import (
    BiasPoint,
    DetectorTimingParams,
    dark_count_rate,
    on_chip_efficiency,
    sample_detection_events,
)
from .fit import EXPONENTIAL, FitError, GAUSSIAN, fit_exponential_peaks, fit_gaussian, fit_lorentzian, find_peaks, refine_peak_times
from .presets import EFFICIENCY_CELL, JITTER_CELL, PRESETS, TEMPERATURES
from .tcspc import Histogram, HistogramSpec, TagStream, accumulate_histogram, write_histogram_csv, write_tags_csv

EXPERIMENTS = ("jitter", "ringdown", "efficiency_sweep", "darkcount_sweep", "spectrum", "survey")
STOCHASTIC = {"jitter", "ringdown", "efficiency_sweep", "darkcount_sweep"}
MIN_JITTER_COUNTS = 1000

_EXPECT_KEYS = {
    "jitter": {"fwhm_ps"},
    "ringdown": {"tau_ps", "q", "spacing_ps", "min_peaks"},
    "spectrum": {"spectral_q"},
}


class ExperimentError(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int | None = None
    chip: str | None = None  # None: bundled reference chip
    device: tuple[int, int] | None = None
    preset: str | None = None
    out_dir: str = "results"
    # optical input
    wavelength_nm: float = 1550.0
    rep_rate_hz: float = 50e6
    avg_power_dbm: float = 0.0
    attenuation_db: float = 86.0
    mean_photons: float | None = None  # per pulse at the detector arm; overrides the dB chain
    clicks_per_sync: float | None = None  # choose mean_photons for this click probability
    pulse_fwhm_ps: float = 1.2
    # detector operating point
    bias: float = 0.86
    temperature_k: float = 1.4
    jitter_fwhm_ps: float = 18.4
    instrument_jitter_ps: float = 0.0
    dead_time_multiplier: float = 3.0
    load_ohms: float = 50.0
    # acquisition
    syncs: int = 100_000
    chunk_syncs: int = 500_000
    bin_width_ps: int = 1
    range_ps: int = 500
    pulse_offset_ps: float = 100.0
    save_tags: bool = False
    # ring-down analysis
    port: str = "drop"
    min_peak_separation_ps: float = 40.0
    min_peak_height: float = 1e-3
    # sweeps
    biases: tuple[float, ...] = ()
    temperatures: tuple[float, ...] = ()
    trials: int = 1_000_000
    dark_window_s: float = 10.0
    n_windows: int = 1000
    # spectrum
    span_fsr: float = 3.0
    points: int = 6001
    fit_window_nm: tuple[float, float] | None = None  # default: one FSR around the resonance nearest wavelength_nm
    # survey
    prescreen_db: float = 3.0
    expect: dict = field(default_factory=dict)
    plot: bool = True
    timestamp: bool = True

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        if self.experiment in STOCHASTIC and self.seed is None:
            raise ValueError(f"experiment {self.experiment!r} is stochastic and needs a seed")
        if self.device is not None:
            self.device = (int(self.device[0]), int(self.device[1]))
        self.biases = tuple(float(b) for b in self.biases)
        self.temperatures = tuple(float(t) for t in self.temperatures)
        for name in ("biases", "temperatures"):
            values = getattr(self, name)
            if values and list(values) != sorted(values):
                raise ValueError(f"{name} must be in increasing order")
        if self.port not in ("drop", "through"):
            raise ValueError("port must be 'drop' or 'through'")
        if self.syncs <= 0 or self.trials <= 0:
            raise ValueError("syncs and trials must be positive")

    @classmethod
    def from_preset(cls, name: str, experiment: str, **overrides) -> "ExperimentConfig":
        if name not in PRESETS:
            raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
        preset = PRESETS[name]
        values: dict[str, Any] = {
            "device": preset["device"],
            "bias": preset["bias"],
            "temperature_k": preset["temperature_k"],
            "clicks_per_sync": preset["clicks_per_sync"],
            "syncs": preset["syncs"],
            "expect": {k: v for k, v in preset["expect"].items() if k in _EXPECT_KEYS.get(experiment, ())},
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(experiment=experiment, preset=name, **values)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["device"] = list(self.device) if self.device else None
        out["fit_window_nm"] = list(self.fit_window_nm) if self.fit_window_nm else None
        out["expect"] = {k: list(v) for k, v in self.expect.items()}
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        values = {k: v for k, v in data.items() if k in known}
        if values.get("device") is not None:
            values["device"] = tuple(values["device"])
        if values.get("fit_window_nm") is not None:
            values["fit_window_nm"] = tuple(values["fit_window_nm"])
        values["expect"] = {k: tuple(v) for k, v in values.get("expect", {}).items()}
        return cls(**values)


@dataclass
class ExperimentReport:
    experiment: str
    config: dict
    files: dict[str, str] = field(default_factory=dict)
    results: dict[str, Any] = field(default_factory=dict)
    checks: list[dict] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def check(self, name: str, value: float) -> None:
        if name not in self.config.get("expect", {}):
            return
        target, tolerance = self.config["expect"][name]
        if name.startswith("min_"):
            passed = value >= target
        else:
            passed = abs(value - target) <= tolerance
        self.checks.append(
            {"name": name, "value": float(value), "target": float(target), "tolerance": float(tolerance), "passed": bool(passed)}
        )

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "config": "config.json",
            "files": dict(self.files),
            "results": self.results,
            "checks": self.checks,
            "warnings": self.warnings,
            "passed": self.passed,
        }


# --- helpers ------------------------------------------------------------------


def _layout(config: ExperimentConfig) -> ChipLayout:
    return load_chip_config(config.chip) if config.chip else load_reference_chip()


def _handle(config: ExperimentConfig, default: tuple[int, int]) -> DeviceHandle:
    row, col = config.device or default
    return address_device(_layout(config), row, col)


def _bias(config: ExperimentConfig) -> BiasPoint:
    return BiasPoint(config.bias, config.temperature_k)


def _timing(config: ExperimentConfig) -> DetectorTimingParams:
    return DetectorTimingParams(config.jitter_fwhm_ps, config.dead_time_multiplier)


def _sync_period(config: ExperimentConfig) -> int:
    return int(round(1e12 / config.rep_rate_hz))


def calibrated_mean_photons(config: ExperimentConfig, handle: DeviceHandle) -> float:
    """Photons per laser pulse in the detector arm, from the bench dB chain.

    Uses the device's recorded coupler transmission when one exists.
    """
    coupler = handle.coupler
    recorded = handle.record.measured.get("coupler_transmission_db")
    if recorded is not None:
        coupler = GratingCoupler(config.wavelength_nm, coupler.bandwidth_fwhm, min(float(recorded), 0.0))
    return photon_flux_at_detector(
        config.avg_power_dbm, config.rep_rate_hz, config.attenuation_db, coupler, config.wavelength_nm, handle.splitter
    )


def _input_photons(config: ExperimentConfig, handle: DeviceHandle, eta: float, relative_intensities) -> float:
    if config.mean_photons is not None:
        return config.mean_photons
    if config.clicks_per_sync is not None:
        total = float(np.sum(relative_intensities)) * eta
        if total <= 0:
            return 0.0
        # Poisson pulses: P(at least one click) = 1 - exp(-eta * mu * sum I)
        return -math.log1p(-config.clicks_per_sync) / total
    return calibrated_mean_photons(config, handle)


def simulate_histogram(
    offsets,
    photons,
    handle: DeviceHandle,
    config: ExperimentConfig,
    spec: HistogramSpec,
    seed: np.random.SeedSequence,
) -> tuple[Histogram, TagStream | None]:
    """Repeat a per-sync pulse pattern ``config.syncs`` times and histogram the clicks.

    Syncs are simulated in chunks with spawned seeds; chunk histograms are merged.
    """
    offsets = np.asarray(offsets, dtype=float)
    photons = np.asarray(photons, dtype=float)
    n_chunks = max(1, math.ceil(config.syncs / config.chunk_syncs))
    children = seed.spawn(n_chunks)
    hist = Histogram.zeros(spec)
    kept = []
    done = 0
    for child in children:
        n = min(config.chunk_syncs, config.syncs - done)
        sync = np.arange(n, dtype=np.int64) * spec.sync_period
        times = (sync[:, None] + offsets[None, :]).ravel()
        arrivals = np.column_stack([times, np.tile(photons, n)])
        tags = sample_detection_events(
            arrivals,
            handle.design,
            _bias(config),
            _timing(config),
            window=float(n * spec.sync_period),
            rng_seed=child,
            extra_jitter_fwhm=config.instrument_jitter_ps,
            load_ohms=config.load_ohms,
        )
        hist = hist + accumulate_histogram(tags, sync, spec)
        if config.save_tags:
            kept.append(tags.shifted(done * spec.sync_period))
        done += n
    return hist, (TagStream.merge(*kept) if config.save_tags else None)


def _prepare_out(config: ExperimentConfig) -> Path:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
    return out


def _finish(report: ExperimentReport, out: Path) -> ExperimentReport:
    report.files = {"config": "config.json", **report.files}
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    return report


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _write_svg(report, out, name, config, *args, **kwargs):
    if not config.plot:
        return
    (out / name).write_text(svg.plot(*args, timestamp=config.timestamp, **kwargs))
    report.files["plot"] = name


# --- experiments ----------------------------------------------------------------


def run_jitter(config: ExperimentConfig) -> ExperimentReport:
    """Pulsed-laser start, detector stop: Gaussian FWHM of the timing histogram."""
    handle = _handle(config, JITTER_CELL)
    bias = _bias(config)
    eta = on_chip_efficiency(handle.design, bias)
    mu = _input_photons(config, handle, eta, [1.0])
    spec = HistogramSpec(config.bin_width_ps, config.range_ps, _sync_period(config))
    hist, tags = simulate_histogram([config.pulse_offset_ps], [mu], handle, config, spec, np.random.SeedSequence(config.seed))
    if hist.binned < MIN_JITTER_COUNTS:
        raise ExperimentError(f"only {hist.binned} counts in the histogram; need at least {MIN_JITTER_COUNTS} to fit")

    out = _prepare_out(config)
    report = ExperimentReport("jitter", config.to_dict())
    write_histogram_csv(out / "histogram.csv", hist, seed=config.seed)
    report.files["histogram"] = "histogram.csv"
    if tags is not None:
        write_tags_csv(out / "tags.csv", tags)
        report.files["tags"] = "tags.csv"
    result = fit_gaussian(hist)
    _write_json(out / "fit.json", result.to_dict())
    report.files["fit"] = "fit.json"

    fwhm = result["fwhm"]
    configured = math.hypot(config.jitter_fwhm_ps, config.instrument_jitter_ps)
    report.results = {
        "fwhm_ps": fwhm,
        "fwhm_err_ps": result.error("fwhm"),
        "center_ps": result["center"],
        "counts": hist.binned,
        "configured_fwhm_ps": configured,
        "mean_photons": mu,
        "ocde": eta,
    }
    report.check("fwhm_ps", fwhm)
    x = hist.bin_centers
    _write_svg(
        report, out, "jitter.svg", config,
        [svg.Series(x, hist.counts, "histogram", "steps"), svg.Series(x, GAUSSIAN(x, result.params), "Gaussian fit")],
        title=f"Timing jitter: FWHM {fwhm:.2f} ps", xlabel="delay (ps)", ylabel="counts",
    )
    return _finish(report, out)


def peak_spacing(times, heights) -> float:
    """Height-weighted slope of peak time against peak index."""
    t = np.asarray(times, dtype=float)
    w = np.asarray(heights, dtype=float)
    k = np.arange(t.size, dtype=float)
    k_mean = np.average(k, weights=w)
    t_mean = np.average(t, weights=w)
    return float(np.sum(w * (k - k_mean) * (t - t_mean)) / np.sum(w * (k - k_mean) ** 2))


def peak_areas(hist: Histogram, times, half_width: float) -> list[float]:
    """Counts within ``half_width`` ps of each peak time."""
    centers = hist.bin_centers
    return [float(hist.counts[np.abs(centers - t) <= half_width].sum()) for t in times]


def run_ringdown(config: ExperimentConfig) -> ExperimentReport:
    """Ballistic ring-down: histogram the drop (or through) port train and fit the decay."""
    handle = _handle(config, (0, 0))
    ring = handle.ring
    if ring is None:
        raise ExperimentError(f"device {handle.position} has no ring resonator")
    notes = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        ballistic_regime_ok(ring, config.pulse_fwhm_ps)
        train = ballistic_drop_train(ring) if config.port == "drop" else ballistic_through_train(ring)
    notes.extend(str(w.message) for w in caught)

    bias = _bias(config)
    eta = on_chip_efficiency(handle.design, bias)
    visible = train.times + config.pulse_offset_ps < config.range_ps
    offsets = train.times[visible] + config.pulse_offset_ps
    relative = train.relative[visible]
    mu = _input_photons(config, handle, eta, relative)
    spec = HistogramSpec(config.bin_width_ps, config.range_ps, _sync_period(config))
    hist, tags = simulate_histogram(offsets, mu * relative, handle, config, spec, np.random.SeedSequence(config.seed))

    out = _prepare_out(config)
    report = ExperimentReport("ringdown", config.to_dict(), warnings=notes)
    write_histogram_csv(out / "histogram.csv", hist, seed=config.seed)
    write_pulse_train_csv(out / "pulse_train.csv", train.shifted(config.pulse_offset_ps))
    report.files.update(histogram="histogram.csv", pulse_train="pulse_train.csv")
    if tags is not None:
        write_tags_csv(out / "tags.csv", tags)
        report.files["tags"] = "tags.csv"

    peaks = find_peaks(hist, config.min_peak_separation_ps, config.min_peak_height)
    with open(out / "peaks.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["time_ps", "counts"])
        writer.writerows((repr(t), repr(h)) for t, h in peaks)
    report.files["peaks"] = "peaks.csv"
    if len(peaks) < 2:
        (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
        raise ExperimentError(
            f"found {len(peaks)} peak(s) (need 2): {hist.binned} counts, histogram maximum "
            f"{int(hist.counts.max(initial=0))}, threshold {config.min_peak_height:g} of maximum, "
            f"round-trip factor {ring.round_trip_factor:.3g}"
        )
    half = 0.5 * config.min_peak_separation_ps
    refined = refine_peak_times(hist, peaks, half)
    areas = peak_areas(hist, refined, half)
    result = fit_exponential_peaks(list(zip(refined, areas)), include_first=config.port == "drop", poisson_weights=True)
    _write_json(out / "fit.json", result.to_dict())
    report.files["fit"] = "fit.json"
    spacing = peak_spacing(refined, areas)
    tau = result["tau"]
    try:
        analytic_tau = decay_time_from_ring(ring)
    except ValueError:
        analytic_tau = float("nan")
    report.results = {
        "tau_ps": tau,
        "tau_err_ps": result.error("tau"),
        "q": q_from_decay(tau, config.wavelength_nm),
        "n_peaks": len(peaks),
        "spacing_ps": spacing,
        "peak_times_ps": refined,
        "peak_heights": [h for _, h in peaks],
        "peak_areas": areas,
        "analytic_tau_ps": analytic_tau,
        "round_trip_ps": round_trip_time(ring),
        "counts": hist.binned,
        "mean_photons_in": mu,
        "ocde": eta,
    }
    report.check("tau_ps", tau)
    report.check("q", report.results["q"])
    report.check("spacing_ps", spacing)
    report.check("min_peaks", len(peaks))
    x = hist.bin_centers
    t_fit = np.linspace(peaks[0][0], peaks[-1][0], 200)
    _write_svg(
        report, out, "ringdown.svg", config,
        [
            svg.Series(x, np.maximum(hist.counts, 0.5), "histogram", "steps"),
            svg.Series(t_fit, EXPONENTIAL(t_fit, result.params) * peaks[0][1] / areas[0], f"exp fit, tau = {tau:.1f} ps"),
            svg.Series([p[0] for p in peaks], [p[1] for p in peaks], "peaks", "markers"),
        ],
        title=f"{config.port} port ring-down", xlabel="delay (ps)", ylabel="counts", logy=True,
    )
    return _finish(report, out)


def run_efficiency_sweep(config: ExperimentConfig) -> ExperimentReport:
    """Click counting against bias: OCDE = (click rate - dark rate) / photon rate."""
    handle = _handle(config, EFFICIENCY_CELL)
    mu = config.mean_photons if config.mean_photons is not None else calibrated_mean_photons(config, handle)
    if mu <= 0:
        raise ExperimentError("photon rate at the detector is zero; cannot estimate an efficiency")
    biases = config.biases or tuple(np.round(np.linspace(0.05, 0.99, 20), 4))
    temperatures = config.temperatures or TEMPERATURES
    period = _sync_period(config)
    n = config.trials
    window = float(n * period)
    pulse_times = np.arange(n, dtype=float) * period + config.pulse_offset_ps
    arrivals = np.column_stack([pulse_times, np.full(n, mu)])
    points = [(t, b) for t in temperatures for b in biases]
    seeds = np.random.SeedSequence(config.seed).spawn(len(points))

    rows = []
    for (temperature, b), seed in zip(points, seeds):
        bias = BiasPoint(b, temperature)
        tags = sample_detection_events(
            arrivals, handle.design, bias, _timing(config), window, seed, load_ohms=config.load_ohms
        )
        clicks = len(tags)
        dark = dark_count_rate(handle.design, bias)
        photon_rate = mu * config.rep_rate_hz
        seconds = window * 1e-12
        estimate = (clicks / seconds - dark) / photon_rate
        error = math.sqrt(max(clicks, 1)) / seconds / photon_rate
        model = on_chip_efficiency(handle.design, bias)
        rows.append((temperature, b, model, estimate, error, clicks, dark))

    out = _prepare_out(config)
    report = ExperimentReport("efficiency_sweep", config.to_dict())
    with open(out / "efficiency.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["temperature_k", "bias", "ocde_model", "ocde_mc", "ocde_err", "clicks", "dark_rate_hz"])
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])
    report.files["data"] = "efficiency.csv"
    z = [abs(r[3] - r[2]) / r[4] for r in rows]
    report.results = {"mean_photons": mu, "max_abs_z": max(z), "points": len(rows), "trials_per_point": n}
    report.checks.append(
        {"name": "mc_within_3sigma", "value": max(z), "target": 0.0, "tolerance": 3.0, "passed": bool(max(z) <= 3.0)}
    )
    series = []
    for temperature in temperatures:
        sel = [r for r in rows if r[0] == temperature]
        series.append(svg.Series([r[1] for r in sel], [r[2] for r in sel], f"model {temperature:g} K"))
        series.append(svg.Series([r[1] for r in sel], [r[3] for r in sel], f"MC {temperature:g} K", "markers"))
    _write_svg(report, out, "efficiency.svg", config, series,
               title="On-chip detection efficiency", xlabel="bias current / I_c", ylabel="OCDE")
    return _finish(report, out)


def run_darkcount_sweep(config: ExperimentConfig) -> ExperimentReport:
    """Dark counting with no optical input; Poisson errors and a dispersion index per point."""
    if config.mean_photons:
        raise ExperimentError("dark count sweep runs without optical input; unset mean_photons")
    handle = _handle(config, EFFICIENCY_CELL)
    biases = config.biases or (0.86, 0.9, 0.95, 0.99)
    temperatures = config.temperatures or TEMPERATURES
    window = config.dark_window_s * 1e12
    points = [(t, b) for t in temperatures for b in biases]
    seeds = np.random.SeedSequence(config.seed).spawn(len(points))
    empty = np.zeros((0, 2))
    rows = []
    for (temperature, b), seed in zip(points, seeds):
        bias = BiasPoint(b, temperature)
        tags = sample_detection_events(empty, handle.design, bias, _timing(config), window, seed, load_ohms=config.load_ohms)
        n = len(tags)
        per_window = np.bincount((tags.time * config.n_windows // int(window)).astype(np.int64), minlength=config.n_windows)
        mean = per_window.mean()
        dispersion = float(per_window.var(ddof=1) / mean) if mean > 0 else float("nan")
        rows.append((temperature, b, dark_count_rate(handle.design, bias), n / config.dark_window_s,
                     math.sqrt(n) / config.dark_window_s, n, dispersion))

    out = _prepare_out(config)
    report = ExperimentReport("darkcount_sweep", config.to_dict())
    with open(out / "darkcounts.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["temperature_k", "bias", "rate_model_hz", "rate_mc_hz", "rate_err_hz", "counts", "dispersion"])
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])
    report.files["data"] = "darkcounts.csv"
    report.results = {"points": len(rows), "window_s": config.dark_window_s, "n_windows": config.n_windows}
    series = []
    for temperature in temperatures:
        sel = [r for r in rows if r[0] == temperature]
        series.append(svg.Series([r[1] for r in sel], [r[2] for r in sel], f"model {temperature:g} K"))
        series.append(svg.Series([r[1] for r in sel], [max(r[3], 1e-3) for r in sel], f"MC {temperature:g} K", "markers"))
    _write_svg(report, out, "darkcounts.svg", config, series, title="Dark count rate",
               xlabel="bias current / I_c", ylabel="rate (Hz)", logy=True)
    return _finish(report, out)


def run_spectrum(config: ExperimentConfig) -> ExperimentReport:
    """Continuous-wave transmission around a resonance; Lorentzian Q and FSR."""
    handle = _handle(config, (0, 0))
    ring = handle.ring
    if ring is None:
        raise ExperimentError(f"device {handle.position} has no ring resonator")
    center = nearest_resonance(ring, config.wavelength_nm)
    fsr = free_spectral_range(ring, center)
    wl = np.linspace(center - 0.5 * config.span_fsr * fsr, center + 0.5 * config.span_fsr * fsr, config.points)
    through, drop = steady_state_spectrum(ring, wl)

    out = _prepare_out(config)
    report = ExperimentReport("spectrum", config.to_dict())
    write_spectrum_csv(out / "spectrum.csv", wl, through, drop)
    report.files["data"] = "spectrum.csv"
    try:
        window = config.fit_window_nm or (center - 0.5 * fsr, center + 0.5 * fsr)
        result = fit_lorentzian(wl, through, window=window)
    except FitError as exc:
        raise ExperimentError(f"no resonance could be fitted near {center:.4f} nm: {exc}") from exc
    _write_json(out / "fit.json", result.to_dict())
    report.files["fit"] = "fit.json"

    idx, _ = signal.find_peaks(-through)
    measured_fsr = float(np.mean(np.diff(wl[idx]))) if idx.size > 1 else float("nan")
    try:
        temporal_q = q_from_decay(decay_time_from_ring(ring), config.wavelength_nm)
    except ValueError:
        temporal_q = float("nan")
    q = result["q"]
    report.results = {
        "q_lorentzian": q,
        "q_temporal": temporal_q,
        "q_ratio": q / temporal_q,
        "resonance_nm": result["center"],
        "fwhm_nm": result["fwhm"],
        "fsr_nm": measured_fsr,
        "fsr_analytic_nm": fsr,
        "grid_step_nm": float(wl[1] - wl[0]),
    }
    report.check("spectral_q", q)
    _write_svg(
        report, out, "spectrum.svg", config,
        [svg.Series(wl, through, "through"), svg.Series(wl, drop, "drop")],
        title=f"Ring transmission, Lorentzian Q = {q:,.0f}", xlabel="wavelength (nm)", ylabel="transmission",
    )
    return _finish(report, out)


def run_survey(config: ExperimentConfig) -> ExperimentReport:
    """Prescreen couplers, then tabulate critical currents of the retained devices."""
    layout = _layout(config)
    out = _prepare_out(config)
    report = ExperimentReport("survey", config.to_dict())
    if not layout.cells:
        report.warnings.append("layout has no devices; survey is empty")
        write_survey_csv(out / "survey.csv", [])
        report.files["data"] = "survey.csv"
        report.results = {"devices": 0, "screened_out": [], "rows": 0, "group_mean_ic_ua": {}}
        return _finish(report, out)
    screened = prescreen_devices(layout, threshold_db=config.prescreen_db) if layout.reference_couplers else layout
    if not layout.reference_couplers:
        report.warnings.append("no reference couplers in the layout; prescreening skipped")
    rows = survey_critical_currents(screened, config.temperature_k)
    write_survey_csv(out / "survey.csv", rows)
    report.files["data"] = "survey.csv"
    means = group_mean_by_width(rows)
    report.results = {
        "devices": len(layout.cells),
        "screened_out": [list(p) for p, rec in sorted(screened.cells.items()) if rec.screened_out],
        "rows": len(rows),
        "group_mean_ic_ua": {f"{w:g}": v for w, v in means.items()},
    }
    _write_svg(
        report, out, "survey.svg", config,
        [svg.Series([r.width_nm for r in rows], [r.ic_ua for r in rows], "devices", "markers")],
        title=f"Critical current at {config.temperature_k:g} K", xlabel="wire width (nm)", ylabel="I_c (uA)",
    )
    return _finish(report, out)


RUNNERS = {
    "jitter": run_jitter,
    "ringdown": run_ringdown,
    "efficiency_sweep": run_efficiency_sweep,
    "darkcount_sweep": run_darkcount_sweep,
    "spectrum": run_spectrum,
    "survey": run_survey,
}


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    return RUNNERS[config.experiment](config)
