"""Parametric model of a waveguide-integrated NbN nanowire detector.

The deterministic part (absorption, bias/temperature efficiency curve, dark
counts, kinetic inductance, critical current, output waveform) is a set of
closed-form phenomenological relations calibrated to measured anchor points.
``sample_detection_events`` turns it into a seeded Monte Carlo click stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tcspc import TagStream

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))

DEFAULT_TC = 10.5  # K
DEFAULT_JC0 = 8.0e10  # A/m^2 at T = 0
DEFAULT_LOAD = 50.0  # ohm

# 70 nm x 80 um wire, 1.4 ns decay into 50 ohm: 61.25 pH per square
SHEET_INDUCTANCE_PH = 1400e-12 * DEFAULT_LOAD / (80e-6 / 70e-9) * 1e12


@dataclass(frozen=True)
class EfficiencyCurveParams:
    """Logistic internal-efficiency curve with a per-temperature table.

    ``table`` rows are ``(temperature_K, plateau_level, inflection_bias)``;
    between rows both columns are interpolated linearly, outside the table
    the nearest row is used.
    """

    steepness: float
    table: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        rows = tuple(sorted(tuple(float(v) for v in row) for row in self.table))
        if not rows:
            raise ValueError("efficiency table needs at least one temperature row")
        for temperature, plateau, inflection in rows:
            if not 0.0 <= plateau <= 1.0:
                raise ValueError(f"plateau level {plateau} at {temperature} K outside [0, 1]")
            if not 0.0 < inflection < 1.0:
                raise ValueError(f"inflection bias {inflection} at {temperature} K outside (0, 1)")
        if self.steepness <= 0:
            raise ValueError("steepness must be positive")
        object.__setattr__(self, "table", rows)

    def at(self, temperature: float) -> tuple[float, float]:
        temps = [row[0] for row in self.table]
        plateau = float(np.interp(temperature, temps, [row[1] for row in self.table]))
        inflection = float(np.interp(temperature, temps, [row[2] for row in self.table]))
        return plateau, inflection


@dataclass(frozen=True)
class DarkCountParams:
    """Dark count rate ``ref_rate * exp(k_b (b - b_ref) + k_T (T - T_ref))``."""

    ref_rate: float  # Hz at the reference point
    ref_bias: float = 0.99
    ref_temperature: float = 1.4
    bias_slope: float = 60.0
    temperature_slope: float = 1.0  # 1/K

    def __post_init__(self):
        if self.ref_rate < 0:
            raise ValueError("dark count reference rate must be non-negative")
        if self.bias_slope <= 0 or self.temperature_slope <= 0:
            raise ValueError("dark count slopes must be positive")


@dataclass(frozen=True)
class NanowireDesign:
    width: float  # nm
    length: float  # um, total (both arms of the U)
    film_thickness: float = 3.5  # nm
    absorption_rate: float = 1.0  # dB/um
    sheet_inductance: float = SHEET_INDUCTANCE_PH  # pH per square
    critical_temperature: float = DEFAULT_TC  # K
    critical_current_density: float = DEFAULT_JC0  # A/m^2 at T = 0
    efficiency: EfficiencyCurveParams | None = field(default=None, compare=True)
    dark_counts: DarkCountParams | None = None
    name: str = ""

    def __post_init__(self):
        for attr in ("width", "film_thickness"):
            if getattr(self, attr) <= 0:
                raise ValueError(f"{attr} must be positive")
        if self.length < 0:
            raise ValueError("length must be non-negative")
        if self.absorption_rate < 0:
            raise ValueError("absorption_rate must be non-negative")
        if self.critical_temperature <= 0:
            raise ValueError("critical_temperature must be positive")

    @property
    def squares(self) -> float:
        return self.length * 1e3 / self.width


@dataclass(frozen=True)
class BiasPoint:
    bias_fraction: float  # I_b / I_c
    temperature: float  # K

    def __post_init__(self):
        if not 0.0 <= self.bias_fraction < 1.0:
            raise ValueError(f"bias_fraction must lie in [0, 1), got {self.bias_fraction}")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")


@dataclass(frozen=True)
class DetectorTimingParams:
    jitter_fwhm: float = 18.4  # ps
    dead_time_multiplier: float = 3.0

    def __post_init__(self):
        if self.jitter_fwhm < 0:
            raise ValueError("jitter_fwhm must be non-negative")
        if self.dead_time_multiplier <= 0:
            raise ValueError("dead_time_multiplier must be positive")

    @property
    def jitter_sigma(self) -> float:
        return self.jitter_fwhm / FWHM_PER_SIGMA


def absorption_efficiency(design: NanowireDesign) -> float:
    """Fraction of guided light absorbed along the wire."""
    return 1.0 - 10.0 ** (-design.absorption_rate * design.length / 10.0)


def _logistic(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def internal_efficiency(params: EfficiencyCurveParams, bias: BiasPoint) -> float:
    plateau, inflection = params.at(bias.temperature)
    return plateau * float(_logistic(params.steepness * (bias.bias_fraction - inflection)))


def on_chip_efficiency(design: NanowireDesign, bias: BiasPoint) -> float:
    """On-chip detection efficiency: absorption times internal efficiency."""
    if design.efficiency is None:
        raise ValueError(f"design {design.name or design!r} has no efficiency curve")
    return absorption_efficiency(design) * internal_efficiency(design.efficiency, bias)


def calibrate_efficiency(
    absorption: float,
    anchors,
    steepness: float,
) -> EfficiencyCurveParams:
    """Solve plateau levels so the curve passes exactly through ``anchors``.

    ``anchors`` holds ``(temperature, bias_fraction, ocde, inflection)``; one
    anchor per temperature row.
    """
    rows = []
    for temperature, bias_fraction, ocde, inflection in anchors:
        shape = float(_logistic(steepness * (bias_fraction - inflection)))
        plateau = ocde / (absorption * shape)
        if plateau > 1.0:
            raise ValueError(
                f"anchor OCDE {ocde} at bias {bias_fraction} unreachable with inflection {inflection}"
            )
        rows.append((temperature, plateau, inflection))
    return EfficiencyCurveParams(steepness=steepness, table=tuple(rows))


def dark_count_rate(design: NanowireDesign, bias: BiasPoint) -> float:
    params = design.dark_counts
    if params is None:
        return 0.0
    exponent = params.bias_slope * (bias.bias_fraction - params.ref_bias) + params.temperature_slope * (
        bias.temperature - params.ref_temperature
    )
    return params.ref_rate * math.exp(exponent)


def kinetic_inductance(design: NanowireDesign) -> float:
    """Kinetic inductance in nH (sheet inductance times number of squares)."""
    return design.sheet_inductance * design.squares * 1e-3


def recovery_time(design: NanowireDesign, load_ohms: float = DEFAULT_LOAD) -> float:
    """Current-recovery (output decay) time ``L_k / R_load`` in ps."""
    if load_ohms <= 0:
        raise ValueError("load resistance must be positive")
    return kinetic_inductance(design) * 1e3 / load_ohms


def width_for_recovery_time(length_um: float, target_ps: float, sheet_inductance: float = SHEET_INDUCTANCE_PH,
                            load_ohms: float = DEFAULT_LOAD) -> float:
    """Wire width (nm) at which a wire of ``length_um`` recovers in ``target_ps``."""
    squares = target_ps * 1e-12 * load_ohms / (sheet_inductance * 1e-12)
    return length_um * 1e3 / squares


def critical_current(design: NanowireDesign, temperature: float) -> float:
    """Critical current in uA."""
    tc = design.critical_temperature
    if temperature >= tc:
        raise ValueError(f"temperature {temperature} K is at or above Tc = {tc} K; the wire is normal")
    if temperature < 0:
        raise ValueError("temperature must be non-negative")
    area = design.width * 1e-9 * design.film_thickness * 1e-9
    return design.critical_current_density * (1.0 - (temperature / tc) ** 2) ** 1.5 * area * 1e6


def dead_time(design: NanowireDesign, timing: DetectorTimingParams, load_ohms: float = DEFAULT_LOAD) -> float:
    return timing.dead_time_multiplier * recovery_time(design, load_ohms)


def apply_dead_time(times: np.ndarray, dead: float) -> np.ndarray:
    """Boolean keep-mask for a sorted stream under a non-paralyzable dead time."""
    keep = np.ones(times.size, dtype=bool)
    if times.size < 2 or dead <= 0 or np.all(np.diff(times) >= dead):
        return keep
    last = -math.inf
    for i, t in enumerate(times.tolist()):
        if t - last < dead:
            keep[i] = False
        else:
            last = t
    return keep


def sample_detection_events(
    arrivals,
    design: NanowireDesign,
    bias: BiasPoint,
    timing: DetectorTimingParams,
    window: float,
    rng_seed,
    *,
    ocde: float | None = None,
    dark_rate: float | None = None,
    load_ohms: float = DEFAULT_LOAD,
    extra_jitter_fwhm: float = 0.0,
    channel: int = 0,
) -> TagStream:
    """Seeded Monte Carlo click stream for optical pulses hitting one detector.

    ``arrivals`` is a sequence (or ``(N, 2)`` array) of ``(time_ps,
    mean_photons)``. A pulse clicks with probability ``1 - exp(-ocde * mu)``;
    the click time carries Gaussian jitter. Dark counts are a homogeneous
    Poisson process over ``[0, window)``. Clicks within the dead time of an
    earlier registered click are lost. Times are truncated to integer ps.

    ``ocde`` and ``dark_rate`` override the design model when given;
    ``extra_jitter_fwhm`` adds an independent Gaussian term (instrument
    jitter) in quadrature.
    """
    if window <= 0:
        raise ValueError("window must be positive")
    data = np.asarray(arrivals, dtype=float).reshape(-1, 2)
    pulse_times, mean_photons = data[:, 0], data[:, 1]
    if pulse_times.size > 1 and np.any(np.diff(pulse_times) < 0):
        raise ValueError("arrivals must be sorted by time")
    if np.any(mean_photons < 0):
        raise ValueError("mean photon numbers must be non-negative")

    eta = on_chip_efficiency(design, bias) if ocde is None else ocde
    rate = dark_count_rate(design, bias) if dark_rate is None else dark_rate
    sigma = math.hypot(timing.jitter_fwhm, extra_jitter_fwhm) / FWHM_PER_SIGMA
    rng = np.random.default_rng(rng_seed)

    p_click = -np.expm1(-eta * mean_photons)
    clicked = rng.random(pulse_times.size) < p_click
    clicks = pulse_times[clicked]
    if sigma > 0:
        clicks = clicks + rng.normal(0.0, sigma, clicks.size)
    n_dark = rng.poisson(rate * window * 1e-12)
    darks = rng.uniform(0.0, window, n_dark)

    times = np.concatenate([clicks, darks])
    times = times[(times >= 0) & (times < window)]
    times = np.sort(np.floor(times).astype(np.int64), kind="stable")
    times = times[apply_dead_time(times, dead_time(design, timing, load_ohms))]
    return TagStream(np.full(times.size, channel, dtype=np.int16), times)


@dataclass(frozen=True)
class Waveform:
    time: np.ndarray  # ps
    voltage: np.ndarray  # uV, before amplification
    max_slope: float  # uV/ps
    amplitude: float  # uV


def pulse_amplitude(design: NanowireDesign, bias: BiasPoint, load_ohms: float = DEFAULT_LOAD) -> float:
    """Output step height in uV: bias current dumped into the load."""
    return bias.bias_fraction * critical_current(design, bias.temperature) * load_ohms


def rise_time_for_slope(design: NanowireDesign, bias: BiasPoint, slope: float, load_ohms: float = DEFAULT_LOAD) -> float:
    """Rise constant (ps) giving a leading-edge slope of ``slope`` uV/ps."""
    return pulse_amplitude(design, bias, load_ohms) / slope


def electrical_pulse_waveform(
    design: NanowireDesign,
    bias: BiasPoint,
    t_grid,
    *,
    rise_time: float | None = None,
    onset: float = 0.0,
    load_ohms: float = DEFAULT_LOAD,
    noise: float = 0.0,
    rng_seed=None,
) -> Waveform:
    """Detector output ``A (1 - e^{-t/tau_r}) e^{-t/tau_d}`` after ``onset``.

    The steepest point is the onset itself, where the slope is ``A / tau_r``.
    ``noise`` is an optional Gaussian voltage noise (uV rms).
    """
    t = np.asarray(t_grid, dtype=float)
    if t.size > 1 and np.any(np.diff(t) <= 0):
        raise ValueError("t_grid must be increasing")
    tau_r = REFERENCE_RISE_TIME if rise_time is None else rise_time
    tau_d = recovery_time(design, load_ohms)
    amplitude = pulse_amplitude(design, bias, load_ohms)
    dt = np.clip(t - onset, 0.0, None)
    voltage = amplitude * -np.expm1(-dt / tau_r) * np.exp(-dt / tau_d)
    if noise > 0:
        voltage = voltage + np.random.default_rng(rng_seed).normal(0.0, noise, t.size)
    return Waveform(t, voltage, amplitude / tau_r, amplitude)


# the 70 nm x 80 um wire at its 1.64 K / 0.99 I_c operating point has an 8 uV/ps leading edge
REFERENCE_SLOPE = 8.0  # uV/ps
REFERENCE_RISE_TIME = rise_time_for_slope(
    NanowireDesign(width=70.0, length=80.0), BiasPoint(0.99, 1.64), REFERENCE_SLOPE
)
