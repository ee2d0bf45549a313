"""Passive photonic chain: grating couplers, splitters and microring resonators.

Rings are described in both the continuous-wave spectral domain and the
ballistic time domain, where a short pulse circulates as a discrete packet and
leaves the ring as a train spaced by the round-trip time.

Units used throughout: time in ps, wavelength in nm, ring circumference in mm,
propagation loss ``alpha`` in 1/m (intensity).
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
from scipy.constants import c as C_LIGHT, h as PLANCK

ALL_PASS = "all_pass"
ADD_DROP = "add_drop"

Topology = Literal["all_pass", "add_drop"]

# n_max default: truncate once pulses fall below this fraction of the strongest one
TRAIN_CUTOFF = 1e-6
TRAIN_MAX_ENTRIES = 10_000


class BallisticRegimeWarning(UserWarning):
    """The ring decays faster than the optical pulse is long."""


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(x)


@dataclass(frozen=True)
class GratingCoupler:
    """Fiber-to-chip grating coupler with a Gaussian spectral envelope."""

    center_wavelength: float  # nm
    bandwidth_fwhm: float = 30.0  # nm
    peak_loss_db: float = -13.0

    def __post_init__(self):
        if self.bandwidth_fwhm <= 0:
            raise ValueError(f"bandwidth_fwhm must be positive, got {self.bandwidth_fwhm}")
        if self.peak_loss_db > 0:
            raise ValueError(f"peak_loss_db must be <= 0 dB, got {self.peak_loss_db}")
        if self.center_wavelength <= 0:
            raise ValueError("center_wavelength must be positive")


@dataclass(frozen=True)
class Splitter:
    """Two-output splitter feeding the detector arm and the reference arm.

    ``imbalance_db`` tilts the detector/reference power ratio away from the
    nominal one; the device itself is taken as lossless.
    """

    nominal_ratio: float = 0.5
    imbalance_db: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.nominal_ratio <= 1.0:
            raise ValueError(f"nominal_ratio must lie in [0, 1], got {self.nominal_ratio}")

    def fractions(self) -> tuple[float, float]:
        """Power fractions ``(to_detector, to_reference)``."""
        r = self.nominal_ratio
        if r in (0.0, 1.0):
            return r, 1.0 - r
        odds = r / (1.0 - r) * 10.0 ** (self.imbalance_db / 10.0)
        to_detector = odds / (1.0 + odds)
        return to_detector, 1.0 - to_detector


@dataclass(frozen=True)
class RingResonator:
    """Microring with one (all-pass) or two (add-drop) bus couplers.

    ``t_through``/``t_drop`` are field self-coupling coefficients; ``alpha`` is
    the intensity loss per metre of ring waveguide. ``t_drop`` defaults to
    ``t_through`` for add-drop rings and is fixed to 1 for all-pass rings.
    """

    circumference: float  # mm
    group_index: float
    t_through: float
    alpha: float = 0.0  # 1/m
    topology: Topology = ADD_DROP
    t_drop: float | None = None

    def __post_init__(self):
        if self.topology not in (ALL_PASS, ADD_DROP):
            raise ValueError(f"unknown ring topology {self.topology!r}")
        if self.t_drop is None:
            object.__setattr__(self, "t_drop", self.t_through if self.topology == ADD_DROP else 1.0)
        elif self.topology == ALL_PASS and self.t_drop != 1.0:
            raise ValueError("an all-pass ring has no drop coupler; t_drop must be 1")
        for name in ("t_through", "t_drop"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be non-negative, got {self.alpha}")
        if self.circumference < 0:
            raise ValueError(f"circumference must be non-negative, got {self.circumference}")
        if self.group_index <= 0:
            raise ValueError(f"group_index must be positive, got {self.group_index}")

    @property
    def loop_transmission(self) -> float:
        """Intensity surviving one lap of propagation loss, exp(-alpha L)."""
        return math.exp(-self.alpha * self.circumference * 1e-3)

    @property
    def round_trip_factor(self) -> float:
        """Intensity ratio between successive pulses leaving the ring."""
        return (self.t_through * self.t_drop) ** 2 * self.loop_transmission


@dataclass(frozen=True)
class OpticalPulse:
    mean_photons: float
    wavelength: float = 1550.0  # nm
    fwhm: float = 1.2  # ps
    emit_time: float = 0.0  # ps

    def __post_init__(self):
        if self.mean_photons < 0:
            raise ValueError("mean_photons must be non-negative")
        if self.fwhm < 0:
            raise ValueError("fwhm must be non-negative")


@dataclass(frozen=True)
class PulseTrain:
    """Arrival times (ps) and intensities relative to ``input_intensity``."""

    times: np.ndarray
    intensities: np.ndarray
    input_intensity: float = 1.0
    port: str = "through"

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        intensities = np.asarray(self.intensities, dtype=float)
        if times.shape != intensities.shape or times.ndim != 1:
            raise ValueError("times and intensities must be 1-D arrays of equal length")
        if np.any(intensities < 0):
            raise ValueError("pulse intensities must be non-negative")
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise ValueError("pulse arrival times must be strictly increasing")
        times.setflags(write=False)
        intensities.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "intensities", intensities)

    def __len__(self):
        return self.times.size

    @property
    def entries(self) -> list[tuple[float, float]]:
        return list(zip(self.times.tolist(), self.intensities.tolist()))

    @property
    def relative(self) -> np.ndarray:
        if self.input_intensity == 0:
            return np.zeros_like(self.intensities)
        return self.intensities / self.input_intensity

    def shifted(self, dt: float) -> "PulseTrain":
        return PulseTrain(self.times + dt, self.intensities, self.input_intensity, self.port)

    def to_csv(self, path) -> None:
        write_pulse_train_csv(path, self)


def coupler_transmission(coupler: GratingCoupler, wavelength):
    """Power transmission of a grating coupler at ``wavelength`` (nm)."""
    wl = np.asarray(wavelength, dtype=float)
    if np.any(wl <= 0):
        raise ValueError("wavelength must be positive")
    detuning = (wl - coupler.center_wavelength) / coupler.bandwidth_fwhm
    out = 10.0 ** (coupler.peak_loss_db / 10.0) * np.exp(-4.0 * math.log(2.0) * detuning**2)
    return float(out) if out.ndim == 0 else out


def round_trip_time(ring: RingResonator) -> float:
    """Circulation period ``n_g L / c`` of the ring, in ps."""
    return ring.group_index * ring.circumference * 1e-3 / C_LIGHT * 1e12


def group_index_for_round_trip(circumference_mm: float, round_trip_ps: float) -> float:
    """Group index that gives the requested round-trip time."""
    return C_LIGHT * round_trip_ps * 1e-12 / (circumference_mm * 1e-3)


def decay_time_from_ring(ring: RingResonator) -> float:
    """Intensity decay constant of the ring-down, in ps."""
    factor = ring.round_trip_factor
    if not 0.0 < factor < 1.0:
        raise ValueError(f"round-trip factor {factor!r} gives no exponential decay")
    return round_trip_time(ring) / -math.log(factor)


def coupling_for_decay_time(
    decay_ps: float, round_trip_ps: float, loop_transmission: float = 1.0, symmetric: bool = True
) -> float:
    """Self-coupling ``t`` that produces a given ring-down constant.

    With ``symmetric`` both couplers of an add-drop ring share ``t``;
    otherwise ``t`` is for an all-pass ring.
    """
    factor = math.exp(-round_trip_ps / decay_ps)
    coupling_part = factor / loop_transmission
    if not 0.0 < coupling_part <= 1.0:
        raise ValueError("loop loss alone already decays faster than requested")
    return coupling_part ** (0.25 if symmetric else 0.5)


def q_from_decay(tau_fit: float, wavelength: float) -> float:
    """Quality factor ``pi c tau / lambda`` from a fitted decay time (ps, nm)."""
    if tau_fit <= 0 or wavelength <= 0:
        raise ValueError("decay time and wavelength must be positive")
    return math.pi * C_LIGHT * tau_fit * 1e-12 / (wavelength * 1e-9)


def ballistic_regime_ok(ring: RingResonator, pulse_fwhm: float) -> bool:
    """True when the ring-down outlasts the pulse; warns otherwise."""
    try:
        tau = decay_time_from_ring(ring)
    except ValueError:
        tau = 0.0 if ring.round_trip_factor <= 0 else math.inf
    if tau <= pulse_fwhm:
        warnings.warn(
            f"ring decay time {tau:.3g} ps does not exceed the pulse width {pulse_fwhm:.3g} ps; "
            "ballistic pulse trains are not a valid description",
            BallisticRegimeWarning,
            stacklevel=2,
        )
        return False
    return True


def _truncate(intensities: np.ndarray, n_max: int | None) -> int:
    if n_max is not None:
        return n_max
    peak = intensities.max(initial=0.0)
    if peak == 0:
        return 0
    below = np.flatnonzero((intensities < TRAIN_CUTOFF * peak) & (np.arange(intensities.size) > intensities.argmax()))
    return int(below[0]) if below.size else intensities.size - 1


def _check_n_max(n_max):
    if n_max is not None and n_max < 0:
        raise ValueError(f"n_max must be >= 0, got {n_max}")


def ballistic_through_train(
    ring: RingResonator, input_intensity: float = 1.0, n_max: int | None = None, pulse_fwhm: float | None = None
) -> PulseTrain:
    """Through-port pulse train for a single input pulse.

    Pulse 0 is the directly transmitted fraction ``t^2``; pulse ``n`` has made
    ``n`` laps. On an add-drop ring every lap also passes the drop coupler,
    which reduces to the single-coupler result when ``t_drop = 1``.
    """
    _check_n_max(n_max)
    if pulse_fwhm is not None:
        ballistic_regime_ok(ring, pulse_fwhm)
    t2 = ring.t_through**2
    td2 = ring.t_drop**2
    a = ring.loop_transmission
    count = (n_max if n_max is not None else TRAIN_MAX_ENTRIES) + 1
    n = np.arange(count, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        laps = (1.0 - t2) ** 2 * np.power(t2, n - 1.0) * np.power(td2 * a, n)
    laps[0] = t2
    intensities = input_intensity * laps
    last = _truncate(intensities, n_max)
    period = round_trip_time(ring)
    return PulseTrain(n[: last + 1] * period, intensities[: last + 1], input_intensity, "through")


def ballistic_through_remainder(ring: RingResonator, input_intensity: float, n_max: int) -> float:
    """Closed-form sum of through-port pulses beyond ``n_max``."""
    _check_n_max(n_max)
    t2 = ring.t_through**2
    lead = (1.0 - t2) ** 2 * ring.t_drop**2 * ring.loop_transmission
    if lead == 0.0:
        return 0.0
    factor = ring.round_trip_factor
    return input_intensity * lead * factor**n_max / (1.0 - factor)


def ballistic_drop_train(
    ring: RingResonator, input_intensity: float = 1.0, n_max: int | None = None, pulse_fwhm: float | None = None
) -> PulseTrain:
    """Drop-port pulse train; pulse ``n`` leaves after ``n + 1/2`` laps."""
    if ring.topology != ADD_DROP:
        raise ValueError("drop-port train requires an add-drop ring")
    _check_n_max(n_max)
    if pulse_fwhm is not None:
        ballistic_regime_ok(ring, pulse_fwhm)
    lead = (1.0 - ring.t_through**2) * (1.0 - ring.t_drop**2) * math.sqrt(ring.loop_transmission)
    count = (n_max if n_max is not None else TRAIN_MAX_ENTRIES) + 1
    n = np.arange(count, dtype=float)
    intensities = input_intensity * lead * np.power(ring.round_trip_factor, n)
    last = _truncate(intensities, n_max)
    period = round_trip_time(ring)
    return PulseTrain((n[: last + 1] + 0.5) * period, intensities[: last + 1], input_intensity, "drop")


def steady_state_spectrum(ring: RingResonator, wavelengths) -> tuple[np.ndarray, np.ndarray]:
    """Continuous-wave power transmission ``(through, drop)`` on a wavelength grid (nm).

    The ring is taken as dispersionless, so the phase index equals the group
    index and resonances sit at ``n_g L / m``.
    """
    wl = np.asarray(wavelengths, dtype=float)
    if wl.ndim != 1 or (wl.size > 1 and np.any(np.diff(wl) <= 0)):
        raise ValueError("wavelength grid must be strictly increasing")
    length_nm = ring.circumference * 1e6
    phase = 2.0 * np.pi * ring.group_index * length_nm / wl
    a = math.sqrt(ring.loop_transmission)  # field round-trip amplitude
    t1, t2 = ring.t_through, ring.t_drop
    loop = a * np.exp(1j * phase)
    denom = 1.0 - t1 * t2 * loop
    through = np.abs((t1 - t2 * loop) / denom) ** 2
    drop = (1.0 - t1**2) * (1.0 - t2**2) * a / np.abs(denom) ** 2
    return through, drop


def free_spectral_range(ring: RingResonator, wavelength: float) -> float:
    """FSR in nm near ``wavelength``."""
    return wavelength**2 / (ring.group_index * ring.circumference * 1e6)


def nearest_resonance(ring: RingResonator, wavelength: float) -> float:
    length_nm = ring.group_index * ring.circumference * 1e6
    order = max(1, round(length_nm / wavelength))
    return length_nm / order


def photon_energy(wavelength_nm: float) -> float:
    return PLANCK * C_LIGHT / (wavelength_nm * 1e-9)


def photon_flux_at_detector(
    avg_power_dbm: float,
    rep_rate: float,
    attenuation_db: float,
    coupler: GratingCoupler | None,
    wavelength: float,
    splitter: Splitter | None = None,
) -> float:
    """Mean photon number per laser pulse arriving at the nanowire.

    Follows the bench calibration: laser power through the external
    attenuator, the input grating coupler and the detector arm of the splitter.
    """
    if rep_rate <= 0:
        raise ValueError(f"rep_rate must be positive, got {rep_rate}")
    pulse_energy = 1e-3 * 10.0 ** (avg_power_dbm / 10.0) / rep_rate
    chain = 10.0 ** (-attenuation_db / 10.0)
    if coupler is not None:
        chain *= coupler_transmission(coupler, wavelength)
    if splitter is not None:
        chain *= splitter.fractions()[0]
    return pulse_energy * chain / photon_energy(wavelength)


def write_spectrum_csv(path, wavelengths, through, drop) -> None:
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["wavelength_nm", "T_through", "T_drop"])
        for row in zip(np.asarray(wavelengths).tolist(), np.asarray(through).tolist(), np.asarray(drop).tolist()):
            writer.writerow([repr(v) for v in row])


def write_pulse_train_csv(path, train: PulseTrain) -> None:
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["time_ps", "intensity_rel"])
        for t, i in zip(train.times.tolist(), train.relative.tolist()):
            writer.writerow([repr(t), repr(i)])
