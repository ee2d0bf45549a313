"""Time-correlated single photon counting: tag streams and start-stop histograms.

Times are integer picoseconds end to end, so histograms built from the same
stream are bit-identical regardless of how the stream was partitioned.
"""

from __future__ import annotations

import csv
import math
import numbers
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple

import numpy as np
from scipy.special import ndtr

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))


class SaturationError(ValueError):
    """Measured rate is at or beyond the dead-time limit."""


class TimeTag(NamedTuple):
    channel: int
    time: int  # ps


@dataclass(frozen=True, eq=False)
class TagStream:
    """Column-oriented, time-sorted stream of time tags."""

    channel: np.ndarray
    time: np.ndarray

    def __post_init__(self):
        time = np.asarray(self.time, dtype=np.int64).reshape(-1)
        channel = np.broadcast_to(np.asarray(self.channel, dtype=np.int16), time.shape).copy()
        if time.size and time.min() < 0:
            raise ValueError("time tags must be non-negative")
        time.setflags(write=False)
        channel.setflags(write=False)
        object.__setattr__(self, "time", time)
        object.__setattr__(self, "channel", channel)

    @classmethod
    def from_tags(cls, tags: Iterable[TimeTag]) -> "TagStream":
        tags = list(tags)
        return cls(np.array([t.channel for t in tags], dtype=np.int16), np.array([t.time for t in tags], dtype=np.int64))

    @classmethod
    def empty(cls) -> "TagStream":
        return cls(np.zeros(0, dtype=np.int16), np.zeros(0, dtype=np.int64))

    def __len__(self) -> int:
        return self.time.size

    def __iter__(self) -> Iterator[TimeTag]:
        for ch, t in zip(self.channel.tolist(), self.time.tolist()):
            yield TimeTag(ch, t)

    def __eq__(self, other):
        if not isinstance(other, TagStream):
            return NotImplemented
        return np.array_equal(self.time, other.time) and np.array_equal(self.channel, other.channel)

    def is_sorted(self) -> bool:
        return bool(np.all(np.diff(self.time) >= 0))

    def select(self, channel: int) -> "TagStream":
        mask = self.channel == channel
        return TagStream(self.channel[mask], self.time[mask])

    def shifted(self, dt: int) -> "TagStream":
        return TagStream(self.channel, self.time + int(dt))

    @staticmethod
    def merge(*streams: "TagStream") -> "TagStream":
        time = np.concatenate([s.time for s in streams]) if streams else np.zeros(0, np.int64)
        channel = np.concatenate([s.channel for s in streams]) if streams else np.zeros(0, np.int16)
        order = np.argsort(time, kind="stable")
        return TagStream(channel[order], time[order])


@dataclass(frozen=True)
class HistogramSpec:
    bin_width: int  # ps
    range: int  # ps
    sync_period: int  # ps

    def __post_init__(self):
        for name in ("bin_width", "range", "sync_period"):
            value = getattr(self, name)
            if int(value) != value:
                raise ValueError(f"{name} must be an integer number of ps, got {value}")
            object.__setattr__(self, name, int(value))
        if self.bin_width <= 0:
            raise ValueError("bin_width must be positive")
        if self.range <= 0 or self.range % self.bin_width:
            raise ValueError("range must be a positive multiple of bin_width")
        if self.range > self.sync_period:
            raise ValueError("range cannot exceed the sync period")

    @property
    def n_bins(self) -> int:
        return self.range // self.bin_width

    @property
    def bin_starts(self) -> np.ndarray:
        return np.arange(self.n_bins, dtype=np.int64) * self.bin_width

    @property
    def bin_centers(self) -> np.ndarray:
        return self.bin_starts + 0.5 * self.bin_width


@dataclass(frozen=True, eq=False)
class Histogram:
    """Start-stop histogram.

    ``out_of_range`` counts stops outside ``[0, range)`` (or before the first
    sync); ``extra_stops`` counts tags discarded by the one-stop-per-sync rule.
    """

    spec: HistogramSpec
    counts: np.ndarray
    total_syncs: int = 0
    out_of_range: int = 0
    extra_stops: int = 0

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64).copy()
        if counts.shape != (self.spec.n_bins,):
            raise ValueError(f"expected {self.spec.n_bins} bins, got shape {counts.shape}")
        if np.any(counts < 0):
            raise ValueError("histogram counts must be non-negative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def zeros(cls, spec: HistogramSpec) -> "Histogram":
        return cls(spec, np.zeros(spec.n_bins, dtype=np.int64))

    @property
    def bin_starts(self) -> np.ndarray:
        return self.spec.bin_starts

    @property
    def bin_centers(self) -> np.ndarray:
        return self.spec.bin_centers

    @property
    def binned(self) -> int:
        return int(self.counts.sum())

    @property
    def dropped(self) -> int:
        return self.out_of_range + self.extra_stops

    def __add__(self, other: "Histogram") -> "Histogram":
        if not isinstance(other, Histogram):
            return NotImplemented
        if other.spec != self.spec:
            raise ValueError("cannot merge histograms with different specs")
        return Histogram(
            self.spec,
            self.counts + other.counts,
            self.total_syncs + other.total_syncs,
            self.out_of_range + other.out_of_range,
            self.extra_stops + other.extra_stops,
        )

    def __eq__(self, other):
        if not isinstance(other, Histogram):
            return NotImplemented
        return (
            self.spec == other.spec
            and np.array_equal(self.counts, other.counts)
            and (self.total_syncs, self.out_of_range, self.extra_stops)
            == (other.total_syncs, other.out_of_range, other.extra_stops)
        )

    def to_csv(self, path, **metadata) -> None:
        write_histogram_csv(path, self, **metadata)


def _tag_times(tags) -> np.ndarray:
    if isinstance(tags, TagStream):
        return tags.time
    tags = list(tags)
    if tags and isinstance(tags[0], tuple):
        return np.array([t[1] for t in tags], dtype=np.int64)
    return np.asarray(tags, dtype=np.int64)


def accumulate_histogram(tags, sync_times, spec: HistogramSpec, multi_stop: bool = False) -> Histogram:
    """Bin every tag by its delay after the most recent sync.

    Only the first tag after each sync is used unless ``multi_stop`` is set.
    Every input tag ends up either binned, out of range or as an extra stop.
    """
    times = _tag_times(tags)
    syncs = np.asarray(sync_times, dtype=np.int64).reshape(-1)
    if times.size > 1 and np.any(np.diff(times) < 0):
        raise ValueError("tag stream is not time-sorted")
    if syncs.size > 1 and np.any(np.diff(syncs) < 0):
        raise ValueError("sync stream is not time-sorted")

    owner = np.searchsorted(syncs, times, side="right") - 1
    has_sync = owner >= 0
    delay = times - syncs[np.clip(owner, 0, None)] if syncs.size else np.zeros_like(times)

    first = has_sync.copy()
    if not multi_stop and times.size > 1:
        first[1:] &= owner[1:] != owner[:-1]
    extra = has_sync & ~first
    in_range = first & (delay >= 0) & (delay < spec.range)

    counts = np.bincount(delay[in_range] // spec.bin_width, minlength=spec.n_bins).astype(np.int64)
    return Histogram(
        spec,
        counts,
        total_syncs=int(syncs.size),
        out_of_range=int(times.size - in_range.sum() - extra.sum()),
        extra_stops=int(extra.sum()),
    )


def gaussian_bin_mass(centers, sigma: float, spec: HistogramSpec) -> np.ndarray:
    """Probability mass of unit Gaussians (one per center) in each bin.

    Returns an array of shape ``(len(centers), n_bins)``. ``sigma = 0``
    places all mass in the bin containing the center.
    """
    centers = np.atleast_1d(np.asarray(centers, dtype=float))[:, None]
    edges = np.arange(spec.n_bins + 1, dtype=float) * spec.bin_width
    if sigma > 0:
        cdf = ndtr((edges[None, :] - centers) / sigma)
    else:
        cdf = (edges[None, :] > centers).astype(float)
    return np.diff(cdf, axis=1)


def expected_histogram(
    train,
    jitter_fwhm: float,
    ocde: float,
    mean_photons_scale: float,
    dark_rate: float,
    spec: HistogramSpec,
    offset: float = 0.0,
    first_stop: bool = False,
) -> np.ndarray:
    """Expected counts per bin per sync for a pulse train seen by a detector.

    Each pulse contributes its click probability ``1 - exp(-ocde * mu)``
    spread over the bins by the Gaussian jitter kernel; dark counts add a flat
    floor. Clicks are assumed to be truncated to integer ps, matching
    ``sample_detection_events``.

    With ``first_stop`` the result is the probability that the *first* click
    after the sync lands in each bin (the one-stop-per-sync histogram), treating
    pulses as independent and dark counts as Poisson.
    """
    times = np.asarray(train.times, dtype=float) + offset
    mu = mean_photons_scale * np.asarray(train.intensities, dtype=float)
    p_click = -np.expm1(-ocde * mu)
    dark_per_bin = dark_rate * spec.bin_width * 1e-12
    mass = gaussian_bin_mass(times, jitter_fwhm / FWHM_PER_SIGMA, spec) if times.size else np.zeros((0, spec.n_bins))
    if not first_stop:
        return dark_per_bin + p_click @ mass
    # probability that nothing has clicked between the sync and each bin edge
    before = np.concatenate([np.zeros((mass.shape[0], 1)), np.cumsum(mass, axis=1)], axis=1)
    survive_pulses = np.prod(1.0 - p_click[:, None] * before, axis=0)
    survive = survive_pulses * np.exp(-dark_per_bin * np.arange(spec.n_bins + 1))
    return survive[:-1] - survive[1:]


def count_rate(tags, window: float, dead_time: float) -> tuple[float, float]:
    """Measured and non-paralyzable dead-time corrected rates in Hz.

    ``tags`` is a tag stream or a count; ``window`` and ``dead_time`` are in ps.
    """
    if window <= 0:
        raise ValueError("window must be positive")
    n = tags if isinstance(tags, numbers.Real) else len(tags)
    measured = n / (window * 1e-12)
    busy = measured * dead_time * 1e-12
    if busy >= 1.0:
        raise SaturationError(f"measured rate {measured:.4g} Hz saturates a {dead_time} ps dead time")
    return measured, measured / (1.0 - busy)


def observed_rate(true_rate: float, dead_time: float) -> float:
    """Forward non-paralyzable model: registered rate for a true rate (Hz, ps)."""
    return true_rate / (1.0 + true_rate * dead_time * 1e-12)


def reduced_chi_square(observed, expected, min_expected: float = 5.0) -> tuple[float, int]:
    """Pearson chi-square per bin over bins whose expectation is at least ``min_expected``."""
    observed = np.asarray(observed, dtype=float)
    expected = np.asarray(expected, dtype=float)
    use = expected >= min_expected
    dof = int(use.sum())
    if dof == 0:
        raise ValueError("no bins with sufficient expected counts")
    chi2 = float(np.sum((observed[use] - expected[use]) ** 2 / expected[use]))
    return chi2 / dof, dof


def write_tags_csv(path, tags: TagStream) -> None:
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["channel", "time_ps"])
        writer.writerows(zip(tags.channel.tolist(), tags.time.tolist()))


def read_tags_csv(path) -> TagStream:
    with open(Path(path), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["channel", "time_ps"]:
            raise ValueError(f"{path}: expected header 'channel,time_ps', got {','.join(header)!r}")
        rows = [(int(ch), int(t)) for ch, t in reader]
    stream = TagStream(np.array([r[0] for r in rows], np.int16), np.array([r[1] for r in rows], np.int64))
    if not stream.is_sorted():
        raise ValueError(f"{path}: tags are not time-sorted")
    return stream


def write_histogram_csv(path, hist: Histogram, **metadata) -> None:
    meta = {
        "bin_width_ps": hist.spec.bin_width,
        "range_ps": hist.spec.range,
        "sync_period_ps": hist.spec.sync_period,
        "total_syncs": hist.total_syncs,
        "out_of_range": hist.out_of_range,
        "extra_stops": hist.extra_stops,
    }
    meta.update(metadata)
    with open(Path(path), "w", newline="") as fh:
        for key, value in meta.items():
            fh.write(f"# {key}={value}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["bin_start_ps", "counts"])
        writer.writerows(zip(hist.bin_starts.tolist(), hist.counts.tolist()))


def read_histogram_csv(path) -> tuple[Histogram, dict[str, str]]:
    meta: dict[str, str] = {}
    rows = []
    with open(Path(path), newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key.strip()] = value.strip()
            elif line.strip() == "bin_start_ps,counts":
                continue
            elif line.strip():
                start, count = line.strip().split(",")
                rows.append((int(start), int(count)))
    spec = HistogramSpec(int(meta["bin_width_ps"]), int(meta["range_ps"]), int(meta["sync_period_ps"]))
    hist = Histogram(
        spec,
        np.array([r[1] for r in rows], dtype=np.int64),
        total_syncs=int(meta.get("total_syncs", 0)),
        out_of_range=int(meta.get("out_of_range", 0)),
        extra_stops=int(meta.get("extra_stops", 0)),
    )
    return hist, meta
