"""Preliminary-normal filtering, fixed-length resampling of the altitude and
speed channels, z-score normalization and train/test splitting."""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, TextIO

import numpy as np

from .geo import AirportConfig, Track

DEFAULT_LENGTH = 256
STD_FLOOR = 1e-6

REASON_CODES = (
    "helicopter", "military_uas", "missed_approach", "large_gap", "too_short",
    "alt_bound", "speed_bound", "internal_origin", "missing_alt", "vrate_bound", "accel_bound",
)


class ResampleError(ValueError):
    """A segment that cannot be turned into a feature series."""


@dataclass(frozen=True)
class FilterRuleSet:
    exclude_helicopters: bool = True
    exclude_military_uas: bool = True
    exclude_missed_approach: bool = True
    max_gap_s: float = 12.0
    min_points: int = 30
    max_alt_ft: float = 60000.0
    max_gs_kts: float = 700.0
    exclude_internal_origin: bool = True
    # fraction of points allowed to lack altitude; None disables the rule
    max_missing_alt_frac: Optional[float] = 0.2
    # point-to-point rates no airframe sustains; None disables the rule
    max_vrate_fpm: Optional[float] = 30000.0
    max_accel_kts_s: Optional[float] = 25.0
    # internal-origin geometry: the segment starts inside the terminal area
    # (not at its edge), away from this airport, close to the ground
    origin_edge_margin_nm: float = 2.0
    origin_min_dist_nm: float = 5.0
    origin_max_agl_ft: float = 1500.0

    def __post_init__(self):
        if not self.max_gap_s > 0:
            raise ValueError("max_gap_s must be positive")
        if self.min_points < 2:
            raise ValueError("min_points must be >= 2")
        if not (self.max_alt_ft > 0 and self.max_gs_kts > 0):
            raise ValueError("altitude/speed bounds must be positive")


@dataclass(frozen=True)
class Verdict:
    reasons: tuple = ()

    @property
    def normal(self) -> bool:
        return not self.reasons

    def __str__(self) -> str:
        return "normal" if self.normal else "flagged(" + ",".join(self.reasons) + ")"


def is_internal_origin(segment: Track, airport: AirportConfig, edge_margin_nm: float = 2.0,
                       min_dist_nm: float = 5.0, max_agl_ft: float = 1500.0) -> bool:
    """True when the segment begins near the ground at another spot inside
    the terminal area, i.e. a departure from an airport within it."""
    d0 = float(airport.distance_to_threshold(segment.lat[0], segment.lon[0]))
    alt0 = segment.alt[0]
    if np.isnan(alt0):
        return False
    return (d0 <= airport.terminal_radius - edge_margin_nm and d0 >= min_dist_nm
            and alt0 - airport.field_elev <= max_agl_ft)


def label_preliminary_normal(track: Track, rules: FilterRuleSet, airport: AirportConfig) -> Verdict:
    """Every filter rule that fires on an already-clipped segment."""
    reasons = []
    if rules.exclude_helicopters and track.is_helicopter:
        reasons.append("helicopter")
    if rules.exclude_military_uas and track.is_military_or_uas:
        reasons.append("military_uas")
    if rules.exclude_missed_approach and track.missed_approach:
        reasons.append("missed_approach")
    if len(track) > 1 and float(np.max(np.diff(track.t))) > rules.max_gap_s:
        reasons.append("large_gap")
    if len(track) < rules.min_points:
        reasons.append("too_short")
    alt, gs = track.alt, track.gs
    if np.any(alt[~np.isnan(alt)] > rules.max_alt_ft):
        reasons.append("alt_bound")
    if np.any(gs[~np.isnan(gs)] > rules.max_gs_kts):
        reasons.append("speed_bound")
    if rules.exclude_internal_origin and is_internal_origin(
            track, airport, rules.origin_edge_margin_nm, rules.origin_min_dist_nm, rules.origin_max_agl_ft):
        reasons.append("internal_origin")
    if rules.max_missing_alt_frac is not None and np.mean(np.isnan(alt)) > rules.max_missing_alt_frac:
        reasons.append("missing_alt")
    if rules.max_vrate_fpm is not None and _max_rate(track.t, alt) * 60.0 > rules.max_vrate_fpm:
        reasons.append("vrate_bound")
    if rules.max_accel_kts_s is not None and _max_rate(track.t, gs) > rules.max_accel_kts_s:
        reasons.append("accel_bound")
    return Verdict(tuple(reasons))


def _max_rate(t: np.ndarray, values: np.ndarray) -> float:
    """Largest |dv/dt| between consecutive present samples, per second."""
    present = ~np.isnan(values)
    if present.sum() < 2:
        return 0.0
    return float(np.max(np.abs(np.diff(values[present]) / np.diff(t[present]))))


@dataclass
class FeatureSeries:
    flight_id: str
    alt: np.ndarray
    gs: np.ndarray

    def __post_init__(self):
        self.alt = np.asarray(self.alt, dtype=float)
        self.gs = np.asarray(self.gs, dtype=float)
        if self.alt.shape != self.gs.shape or self.alt.ndim != 1:
            raise ValueError(f"{self.flight_id}: channels must be 1-D with equal length")

    @property
    def length(self) -> int:
        return self.alt.size

    def as_array(self) -> np.ndarray:
        """``[2, L]`` array, channel order altitude, speed."""
        return np.stack([self.alt, self.gs])

    @classmethod
    def from_array(cls, flight_id: str, arr: np.ndarray) -> "FeatureSeries":
        return cls(flight_id, arr[0].copy(), arr[1].copy())


def _impute(values: np.ndarray, name: str) -> np.ndarray:
    present = ~np.isnan(values)
    if not present.any():
        raise ResampleError(f"channel {name!r} is entirely missing")
    if not (present[0] and present[-1]):
        raise ResampleError(f"channel {name!r} missing at a segment endpoint")
    if present.all():
        return values
    out = values.copy()
    idx = np.arange(values.size)
    out[~present] = np.interp(idx[~present], idx[present], values[present])
    return out


def resample(segment: Track, length: int, airport: AirportConfig) -> FeatureSeries:
    """Altitude and speed interpolated onto ``length`` samples equally spaced
    in distance-to-threshold, from the first point's distance to the last's.

    Interior gaps in either channel are filled linearly between the nearest
    present neighbours before resampling.
    """
    if length < 2:
        raise ValueError(f"resample length must be >= 2, got {length}")
    if len(segment) < 2:
        raise ResampleError(f"{segment.flight_id}: need at least 2 points")
    alt = _impute(segment.alt, "alt")
    gs = _impute(segment.gs, "gs")

    d = airport.distance_to_threshold(segment.lat, segment.lon)
    # progress toward the threshold; running minimum keeps it monotone
    progress = d[0] - np.minimum.accumulate(d)
    span = progress[-1]
    if span <= 1e-9:
        progress = np.linspace(0.0, 1.0, len(segment))
        span = 1.0
    grid = np.linspace(0.0, span, length)
    return FeatureSeries(segment.flight_id, np.interp(grid, progress, alt), np.interp(grid, progress, gs))


@dataclass(frozen=True)
class NormStats:
    mean: tuple
    std: tuple

    def __post_init__(self):
        object.__setattr__(self, "mean", tuple(float(m) for m in self.mean))
        object.__setattr__(self, "std", tuple(float(s) for s in self.std))
        if len(self.mean) != 2 or len(self.std) != 2:
            raise ValueError("NormStats needs two channels")
        if min(self.std) <= 0:
            raise ValueError("std must be positive")


def fit_norm_stats(train: Sequence[FeatureSeries]) -> NormStats:
    """Pooled per-channel mean and population std (floored at 1e-6)."""
    if not train:
        raise ValueError("cannot fit normalization on an empty training set")
    n = 0
    s = np.zeros(2)
    for fs in train:
        a = fs.as_array()
        s += a.sum(axis=1)
        n += a.shape[1]
    mean = s / n
    ss = np.zeros(2)
    for fs in train:
        ss += ((fs.as_array() - mean[:, None]) ** 2).sum(axis=1)
    std = np.maximum(np.sqrt(ss / n), STD_FLOOR)
    return NormStats(tuple(mean), tuple(std))


def apply_norm(series: FeatureSeries, stats: NormStats) -> FeatureSeries:
    mean, std = np.array(stats.mean), np.array(stats.std)
    return FeatureSeries.from_array(series.flight_id, (series.as_array() - mean[:, None]) / std[:, None])


def invert_norm(series: FeatureSeries, stats: NormStats) -> FeatureSeries:
    mean, std = np.array(stats.mean), np.array(stats.std)
    return FeatureSeries.from_array(series.flight_id, series.as_array() * std[:, None] + mean[:, None])


def stack(series: Iterable[FeatureSeries]) -> np.ndarray:
    """``[B, 2, L]`` batch array."""
    return np.stack([fs.as_array() for fs in series])


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must be in (0, 1)")


def _split_key(flight_id: str, seed: int) -> bytes:
    return hashlib.sha256(f"{seed}:{flight_id}".encode()).digest()


def split_train_test(dataset: Sequence[FeatureSeries], spec: SplitSpec):
    """Deterministic partition keyed on (flight_id, seed); input order is
    preserved within each part."""
    n = len(dataset)
    n_train = int(round(spec.train_fraction * n))
    ranked = sorted(range(n), key=lambda i: (_split_key(dataset[i].flight_id, spec.seed), i))
    in_train = set(ranked[:n_train])
    train = [fs for i, fs in enumerate(dataset) if i in in_train]
    test = [fs for i, fs in enumerate(dataset) if i not in in_train]
    return train, test


FEATURE_COLUMNS = ("flight_id", "idx", "alt", "gs")


def write_features(series: Iterable[FeatureSeries], sink: TextIO) -> None:
    w = csv.writer(sink, lineterminator="\n")
    w.writerow(FEATURE_COLUMNS)
    for fs in series:
        for i, (a, g) in enumerate(zip(fs.alt, fs.gs)):
            w.writerow([fs.flight_id, i, repr(float(a)), repr(float(g))])


def read_features(source: TextIO) -> list[FeatureSeries]:
    reader = csv.reader(source)
    header = next(reader, None)
    if header is None:
        return []
    if tuple(h.strip() for h in header) != FEATURE_COLUMNS:
        raise ValueError(f"unexpected feature header {header!r}")
    groups: dict[str, list] = {}
    for row in reader:
        if not row:
            continue
        groups.setdefault(row[0], []).append((int(row[1]), float(row[2]), float(row[3])))
    out = []
    for fid, rows in groups.items():
        rows.sort()
        if [r[0] for r in rows] != list(range(len(rows))):
            raise ValueError(f"feature rows for {fid!r} are not a contiguous 0..L-1 index")
        out.append(FeatureSeries(fid, [r[1] for r in rows], [r[2] for r in rows]))
    return out
