"""Reconstruction-error threshold, detection, anomaly taxonomy and summary
statistics."""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence, TextIO

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .autoencoder import Autoencoder, reconstruction_errors
from .features import is_internal_origin
from .geo import AirportConfig, Track, haversine_nm

NOTABLE = (
    "ground_track", "point_altitude", "point_speed", "missing_altitude",
    "non_standard_operation", "risky_operation", "large_time_gap",
)
CATEGORIES = ("non_notable",) + NOTABLE + ("unclassified",)


class UncalibratedError(RuntimeError):
    """Detection was requested before a threshold was calibrated."""


@dataclass(frozen=True)
class ThresholdPolicy:
    method: str = "max_train_mae"
    q: Optional[float] = None

    def __post_init__(self):
        if self.method not in ("max_train_mae", "quantile"):
            raise ValueError(f"unknown threshold method {self.method!r}")
        if self.method == "quantile" and not (self.q is not None and 0.0 < self.q <= 1.0):
            raise ValueError("quantile policy needs q in (0, 1]")

    @classmethod
    def quantile(cls, q: float) -> "ThresholdPolicy":
        return cls("quantile", q)


def threshold_from_scores(maes: Sequence[float], policy: ThresholdPolicy) -> float:
    maes = np.sort(np.asarray(maes, dtype=float))
    if maes.size == 0:
        raise ValueError("cannot calibrate a threshold on an empty set")
    if policy.method == "max_train_mae":
        return float(maes[-1])
    k = max(1, math.ceil(policy.q * maes.size))  # 1-based order statistic
    return float(maes[k - 1])


def calibrate_threshold(model: Autoencoder, train_set, policy: ThresholdPolicy = ThresholdPolicy()) -> float:
    """Threshold from the reconstruction errors of the (normalized) training set."""
    return threshold_from_scores(reconstruction_errors(model, train_set), policy)


def score(model: Autoencoder, x: np.ndarray) -> float:
    """Eval-mode reconstruction MAE of one normalized sample ``[2, L]``."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        x = x[None]
    if x.shape[0] != 1:
        raise ValueError(f"score takes a single sample, got batch of {x.shape[0]}")
    return float(reconstruction_errors(model, x)[0])


def is_alarm(mae: float, delta: Optional[float]) -> bool:
    if delta is None:
        raise UncalibratedError("threshold uncalibrated")
    return bool(mae > delta)


def detect(model: Autoencoder, delta: Optional[float], x: np.ndarray) -> bool:
    if delta is None:
        raise UncalibratedError("threshold uncalibrated")
    return is_alarm(score(model, x), delta)


# ------------------------------------------------------------------ taxonomy

@dataclass(frozen=True)
class ClassifierConfig:
    gap_notable_s: float = 300.0
    missing_alt_frac: float = 0.25
    ground_max_agl_ft: float = 200.0
    point_vrate_fpm: float = 10000.0
    point_accel_kts_s: float = 50.0
    point_max_run: int = 2
    point_window: int = 7
    risky_max_extent_nm: float = 5.0
    risky_min_agl_ft: float = 20000.0
    non_standard_max_airborne_s: float = 300.0
    origin_edge_margin_nm: float = 2.0
    origin_min_dist_nm: float = 5.0
    origin_max_agl_ft: float = 1500.0


@dataclass(frozen=True)
class AnomalyClass:
    category: str
    reason: Optional[str] = None

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown anomaly category {self.category!r}")

    @property
    def label(self) -> str:
        return self.category if self.reason is None else f"{self.category}:{self.reason}"

    @classmethod
    def parse(cls, label: str) -> "AnomalyClass":
        cat, _, reason = label.partition(":")
        return cls(cat, reason or None)


def _longest_run(mask: np.ndarray) -> int:
    best = run = 0
    for m in mask:
        run = run + 1 if m else 0
        best = max(best, run)
    return best


def _point_excursion(t: np.ndarray, v: np.ndarray, limit_per_s: float, window: int, max_run: int) -> bool:
    """Is there a run of at most ``max_run`` samples that jumps away from its
    neighbourhood faster than ``limit_per_s``?"""
    present = ~np.isnan(v)
    t, v = t[present], v[present]
    if v.size < window:
        return False
    half = window // 2
    med = np.median(sliding_window_view(np.pad(v, half, mode="edge"), window), axis=1)
    dt = np.diff(t)
    local_dt = np.minimum(np.r_[dt[0], dt], np.r_[dt, dt[-1]])
    out = np.abs(v - med) / local_dt > limit_per_s
    if not out.any():
        return False
    runs, run = [], 0
    for o in out:
        if o:
            run += 1
        elif run:
            runs.append(run)
            run = 0
    if run:
        runs.append(run)
    return any(r <= max_run for r in runs)


def _horizontal_extent(track: Track) -> float:
    lat, lon = track.lat, track.lon
    if lat.size > 1500:
        idx = np.linspace(0, lat.size - 1, 1500).astype(int)
        lat, lon = lat[idx], lon[idx]
    d = haversine_nm((lat[:, None], lon[:, None]), (lat[None, :], lon[None, :]))
    return float(np.max(d))


def classify_anomaly(track: Track, segment: Track, airport: AirportConfig,
                     config: ClassifierConfig = ClassifierConfig()) -> AnomalyClass:
    """Assign one category; the first matching rule in priority order wins.

    ``track`` is the full flight, ``segment`` its terminal-area clip.  Rules
    that look at the flight's origin use ``track``; the rest use ``segment``.
    """
    c = config
    if track.is_helicopter:
        return AnomalyClass("non_notable", "helicopter")
    if is_internal_origin(track, airport, c.origin_edge_margin_nm, c.origin_min_dist_nm, c.origin_max_agl_ft):
        return AnomalyClass("non_notable", "internal_origin")

    t, alt, gs = segment.t, segment.alt, segment.gs
    if t.size > 1 and np.max(np.diff(t)) > c.gap_notable_s:
        return AnomalyClass("large_time_gap")
    if _longest_run(np.isnan(alt)) >= c.missing_alt_frac * t.size:
        return AnomalyClass("missing_altitude")
    agl = alt - airport.field_elev
    has_alt = not np.all(np.isnan(agl))
    if has_alt and np.nanmax(agl) < c.ground_max_agl_ft:
        return AnomalyClass("ground_track")
    if t.size > 1:
        if _point_excursion(t, alt, c.point_vrate_fpm / 60.0, c.point_window, c.point_max_run):
            return AnomalyClass("point_altitude")
        if _point_excursion(t, gs, c.point_accel_kts_s, c.point_window, c.point_max_run):
            return AnomalyClass("point_speed")
    if has_alt and np.nanmax(agl) > c.risky_min_agl_ft and _horizontal_extent(segment) < c.risky_max_extent_nm:
        return AnomalyClass("risky_operation")
    if t[-1] - t[0] < c.non_standard_max_airborne_s:
        return AnomalyClass("non_standard_operation")
    return AnomalyClass("unclassified")


# ------------------------------------------------------------------ reports

REPORT_COLUMNS = ("flight_id", "mae", "is_anomaly", "category", "weight_class", "is_helicopter")


@dataclass
class AnomalyReport:
    flight_id: str
    mae: float
    is_anomaly: bool
    taxonomy: Optional[AnomalyClass] = None
    weight_class: str = "unknown"
    is_helicopter: bool = False

    def __post_init__(self):
        if self.taxonomy is not None and not self.is_anomaly:
            raise ValueError(f"{self.flight_id}: taxonomy set on a non-anomalous report")


def write_reports(reports: Iterable[AnomalyReport], sink: TextIO) -> None:
    w = csv.writer(sink, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for r in reports:
        w.writerow([r.flight_id, repr(float(r.mae)), int(r.is_anomaly),
                    "" if r.taxonomy is None else r.taxonomy.label, r.weight_class, int(r.is_helicopter)])


def read_reports(source: TextIO) -> list[AnomalyReport]:
    reader = csv.DictReader(source)
    if tuple(reader.fieldnames or ()) != REPORT_COLUMNS:
        raise ValueError(f"unexpected report header {reader.fieldnames!r}")
    out = []
    for row in reader:
        cat = row["category"].strip()
        out.append(AnomalyReport(row["flight_id"], float(row["mae"]), row["is_anomaly"] == "1",
                                 AnomalyClass.parse(cat) if cat else None,
                                 row["weight_class"], row["is_helicopter"] == "1"))
    return out


@dataclass
class SummaryStats:
    total: int = 0
    anomalies: int = 0
    pct_anomalous: float = 0.0
    by_category: dict = field(default_factory=dict)
    by_helicopter: dict = field(default_factory=dict)
    by_weight_class: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    def table(self, view: str) -> str:
        """CSV breakdown table: ``overall``, ``category``, ``helicopter`` or ``weight_class``."""
        if view == "overall":
            return ("label,count,percent\n"
                    f"anomalous,{self.anomalies},{self.pct_anomalous!r}\n"
                    f"normal,{self.total - self.anomalies},{(100.0 - self.pct_anomalous) if self.total else 0.0!r}\n")
        data = {"category": self.by_category, "helicopter": self.by_helicopter,
                "weight_class": self.by_weight_class}[view]
        rows = [f"{k},{v!r}" for k, v in sorted(data.items())]
        return "\n".join([f"{view},fraction", *rows]) + "\n"


def _fractions(values: list) -> dict:
    n = len(values)
    return {str(k): c / n for k, c in sorted(Counter(values).items())} if n else {}


def summarize(reports: Sequence[AnomalyReport]) -> SummaryStats:
    total = len(reports)
    flagged = [r for r in reports if r.is_anomaly]
    return SummaryStats(
        total=total,
        anomalies=len(flagged),
        pct_anomalous=100.0 * len(flagged) / total if total else 0.0,
        by_category=_fractions([r.taxonomy.category if r.taxonomy else "unclassified" for r in flagged]),
        by_helicopter=_fractions(["helicopter" if r.is_helicopter else "fixed_wing" for r in flagged]),
        by_weight_class=_fractions([r.weight_class for r in flagged]),
    )


def near_threshold(reports: Sequence[AnomalyReport], delta: float, band: float) -> list[AnomalyReport]:
    """Reports whose score lies within ``band`` of the threshold, closest first."""
    hits = [r for r in reports if abs(r.mae - delta) < band]
    return sorted(hits, key=lambda r: (abs(r.mae - delta), r.flight_id))
