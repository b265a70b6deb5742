"""Track data model, CSV ingestion, great-circle distance and terminal-area
clipping."""

from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from typing import Iterable, Optional, TextIO

import numpy as np

EARTH_RADIUS_NM = 3440.065

TRACK_COLUMNS = (
    "flight_id", "t", "lat", "lon", "alt_ft", "gs_kts", "course_deg", "aircraft_type",
    "is_helicopter", "is_military_or_uas", "weight_class", "missed_approach",
)


class TrackFormatError(ValueError):
    """Input that cannot be read at all (bad header, bad config file)."""


class WeightClass(str, Enum):
    SMALL = "small"
    LARGE = "large"
    HEAVY = "heavy"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class TrackPoint:
    t: float
    lat: float
    lon: float
    alt: Optional[float] = None  # feet MSL, None = missing
    gs: Optional[float] = None  # knots
    course: Optional[float] = None  # degrees

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} out of range")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude {self.lon} out of range")


@dataclass(frozen=True)
class Track:
    flight_id: str
    points: tuple
    aircraft_type: str = ""
    is_helicopter: bool = False
    is_military_or_uas: bool = False
    weight_class: WeightClass = WeightClass.UNKNOWN
    missed_approach: bool = False

    def __post_init__(self):
        if not self.flight_id:
            raise ValueError("flight_id must be non-empty")
        if not self.points:
            raise ValueError(f"track {self.flight_id!r} has no points")
        object.__setattr__(self, "points", tuple(self.points))
        object.__setattr__(self, "weight_class", WeightClass(self.weight_class))
        ts = [p.t for p in self.points]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError(f"track {self.flight_id!r}: timestamps not strictly increasing")

    def __len__(self) -> int:
        return len(self.points)

    # Column views; missing values become NaN.
    @cached_property
    def t(self) -> np.ndarray:
        return np.array([p.t for p in self.points], dtype=float)

    @cached_property
    def lat(self) -> np.ndarray:
        return np.array([p.lat for p in self.points], dtype=float)

    @cached_property
    def lon(self) -> np.ndarray:
        return np.array([p.lon for p in self.points], dtype=float)

    @cached_property
    def alt(self) -> np.ndarray:
        return _opt_array(p.alt for p in self.points)

    @cached_property
    def gs(self) -> np.ndarray:
        return _opt_array(p.gs for p in self.points)

    def with_points(self, points) -> "Track":
        return replace(self, points=tuple(points))


def _opt_array(values: Iterable[Optional[float]]) -> np.ndarray:
    return np.array([np.nan if v is None else v for v in values], dtype=float)


@dataclass(frozen=True)
class RunwayThreshold:
    airport_code: str
    runway_id: str
    lat: float
    lon: float
    elev: float

    def __post_init__(self):
        if not (-90 <= self.lat <= 90 and -180 <= self.lon <= 180):
            raise ValueError(f"threshold {self.runway_id}: coordinates out of range")
        if not math.isfinite(self.elev):
            raise ValueError(f"threshold {self.runway_id}: elevation must be finite")


@dataclass(frozen=True)
class AirportConfig:
    airport_code: str
    thresholds: tuple
    terminal_radius: float = 40.0

    def __post_init__(self):
        object.__setattr__(self, "thresholds", tuple(self.thresholds))
        if not self.thresholds:
            raise ValueError("airport needs at least one runway threshold")
        if not self.terminal_radius > 0:
            raise ValueError("terminal_radius must be positive")

    @property
    def field_elev(self) -> float:
        return min(th.elev for th in self.thresholds)

    def distance_to_threshold(self, lat, lon) -> np.ndarray:
        """Distance in NM to the nearest configured runway threshold."""
        lat = np.asarray(lat, dtype=float)
        lon = np.asarray(lon, dtype=float)
        d = [haversine_nm((lat, lon), (th.lat, th.lon)) for th in self.thresholds]
        return np.min(np.stack(d), axis=0)


@dataclass
class Reject:
    flight_id: str
    reason: str
    line: Optional[int] = None


@dataclass
class ParseResult:
    tracks: list = field(default_factory=list)
    rejects: list = field(default_factory=list)

    def __iter__(self):
        return iter((self.tracks, self.rejects))


def haversine_nm(a, b):
    """Great-circle distance in nautical miles between ``a`` and ``b``,
    each a ``(lat, lon)`` pair in degrees (scalars or arrays).

    Evaluated in the atan2 form so that nearly antipodal pairs keep full
    precision.
    """
    lat1, lon1 = np.radians(a[0]), np.radians(a[1])
    lat2, lon2 = np.radians(b[0]), np.radians(b[1])
    dlon = lon2 - lon1
    c1, s1 = np.cos(lat1), np.sin(lat1)
    c2, s2 = np.cos(lat2), np.sin(lat2)
    y = np.hypot(c2 * np.sin(dlon), c1 * s2 - s1 * c2 * np.cos(dlon))
    x = s1 * s2 + c1 * c2 * np.cos(dlon)
    d = EARTH_RADIUS_NM * np.arctan2(y, x)
    return float(d) if np.ndim(d) == 0 else d


def destination(lat: float, lon: float, bearing_deg: float, dist_nm):
    """Point reached from (lat, lon) after ``dist_nm`` along ``bearing_deg``."""
    phi1, lam1 = math.radians(lat), math.radians(lon)
    theta = math.radians(bearing_deg)
    delta = np.asarray(dist_nm, dtype=float) / EARTH_RADIUS_NM
    phi2 = np.arcsin(np.sin(phi1) * np.cos(delta) + np.cos(phi1) * np.sin(delta) * np.cos(theta))
    lam2 = lam1 + np.arctan2(np.sin(theta) * np.sin(delta) * np.cos(phi1),
                             np.cos(delta) - np.sin(phi1) * np.sin(phi2))
    lon2 = (np.degrees(lam2) + 540.0) % 360.0 - 180.0
    return np.degrees(phi2), lon2


def clip_terminal(track: Track, airport: AirportConfig) -> Optional[Track]:
    """Final contiguous run of points inside the terminal radius, or None
    when the track does not end inside it."""
    d = airport.distance_to_threshold(track.lat, track.lon)
    inside = d <= airport.terminal_radius
    if not inside[-1]:
        return None
    outside = np.flatnonzero(~inside)
    start = int(outside[-1]) + 1 if outside.size else 0
    if start == 0:
        return track
    return track.with_points(track.points[start:])


def time_gaps(track: Track) -> list[tuple[int, float]]:
    t = [p.t for p in track.points]
    return [(i, t[i + 1] - t[i]) for i in range(len(t) - 1)]


# --------------------------------------------------------------------------- CSV

def _opt_float(cell: str) -> Optional[float]:
    cell = cell.strip()
    if not cell:
        return None
    v = float(cell)
    return v if math.isfinite(v) else None


def _flag(cell: str) -> bool:
    cell = cell.strip()
    if cell not in ("0", "1"):
        raise ValueError(f"boolean cell must be 0 or 1, got {cell!r}")
    return cell == "1"


def parse_tracks(source: TextIO | str) -> ParseResult:
    """Read the track CSV schema.  Returns tracks ordered by flight id and
    first timestamp; bad rows and non-monotonic flights land in ``rejects``."""
    if isinstance(source, str):
        source = io.StringIO(source)
    reader = csv.reader(source)
    header = next(reader, None)
    if header is None:
        return ParseResult()
    header = [h.strip() for h in header]
    if tuple(header) != TRACK_COLUMNS:
        raise TrackFormatError(f"unexpected header {header!r}; expected {list(TRACK_COLUMNS)}")

    rows: dict[str, list] = {}
    meta: dict[str, tuple] = {}
    result = ParseResult()
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        fid = row[0].strip() if row else ""
        if len(row) != len(TRACK_COLUMNS):
            result.rejects.append(Reject(fid, f"expected {len(TRACK_COLUMNS)} columns, got {len(row)}", lineno))
            continue
        try:
            if not fid:
                raise ValueError("empty flight_id")
            point = TrackPoint(
                t=float(row[1]), lat=float(row[2]), lon=float(row[3]),
                alt=_opt_float(row[4]), gs=_opt_float(row[5]), course=_opt_float(row[6]),
            )
            m = (row[7].strip(), _flag(row[8]), _flag(row[9]),
                 WeightClass(row[10].strip() or "unknown"), _flag(row[11]))
        except ValueError as exc:
            result.rejects.append(Reject(fid, f"unparsable row: {exc}", lineno))
            continue
        rows.setdefault(fid, []).append(point)
        meta.setdefault(fid, m)

    for fid, pts in rows.items():
        pts.sort(key=lambda p: p.t)
        if any(b.t <= a.t for a, b in zip(pts, pts[1:])):
            result.rejects.append(Reject(fid, "non-monotonic time"))
            continue
        ac, heli, mil, wc, missed = meta[fid]
        result.tracks.append(Track(fid, tuple(pts), ac, heli, mil, wc, missed))
    result.tracks.sort(key=lambda tr: (tr.flight_id, tr.points[0].t))
    return result


def _fmt(v: Optional[float]) -> str:
    return "" if v is None else repr(float(v))


def write_tracks(tracks: Iterable[Track], sink: TextIO) -> None:
    w = csv.writer(sink, lineterminator="\n")
    w.writerow(TRACK_COLUMNS)
    for tr in tracks:
        tail = [tr.aircraft_type, int(tr.is_helicopter), int(tr.is_military_or_uas),
                tr.weight_class.value, int(tr.missed_approach)]
        for p in tr.points:
            w.writerow([tr.flight_id, repr(float(p.t)), repr(float(p.lat)), repr(float(p.lon)),
                        _fmt(p.alt), _fmt(p.gs), _fmt(p.course), *tail])


# ------------------------------------------------------------------ airport config

_KV = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.+?)\s*$")


def _scalar(text: str):
    text = text.strip()
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        return text[1:-1]
    try:
        return float(text)
    except ValueError:
        return text


def parse_airport_config(text: str) -> AirportConfig:
    """Parse the ``key = value`` airport config format.

    ``threshold`` may repeat; its value is an inline table such as
    ``{runway_id = "26L", lat = 36.08, lon = -115.15, elev_ft = 2100}``.
    """
    code, radius, thresholds = None, 40.0, []
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _KV.match(line)
        if not m:
            raise TrackFormatError(f"airport config line {n}: cannot parse {raw!r}")
        key, value = m.groups()
        if key == "airport_code":
            code = str(_scalar(value))
        elif key == "terminal_radius_nm":
            radius = float(value)
        elif key == "threshold":
            if not (value.startswith("{") and value.endswith("}")):
                raise TrackFormatError(f"airport config line {n}: threshold must be an inline table")
            fields = {}
            for part in value[1:-1].split(","):
                if not part.strip():
                    continue
                k, _, v = part.partition("=")
                fields[k.strip()] = _scalar(v)
            missing = {"runway_id", "lat", "lon", "elev_ft"} - fields.keys()
            if missing:
                raise TrackFormatError(f"airport config line {n}: threshold missing {sorted(missing)}")
            thresholds.append((str(fields["runway_id"]), float(fields["lat"]),
                               float(fields["lon"]), float(fields["elev_ft"])))
        else:
            raise TrackFormatError(f"airport config line {n}: unknown key {key!r}")
    if code is None:
        raise TrackFormatError("airport config: missing airport_code")
    ths = [RunwayThreshold(code, rid, lat, lon, elev) for rid, lat, lon, elev in thresholds]
    try:
        return AirportConfig(code, tuple(ths), radius)
    except ValueError as exc:
        raise TrackFormatError(f"airport config: {exc}") from None


def format_airport_config(airport: AirportConfig) -> str:
    lines = [f'airport_code = "{airport.airport_code}"',
             f"terminal_radius_nm = {airport.terminal_radius!r}"]
    for th in airport.thresholds:
        lines.append(f'threshold = {{runway_id = "{th.runway_id}", lat = {th.lat!r}, '
                     f"lon = {th.lon!r}, elev_ft = {th.elev!r}}}")
    return "\n".join(lines) + "\n"
