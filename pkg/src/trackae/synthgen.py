"""Synthetic straight-in arrivals and labeled anomaly injectors.

Nominal arrivals follow the usual terminal pattern: an initial descent, a
level segment, a 3 degree final approach, with speed bleeding off from the
entry speed to the final approach speed.  Each injector reproduces one of the
notable anomaly shapes so the detector and classifier can be checked against
known ground truth.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, TextIO

import numpy as np

from .geo import AirportConfig, RunwayThreshold, Track, TrackPoint, WeightClass, destination

GLIDE_FT_PER_NM = math.tan(math.radians(3.0)) * 6076.12
EPOCH0 = 1514764800.0  # 2018-01-01T00:00:00Z

INJECTION_TYPES = (
    "ground_track", "point_altitude", "point_speed", "missing_altitude",
    "non_standard_operation", "risky_operation", "large_time_gap",
)

FIXED_WING = (
    ("B738", WeightClass.LARGE), ("A320", WeightClass.LARGE), ("A321", WeightClass.LARGE),
    ("E175", WeightClass.LARGE), ("CRJ9", WeightClass.LARGE), ("B763", WeightClass.HEAVY),
    ("A333", WeightClass.HEAVY), ("C56X", WeightClass.SMALL), ("PC12", WeightClass.SMALL),
)
ROTORCRAFT = (("EC30", WeightClass.SMALL), ("AS50", WeightClass.SMALL), ("B407", WeightClass.SMALL))


@dataclass(frozen=True)
class AirportProfile:
    airport_code: str = "SYN"
    field_elev: float = 2000.0
    entry_alt: float = 11000.0
    entry_alt_jitter: float = 1500.0
    entry_speed: float = 250.0
    entry_speed_jitter: float = 20.0
    final_speed: float = 135.0
    final_speed_jitter: float = 10.0
    noise_alt: float = 150.0
    noise_speed: float = 4.0
    sample_interval: float = 4.0
    lat: float = 36.08
    lon: float = -115.15
    terminal_radius: float = 40.0

    def __post_init__(self):
        if not self.entry_alt - self.entry_alt_jitter > self.field_elev + 3500.0:
            raise ValueError("entry altitude must clear the field by more than the level-off altitude")
        lo_entry = self.entry_speed - self.entry_speed_jitter
        hi_final = self.final_speed + self.final_speed_jitter
        if not lo_entry > hi_final or self.final_speed - self.final_speed_jitter <= 0:
            raise ValueError("need entry_speed > final_speed > 0 across the jitter range")
        if not 1.0 <= self.sample_interval <= 4.0:
            raise ValueError("sample_interval must be within [1, 4] s")
        if self.noise_alt < 0 or self.noise_speed < 0:
            raise ValueError("noise levels must be non-negative")

    def airport(self) -> AirportConfig:
        th = RunwayThreshold(self.airport_code, "SYN", self.lat, self.lon, self.field_elev)
        return AirportConfig(self.airport_code, (th,), self.terminal_radius)


def _bounded_noise(rng: np.random.Generator, sigma: float, n: int) -> np.ndarray:
    if sigma == 0:
        return np.zeros(n)
    return np.clip(rng.normal(0.0, sigma, n), -3 * sigma, 3 * sigma)


def _profile(rng: np.random.Generator, p: AirportProfile):
    """Draw one arrival's altitude(d) and speed(d) knot tables."""
    r = p.terminal_radius
    entry_alt = p.entry_alt + rng.uniform(-1, 1) * p.entry_alt_jitter
    level_agl = rng.uniform(2500.0, 3500.0)
    d_gs = level_agl / GLIDE_FT_PER_NM
    d_level = d_gs + rng.uniform(3.0, 8.0)
    alt_d = np.array([0.0, d_gs, d_level, r])
    alt_v = np.array([p.field_elev, p.field_elev + level_agl, p.field_elev + level_agl, entry_alt])

    v_entry = p.entry_speed + rng.uniform(-1, 1) * p.entry_speed_jitter
    v_final = p.final_speed + rng.uniform(-1, 1) * p.final_speed_jitter
    d_slow = rng.uniform(20.0, 28.0)
    d_mid = rng.uniform(9.0, 13.0)
    spd_d = np.array([0.0, 4.0, d_mid, d_slow, r])
    spd_v = np.array([v_final, v_final + 10.0, 0.5 * (v_entry + v_final) + 10.0, v_entry, v_entry])
    return alt_d, alt_v, spd_d, spd_v


def _arrival(rng: np.random.Generator, p: AirportProfile, flight_id: str, t0: float,
             aircraft, heading: Optional[float] = None) -> Track:
    alt_d, alt_v, spd_d, spd_v = _profile(rng, p)
    bearing = rng.uniform(0.0, 360.0) if heading is None else heading
    d = [p.terminal_radius - 0.05]
    while True:
        step = np.interp(d[-1], spd_d, spd_v) * p.sample_interval / 3600.0
        if d[-1] - step < 0.0:
            break
        d.append(d[-1] - step)
    d = np.array(d)
    n = d.size
    alt = np.interp(d, alt_d, alt_v) + _bounded_noise(rng, p.noise_alt, n)
    gs = np.interp(d, spd_d, spd_v) + _bounded_noise(rng, p.noise_speed, n)
    lat, lon = destination(p.lat, p.lon, bearing, d)
    course = (bearing + 180.0) % 360.0
    t = t0 + p.sample_interval * np.arange(n)
    pts = tuple(TrackPoint(float(t[i]), float(lat[i]), float(lon[i]), float(alt[i]), float(gs[i]), course)
                for i in range(n))
    ac_type, wc = aircraft
    return Track(flight_id, pts, ac_type, False, False, wc, False)


def gen_nominal(profile: AirportProfile, n: int, seed: int, prefix: str = "NOM") -> list[Track]:
    """``n`` nominal straight-in arrivals, a pure function of the arguments."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 11])))
    tracks = []
    for i in range(n):
        ac = FIXED_WING[rng.integers(len(FIXED_WING))]
        t0 = EPOCH0 + 90.0 * i + float(rng.integers(0, 60))
        tracks.append(_arrival(rng, profile, f"{profile.airport_code}-{prefix}{seed}-{i:05d}", t0, ac))
    return tracks


def gen_helicopters(profile: AirportProfile, n: int, seed: int) -> list[Track]:
    """Low, slow rotorcraft transits that end at the field."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 12])))
    tracks = []
    for i in range(n):
        ac = ROTORCRAFT[rng.integers(len(ROTORCRAFT))]
        start = rng.uniform(8.0, 25.0)
        speed = rng.uniform(80.0, 120.0)
        agl = rng.uniform(500.0, 1500.0)
        bearing = rng.uniform(0.0, 360.0)
        step = speed * profile.sample_interval / 3600.0
        d = np.arange(start, 0.0, -step)
        m = d.size
        alt = profile.field_elev + agl * np.minimum(1.0, d / 2.0) + _bounded_noise(rng, 50.0, m)
        gs = speed * np.minimum(1.0, 0.3 + d / 2.0) + _bounded_noise(rng, profile.noise_speed, m)
        lat, lon = destination(profile.lat, profile.lon, bearing, d)
        t0 = EPOCH0 + 97.0 * i + 13.0
        pts = tuple(TrackPoint(float(t0 + profile.sample_interval * k), float(lat[k]), float(lon[k]),
                               float(alt[k]), float(gs[k]), (bearing + 180.0) % 360.0) for k in range(m))
        tracks.append(Track(f"{profile.airport_code}-HEL{seed}-{i:05d}", pts, ac[0], True, False, ac[1], False))
    return tracks


@dataclass(frozen=True)
class InjectionSpec:
    type: str
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.type not in INJECTION_TYPES:
            raise ValueError(f"unknown injection type {self.type!r}; expected one of {list(INJECTION_TYPES)}")

    def __hash__(self):
        return hash((self.type, self.seed, tuple(sorted(self.params.items()))))


def _replace_alt(track: Track, alt) -> Track:
    pts = [TrackPoint(p.t, p.lat, p.lon, None if a is None or np.isnan(a) else float(a), p.gs, p.course)
           for p, a in zip(track.points, alt)]
    return track.with_points(pts)


def _replace_gs(track: Track, gs) -> Track:
    pts = [TrackPoint(p.t, p.lat, p.lon, p.alt, float(g), p.course) for p, g in zip(track.points, gs)]
    return track.with_points(pts)


def _spike_indices(rng, n: int) -> list[int]:
    i = int(rng.integers(5, n - 6))
    return [i, i + 1] if rng.random() < 0.5 else [i]


def inject(track: Track, spec: InjectionSpec, airport: AirportConfig) -> Track:
    """Return a copy of ``track`` carrying the anomaly described by ``spec``."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([spec.seed, 13])))
    kw = spec.params
    field_elev = airport.field_elev
    n = len(track)
    if n < 12:
        raise ValueError(f"{track.flight_id}: base track too short to inject into")

    if spec.type == "ground_track":
        return _replace_alt(track, field_elev + rng.uniform(0.0, kw.get("max_agl", 100.0), n))

    if spec.type == "point_altitude":
        alt = track.alt.copy()
        mag = rng.uniform(kw.get("min_ft", 5000.0), kw.get("max_ft", 15000.0))
        idx = _spike_indices(rng, n)
        sign = 1.0 if rng.random() < 0.5 else -1.0
        if sign < 0 and np.nanmin(alt[idx]) - mag < field_elev:
            sign = 1.0
        alt[idx] += sign * mag
        return _replace_alt(track, alt)

    if spec.type == "point_speed":
        # upward only: a downward spike of this size would make speed negative
        gs = track.gs.copy()
        gs[_spike_indices(rng, n)] += rng.uniform(kw.get("min_kts", 200.0), kw.get("max_kts", 400.0))
        return _replace_gs(track, gs)

    if spec.type == "missing_altitude":
        width = math.ceil(rng.uniform(kw.get("min_frac", 0.25), kw.get("max_frac", 0.5)) * n)
        start = int(rng.integers(1, n - width))
        alt = track.alt.copy()
        alt[start:start + width] = np.nan
        return _replace_alt(track, alt)

    if spec.type == "non_standard_operation":
        keep = rng.uniform(kw.get("min_s", 150.0), kw.get("max_s", 290.0))
        t_end = track.points[-1].t
        return track.with_points([p for p in track.points if p.t >= t_end - keep])

    if spec.type == "risky_operation":
        th = min(airport.thresholds, key=lambda th: th.elev)
        d = airport.distance_to_threshold(track.lat, track.lon)
        k = rng.uniform(1.0, kw.get("max_extent_nm", 2.0)) / max(float(d.max()), 1e-9)
        peak = kw.get("peak_ft", 51000.0)
        shape = np.sin(np.pi * np.linspace(0.0, 1.0, n))
        alt = field_elev + (peak - field_elev) * shape / shape.max()
        pts = [TrackPoint(p.t, th.lat + (p.lat - th.lat) * k, th.lon + (p.lon - th.lon) * k,
                          float(a), p.gs, p.course) for p, a in zip(track.points, alt)]
        return track.with_points(pts)

    # large_time_gap
    gap = kw.get("gap_s", 3600.0)
    i = int(rng.integers(n // 4, 3 * n // 4))
    pts = [p if j <= i else TrackPoint(p.t + gap, p.lat, p.lon, p.alt, p.gs, p.course)
           for j, p in enumerate(track.points)]
    return track.with_points(pts)


def write_labels(labels: Iterable[tuple[str, str]], sink: TextIO) -> None:
    w = csv.writer(sink, lineterminator="\n")
    w.writerow(("flight_id", "injected_type"))
    for row in labels:
        w.writerow(row)


def read_labels(source: TextIO) -> dict[str, str]:
    reader = csv.DictReader(source)
    return {row["flight_id"]: row["injected_type"] for row in reader}
