import numpy as np
import pytest
from hypothesis import settings

from trackae.geo import AirportConfig, RunwayThreshold, Track, TrackPoint, WeightClass, destination

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

FIELD_LAT, FIELD_LON = 36.08, -115.15

# one line per acceptance criterion, printed at the end of the session
AC_RESULTS = {}


def pytest_terminal_summary(terminalreporter):
    if not AC_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(AC_RESULTS, key=lambda k: int(k.split("-")[1])):
        terminalreporter.write_line(AC_RESULTS[key])


def test_airport(field_elev=1000.0):
    return AirportConfig("TST", (RunwayThreshold("TST", "08", FIELD_LAT, FIELD_LON, field_elev),), 40.0)


test_airport.__test__ = False


@pytest.fixture
def airport():
    return test_airport()


def radial_track(dists, alts, speeds, *, flight_id="F1", dt=4.0, bearing=270.0, t0=0.0, **meta):
    """Points along one radial toward the test threshold at the given distances (NM)."""
    lat, lon = destination(FIELD_LAT, FIELD_LON, bearing, np.asarray(dists, dtype=float))
    pts = tuple(
        TrackPoint(t0 + dt * i, float(la), float(lo),
                   None if a is None else float(a), None if g is None else float(g), 90.0)
        for i, (la, lo, a, g) in enumerate(zip(np.atleast_1d(lat), np.atleast_1d(lon), alts, speeds))
    )
    return Track(flight_id, pts, meta.pop("aircraft_type", "B738"), meta.pop("is_helicopter", False),
                 meta.pop("is_military_or_uas", False), meta.pop("weight_class", WeightClass.LARGE),
                 meta.pop("missed_approach", False))
