import dataclasses
import hashlib
import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from trackae.features import (STD_FLOOR, FeatureSeries, FilterRuleSet, NormStats, ResampleError, SplitSpec,
                              apply_norm, fit_norm_stats, invert_norm, label_preliminary_normal, read_features,
                              resample, split_train_test, write_features)

from conftest import radial_track, test_airport


def nominal(n=60, **meta):
    d = np.linspace(38, 0.5, n)
    return radial_track(d, 1000 + 300 * d, 140 + 3 * d, **meta)


# ---------------------------------------------------------------- filtering

def test_helicopter_flagged(airport):
    v = label_preliminary_normal(nominal(is_helicopter=True), FilterRuleSet(), airport)
    assert v.reasons == ("helicopter",)
    assert not v.normal


def test_clean_track_normal(airport):
    v = label_preliminary_normal(nominal(), FilterRuleSet(), airport)
    assert v.normal and str(v) == "normal"


def test_gap_and_too_short_both_reported(airport):
    d = np.linspace(30, 25, 10)
    tr = radial_track(d, [8000] * 10, [220] * 10)
    pts = list(tr.points)
    pts[5:] = [dataclasses.replace(p, t=p.t + 26.0) for p in pts[5:]]  # one 30 s gap
    v = label_preliminary_normal(tr.with_points(pts), FilterRuleSet(min_points=30), airport)
    assert set(v.reasons) == {"large_gap", "too_short"}


@pytest.mark.parametrize("meta,reason", [
    ({"is_military_or_uas": True}, "military_uas"),
    ({"missed_approach": True}, "missed_approach"),
])
def test_metadata_rules(airport, meta, reason):
    assert reason in label_preliminary_normal(nominal(**meta), FilterRuleSet(), airport).reasons


def test_bounds_and_rates(airport):
    base = nominal()
    alt = base.alt.copy()
    alt[20] = 70000
    tr = radial_track(np.linspace(38, 0.5, 60), alt, base.gs)
    reasons = label_preliminary_normal(tr, FilterRuleSet(), airport).reasons
    assert "alt_bound" in reasons and "vrate_bound" in reasons
    gs = base.gs.copy()
    gs[20] = 800
    tr = radial_track(np.linspace(38, 0.5, 60), base.alt, gs)
    reasons = label_preliminary_normal(tr, FilterRuleSet(), airport).reasons
    assert "speed_bound" in reasons and "accel_bound" in reasons


def test_internal_origin(airport):
    d = np.linspace(15, 0.5, 60)
    tr = radial_track(d, 1200 + 50 * d, [120] * 60)
    assert "internal_origin" in label_preliminary_normal(tr, FilterRuleSet(), airport).reasons
    off = FilterRuleSet(exclude_internal_origin=False)
    assert label_preliminary_normal(tr, off, airport).normal


def test_missing_altitude_rule(airport):
    base = nominal()
    alt = [None if 10 <= i < 30 else a for i, a in enumerate(base.alt)]
    tr = radial_track(np.linspace(38, 0.5, 60), alt, base.gs)
    assert "missing_alt" in label_preliminary_normal(tr, FilterRuleSet(), airport).reasons


def test_rule_set_validation():
    with pytest.raises(ValueError):
        FilterRuleSet(max_gap_s=0)
    with pytest.raises(ValueError):
        FilterRuleSet(min_points=1)
    with pytest.raises(ValueError):
        FilterRuleSet(max_alt_ft=-1)


toggles = st.fixed_dictionaries({k: st.booleans() for k in (
    "exclude_helicopters", "exclude_military_uas", "exclude_missed_approach", "exclude_internal_origin")})


@given(toggles, st.sampled_from(["exclude_helicopters", "exclude_military_uas", "exclude_missed_approach",
                                 "exclude_internal_origin"]),
       st.booleans(), st.booleans(), st.booleans())
def test_adding_a_rule_never_unflags(flags, extra, heli, mil, missed):
    ap = test_airport()
    tr = nominal(is_helicopter=heli, is_military_or_uas=mil, missed_approach=missed)
    fewer = FilterRuleSet(**{**flags, extra: False})
    more = FilterRuleSet(**{**flags, extra: True})
    a = label_preliminary_normal(tr, fewer, ap)
    b = label_preliminary_normal(tr, more, ap)
    assert set(a.reasons) <= set(b.reasons)


# ---------------------------------------------------------------- resampling

@pytest.mark.parametrize("length", [2, 7, 256])
def test_resample_constants(airport, length):
    tr = radial_track(np.linspace(30, 1, 40), [5000] * 40, [180] * 40)
    fs = resample(tr, length, airport)
    assert fs.length == length
    assert np.all(fs.alt == 5000) and np.all(fs.gs == 180)


def test_resample_linear_in_distance(airport):
    d = np.linspace(40, 0, 23)
    tr = radial_track(d, 2000 + 200 * d, [150] * 23)
    fs = resample(tr, 5, airport)
    np.testing.assert_allclose(fs.alt, [10000, 8000, 6000, 4000, 2000], atol=1e-6)


def test_resample_two_points(airport):
    tr = radial_track([10, 2], [4000, 2500], [200, 150])
    fs = resample(tr, 2, airport)
    assert list(fs.alt) == [4000, 2500] and list(fs.gs) == [200, 150]


def test_resample_imputes_interior_gaps(airport):
    alt = [6000, None, None, 3000]
    tr = radial_track([30, 20, 10, 0], alt, [200] * 4)
    fs = resample(tr, 4, airport)
    np.testing.assert_allclose(fs.alt, [6000, 5000, 4000, 3000], atol=1e-6)


def test_resample_errors(airport):
    tr = radial_track([30, 20, 10], [None, 4000, 3000], [200] * 3)
    with pytest.raises(ResampleError):
        resample(tr, 8, airport)
    tr = radial_track([30, 20, 10], [None] * 3, [200] * 3)
    with pytest.raises(ResampleError):
        resample(tr, 8, airport)
    with pytest.raises(ValueError):
        resample(nominal(), 1, airport)


@given(st.integers(2, 5000), st.integers(2, 300))
def test_resample_length_exact(n, length):
    ap = test_airport()
    d = np.linspace(39, 0.2, n)
    fs = resample(radial_track(d, 1000 + 250 * d, 130 + 2 * d, dt=1.0), length, ap)
    assert fs.length == length
    assert np.all(np.isfinite(fs.as_array()))


# ---------------------------------------------------------------- normalization

def series(fid, alt, gs=None):
    alt = np.asarray(alt, dtype=float)
    return FeatureSeries(fid, alt, alt * 0 + 100 if gs is None else gs)


def test_fit_norm_stats_example():
    s = fit_norm_stats([series("a", [1, 2, 3], [5, 6, 7])])
    assert s.mean[0] == pytest.approx(2.0)
    assert s.std[0] == pytest.approx(0.8165, abs=1e-4)


def test_std_floor():
    assert fit_norm_stats([series("a", [3, 3, 3])]).std == (STD_FLOOR, STD_FLOOR)


def test_duplicate_series_same_stats():
    a = series("a", [1, 5, 2], [7, 1, 3])
    one, two = fit_norm_stats([a]), fit_norm_stats([a, a])
    np.testing.assert_allclose(two.mean + two.std, one.mean + one.std, atol=1e-12)


def test_apply_norm_examples():
    stats = NormStats((2.0, 100.0), (0.8165, 1.0))
    out = apply_norm(series("a", [1, 2, 3]), stats)
    np.testing.assert_allclose(out.alt, [-1.2247, 0, 1.2247], atol=1e-3)
    centered = apply_norm(series("b", [2, 2, 2]), stats)
    assert np.all(centered.alt == 0) and np.all(centered.gs == 0)


arrays = st.lists(st.floats(-1e5, 1e5), min_size=2, max_size=30)


@given(st.lists(arrays, min_size=1, max_size=5), st.data())
def test_norm_round_trip_and_pooled_moments(alts, data):
    L = len(alts[0])
    alts = [(a * L)[:L] for a in alts]
    gss = [data.draw(st.lists(st.floats(0, 600), min_size=L, max_size=L)) for _ in alts]
    train = [FeatureSeries(str(i), a, g) for i, (a, g) in enumerate(zip(alts, gss))]
    stats = fit_norm_stats(train)
    normed = [apply_norm(fs, stats) for fs in train]
    for fs, n in zip(train, normed):
        back = invert_norm(n, stats)
        np.testing.assert_allclose(back.alt, fs.alt, atol=1e-9 * max(1.0, np.abs(fs.alt).max()))
        np.testing.assert_allclose(back.gs, fs.gs, atol=1e-9 * max(1.0, np.abs(fs.gs).max()))
    pooled = np.concatenate([n.as_array() for n in normed], axis=1)
    for ch in range(2):
        if stats.std[ch] > 1e-3:
            assert abs(pooled[ch].mean()) < 1e-9
            assert abs(pooled[ch].std() - 1.0) < 1e-6


def test_norm_stats_validation():
    with pytest.raises(ValueError):
        NormStats((0, 0), (1, 0))
    with pytest.raises(ValueError):
        fit_norm_stats([])


# ---------------------------------------------------------------- splitting

def ds(n):
    return [series(f"id{i}", [i, i]) for i in range(n)]


def test_split_half():
    tr, te = split_train_test(ds(4), SplitSpec(0.5, 0))
    assert len(tr) == 2 and len(te) == 2


def test_split_deterministic_and_seed_sensitive():
    a = split_train_test(ds(100), SplitSpec(0.8, 1))
    b = split_train_test(ds(100), SplitSpec(0.8, 1))
    c = split_train_test(ds(100), SplitSpec(0.8, 2))

    def h(part):
        return hashlib.sha256(",".join(sorted(fs.flight_id for fs in part[0])).encode()).hexdigest()

    assert h(a) == h(b)
    assert h(a) != h(c)


@given(st.permutations(list(range(30))), st.integers(0, 2 ** 32))
def test_split_stable_under_reordering(perm, seed):
    data = ds(30)
    spec = SplitSpec(0.7, seed)
    base = {fs.flight_id for fs in split_train_test(data, spec)[0]}
    shuffled = {fs.flight_id for fs in split_train_test([data[i] for i in perm], spec)[0]}
    assert base == shuffled


def test_split_spec_bounds():
    for bad in (0.0, 1.0, 1.5):
        with pytest.raises(ValueError):
            SplitSpec(bad)


def test_feature_csv_round_trip():
    a = [FeatureSeries("x", [1.5, 2.25, 3.0], [100, 110, 120.125]), FeatureSeries("y", [0.1, 0.2, 0.3], [1, 2, 3])]
    buf = io.StringIO()
    write_features(a, buf)
    assert buf.getvalue().splitlines()[0] == "flight_id,idx,alt,gs"
    b = read_features(io.StringIO(buf.getvalue()))
    assert [fs.flight_id for fs in b] == ["x", "y"]
    for u, v in zip(a, b):
        assert np.array_equal(u.as_array(), v.as_array())
