import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from incident_impact.graph import Road, RoadNetwork, Sensor
from incident_impact.labeling import (
    BINS_PER_DAY,
    BINS_PER_WEEK,
    BinaryKMeans1D,
    IncidentRecord,
    congestion_flags,
    fill_missing,
    filter_and_label,
    impact_length,
    impact_length_from_distances,
    kmeans_1d_binary,
    weekly_baseline,
    window_indices,
)


# -- missing values ---------------------------------------------------------------

def test_fill_missing_without_gaps_is_identity(rng):
    x = rng.normal(60, 3, size=(3, 2 * BINS_PER_DAY))
    out, dead = fill_missing(x)
    assert np.array_equal(out, x) and not dead.any()


def test_fill_missing_uses_same_day_mean():
    x = np.full((1, BINS_PER_DAY), 60.0)
    x[0, 10] = np.nan
    assert fill_missing(x)[0][0, 10] == 60.0
    y = np.full((1, BINS_PER_DAY), 90.0)
    y[0, :3] = [50.0, np.nan, 70.0]
    y[0, 3:] = np.nan
    assert fill_missing(y)[0][0, 1] == 60.0


def test_fill_missing_empty_day_and_dead_sensor():
    x = np.full((2, 2 * BINS_PER_DAY), 40.0)
    x[0, BINS_PER_DAY:] = np.nan
    x[1] = np.nan
    out, dead = fill_missing(x)
    assert np.all(out[0] == 40.0)
    assert dead.tolist() == [False, True]
    assert np.all(np.isnan(out[1]))


# -- weekly baseline ------------------------------------------------------------------

def test_baseline_of_constant_speed():
    base = weekly_baseline(np.full((2, BINS_PER_WEEK), 65.0))
    assert base.shape == (2, 2016) and np.all(base == 65.0)


def test_baseline_averages_weeks():
    x = np.full((1, 2 * BINS_PER_WEEK), 62.0)
    x[0, 0], x[0, BINS_PER_WEEK] = 60.0, 70.0
    assert weekly_baseline(x)[0, 0] == 65.0


def test_baseline_reproduces_periodic_signal(rng):
    week = rng.normal(60, 5, size=(3, BINS_PER_WEEK))
    base = weekly_baseline(np.tile(week, 3))
    np.testing.assert_allclose(base, week, atol=1e-12)


def test_baseline_respects_start_offset(rng):
    week = rng.normal(60, 5, size=(1, BINS_PER_WEEK))
    shifted = np.roll(np.tile(week, 2), -100, axis=1)
    np.testing.assert_allclose(weekly_baseline(shifted, start_index=100), week, atol=1e-12)


def test_baseline_needs_a_week():
    with pytest.raises(ValueError):
        weekly_baseline(np.full((1, 100), 60.0))
    with pytest.raises(ValueError):
        weekly_baseline(np.zeros((0, 0)))


# -- k-means ------------------------------------------------------------------------------

def test_kmeans_two_groups():
    split = kmeans_1d_binary([10, 11, 12, 60, 61, 62])
    assert split.centers == (11.0, 61.0)
    assert split.low.tolist() == [True] * 3 + [False] * 3


def test_kmeans_identical_values_is_degenerate():
    split = kmeans_1d_binary([50, 50, 50, 50])
    assert split.degenerate
    assert not split.low.any()


def test_kmeans_threshold_between_separated_gaussians():
    hits = 0
    for seed in range(200):
        rng = np.random.default_rng(seed)
        v = np.concatenate([rng.normal(20, 1, 300), rng.normal(60, 1, 700)])
        hits += 20 < kmeans_1d_binary(v).threshold < 60
    assert hits >= 198


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.integers(2, 40), elements=st.floats(0, 100)),
       st.floats(0.1, 10), st.floats(-50, 50), st.integers(0, 1000))
def test_kmeans_order_and_affine_invariance(v, scale, shift, seed):
    base = kmeans_1d_binary(v).low
    perm = np.random.default_rng(seed).permutation(len(v))
    assert np.array_equal(kmeans_1d_binary(v[perm]).low, base[perm])
    scaled = v * scale + shift
    # rescaling can merge values that only differed below float resolution; skip those draws
    if len(np.unique(scaled)) == len(np.unique(v)):
        assert np.array_equal(kmeans_1d_binary(scaled).low, base)


def test_kmeans_estimator():
    km = BinaryKMeans1D().fit(np.array([10, 11, 12, 60, 61, 62]).reshape(-1, 1))
    assert km.labels_.tolist() == [0, 0, 0, 1, 1, 1]
    assert km.predict([5, 100]).tolist() == [0, 1]


def test_congestion_needs_both_signals():
    speed = np.array([[20.0, 20.0, 70.0]])
    base = np.full((1, BINS_PER_WEEK), 65.0)
    base[0, 1] = 15.0  # bin 1 is slow every week
    assert congestion_flags(speed, base, threshold=40.0).tolist() == [[True, False, False]]


# -- impact length --------------------------------------------------------------------------

def test_length_walk_examples():
    d = [0.5, 1.5, 2.5]
    assert impact_length_from_distances(d, [True, True, False]) == (1.5, False)
    assert impact_length_from_distances(d, [False, False, False]) == (0.0, False)
    assert impact_length_from_distances(d, [True, False, False]) == (0.5, False)
    assert impact_length_from_distances(d, [True, True, True]) == (2.5, True)


def test_length_on_a_road():
    # travel direction is increasing milepost: sensors before the incident are upstream
    net = RoadNetwork((Road("A", 5.0),), (), tuple(Sensor(f"s{i}", "A", m) for i, m in enumerate([0.5, 1.5, 2.5, 4.0])))
    rec = IncidentRecord("x", "A", 3.0, 10, 20)
    flags = np.zeros((4, 30), dtype=bool)
    flags[2, 12] = flags[1, 15] = True
    flags[0, 25] = True  # outside the clearance window
    flags[3, 12] = True  # downstream
    assert impact_length(rec, net, flags, (10, 20)) == (1.5, False)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.01, 20), min_size=1, max_size=8, unique=True),
       st.lists(st.booleans(), min_size=8, max_size=8), st.integers(0, 7))
def test_length_is_monotone_in_flags(dist, flags, extra):
    flags = np.array(flags[: len(dist)])
    more = flags.copy()
    more[extra % len(dist)] = True
    assert impact_length_from_distances(dist, more)[0] >= impact_length_from_distances(dist, flags)[0]


# -- durations and windows ---------------------------------------------------------------------

def _single_road():
    return RoadNetwork((Road("A", 5.0),), (), (Sensor("s0", "A", 1.0),))


def test_duration_filter_and_window():
    net = _single_road()
    flags = np.zeros((1, 400), dtype=bool)
    recs = [
        IncidentRecord("keep", "A", 2.0, 100, 110),
        IncidentRecord("short", "A", 2.0, 200, 205),
        IncidentRecord("backwards", "A", 2.0, 300, 290),
    ]
    report = filter_and_label(recs, flags, net)
    assert [(l.incident_id, l.duration_min) for l in report.labeled] == [("keep", 50.0)]
    assert dict(report.rejected)["short"].startswith("duration 25")
    assert dict(report.rejected)["backwards"] == "restoration before validation"
    assert list(window_indices(100, 6, 3)) == list(range(94, 103))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(10, 380), st.integers(-5, 30)), max_size=15))
def test_no_label_below_thirty_minutes(pairs):
    recs = [IncidentRecord(f"i{k}", "A", 2.0, v, v + d) for k, (v, d) in enumerate(pairs)]
    report = filter_and_label(recs, np.zeros((1, 400), dtype=bool), _single_road())
    assert all(l.duration_min >= 30 for l in report.labeled)
    assert len(report.labeled) + len(report.rejected) == len(recs)
