import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mogpaug.dataset import from_arrays
from mogpaug.errors import InputError
from mogpaug.evaluation import Predictions, compare_runs, knn_localize, score


def ds(rssi, lon, lat, floor, building):
    return from_arrays(np.asarray(rssi, float), lon, lat, floor, building)


def preds(b, f, x, y):
    return Predictions(np.asarray(b), np.asarray(f), np.asarray(x, float), np.asarray(y, float))


def test_k1_on_itself_is_exact():
    rng = np.random.default_rng(0)
    rssi = rng.uniform(-100, -30, (30, 6))
    rssi[rng.random(rssi.shape) < 0.3] = np.nan
    train = ds(rssi, rng.uniform(0, 50, 30), rng.uniform(0, 50, 30),
               rng.integers(0, 4, 30), rng.integers(0, 3, 30))
    res = score(knn_localize(train, train, k=1), train)
    assert (res.building_hit_pct, res.floor_hit_pct, res.mean_3d_error_m) == (100.0, 100.0, 0.0)


def test_tie_break_by_distance_sum():
    # two neighbours with one vote each: the closer one's label wins
    train = ds([[-50.0], [-60.0], [-90.0]], [0, 10, 20], [0, 0, 0], [0, 1, 2], [0, 0, 0])
    p = knn_localize(train, np.array([[-53.0]]), k=2)
    assert (p.building[0], p.floor[0], p.longitude[0]) == (0, 0, 0.0)


def test_tie_break_equal_distance_lower_index():
    train = ds([[-60.0], [-40.0]], [5, 7], [0, 0], [2, 1], [0, 0])
    p = knn_localize(train, np.array([[-50.0]]), k=2)
    assert p.floor[0] == 2 and p.longitude[0] == 5.0


def test_majority_position_is_centroid_of_agreeing_neighbours():
    train = ds([[-50.0], [-51.0], [-52.0]], [0, 4, 100], [0, 2, 100], [1, 1, 3], [0, 0, 0])
    p = knn_localize(train, np.array([[-50.0]]), k=3)
    assert p.floor[0] == 1
    assert (p.longitude[0], p.latitude[0]) == (2.0, 1.0)


def test_two_building_clusters():
    rng = np.random.default_rng(1)
    a = rng.normal([-40, -95], 2, (20, 2))
    b = rng.normal([-95, -40], 2, (20, 2))
    train = ds(np.vstack([a, b]), rng.uniform(0, 9, 40), rng.uniform(0, 9, 40),
               [0] * 40, [0] * 20 + [1] * 20)
    q = np.vstack([rng.normal([-40, -95], 2, (10, 2)), rng.normal([-95, -40], 2, (10, 2))])
    truth = ds(q, np.zeros(20), np.zeros(20), [0] * 20, [0] * 10 + [1] * 10)
    assert score(knn_localize(train, truth, k=3), truth).building_hit_pct == 100.0


def test_not_detected_uses_fill_value():
    train = ds([[np.nan, -50.0], [-104.0, -80.0]], [0, 1], [0, 0], [0, 1], [0, 0])
    p = knn_localize(train, np.array([[-105.0, -50.0]]), k=1)
    assert p.floor[0] == 0


def test_three_four_five_error():
    truth = preds([0], [0], [0.0], [0.0])
    assert score(preds([0], [0], [3.0], [4.0]), truth).mean_3d_error_m == pytest.approx(5.0)


def test_one_floor_miss_is_floor_height():
    truth = preds([0], [2], [1.0], [1.0])
    res = score(preds([0], [3], [1.0], [1.0]), truth)
    assert res.mean_3d_error_m == pytest.approx(4.0)
    assert res.floor_hit_pct == 0.0 and res.building_hit_pct == 100.0
    assert score(preds([0], [3], [1.0], [1.0]), truth, floor_height=8.0).mean_3d_error_m == pytest.approx(8.0)


def test_wrong_building_is_not_a_floor_hit():
    res = score(preds([1], [2], [0.0], [0.0]), preds([0], [2], [0.0], [0.0]))
    assert res.building_hit_pct == 0.0 and res.floor_hit_pct == 0.0


labels = st.lists(st.tuples(st.integers(0, 2), st.integers(0, 4), st.integers(0, 2), st.integers(0, 4)),
                  min_size=1, max_size=40)


@settings(max_examples=100, deadline=None)
@given(labels)
def test_floor_hit_never_exceeds_building_hit(rows):
    b, f, tb, tf = map(np.array, zip(*rows))
    zeros = np.zeros(len(rows))
    res = score(preds(b, f, zeros, zeros), preds(tb, tf, zeros, zeros))
    assert res.floor_hit_pct <= res.building_hit_pct
    assert 0 <= res.floor_hit_pct <= 100 and res.mean_3d_error_m >= 0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_query_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    train = ds(rng.uniform(-100, -30, (15, 4)), rng.uniform(0, 20, 15), rng.uniform(0, 20, 15),
               rng.integers(0, 3, 15), rng.integers(0, 2, 15))
    q = ds(rng.uniform(-100, -30, (12, 4)), rng.uniform(0, 20, 12), rng.uniform(0, 20, 12),
           rng.integers(0, 3, 12), rng.integers(0, 2, 12))
    perm = rng.permutation(12)
    a = score(knn_localize(train, q, k=3), q)
    qp = q.subset(perm)
    b = score(knn_localize(train, qp, k=3), qp)
    assert a.building_hit_pct == b.building_hit_pct and a.floor_hit_pct == b.floor_hit_pct
    assert a.mean_3d_error_m == pytest.approx(b.mean_3d_error_m, rel=1e-12)


def test_duplicating_training_records_keeps_k1():
    rng = np.random.default_rng(2)
    train = ds(rng.uniform(-100, -30, (10, 3)), rng.uniform(0, 9, 10), rng.uniform(0, 9, 10),
               rng.integers(0, 3, 10), [0] * 10)
    q = rng.uniform(-100, -30, (8, 3))
    from mogpaug.dataset import concat
    a = knn_localize(train, q, k=1)
    b = knn_localize(concat(train, train), q, k=1)
    np.testing.assert_array_equal(a.floor, b.floor)
    np.testing.assert_array_equal(a.longitude, b.longitude)


def test_k_is_clamped(caplog):
    train = ds([[-50.0], [-60.0]], [0, 2], [0, 0], [0, 0], [0, 0])
    with caplog.at_level(logging.WARNING):
        p = knn_localize(train, np.array([[-55.0]]), k=5)
    assert "clamping" in caplog.text
    assert p.longitude[0] == 1.0


def test_input_errors():
    train = ds([[-50.0]], [0], [0], [0], [0])
    with pytest.raises(InputError):
        knn_localize(train, np.array([[-50.0, -60.0]]))
    with pytest.raises(InputError):
        knn_localize(train, np.array([[-50.0]]), k=0)
    with pytest.raises(InputError):
        score(preds([0], [0], [0], [0]), preds([0, 0], [0, 0], [0, 0], [0, 0]))


def report(metrics, test="h1", label=None):
    return {"label": label, "metrics": metrics, "dataset_hashes": {"test": test}}


M = {"building_hit_pct": 99.0, "floor_hit_pct": 90.0, "mean_3d_error_m": 8.5}


def test_compare_identical_reports_zero_delta():
    doc, text = compare_runs([report(M), report(M)], ["baseline", "again"])
    assert all(v == 0 for v in doc["columns"][1]["delta"].values())
    assert "+0.00" in text and "3D error [m]" in text


def test_compare_deltas():
    better = dict(M, mean_3d_error_m=7.0)
    doc, text = compare_runs([report(M, label="base"), report(better, label="aug")])
    assert doc["columns"][1]["delta"]["mean_3d_error_m"] == pytest.approx(-1.5)
    assert "-1.50" in text


def test_compare_rejects_mismatched_queries():
    with pytest.raises(InputError, match="different query sets"):
        compare_runs([report(M, "h1"), report(M, "h2")])
    with pytest.raises(InputError):
        compare_runs([report(M)])
