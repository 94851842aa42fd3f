import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from seetrack.errors import ArgumentError
from seetrack.metrics import LabeledPrediction, euclidean, mean_distance, pk_accuracy, report

coord = st.floats(0, 200, allow_nan=False)
point = st.tuples(coord, coord)


def test_euclidean():
    assert euclidean((1, 1), (1, 1)) == 0
    assert euclidean((0, 0), (3, 4)) == 5


def test_euclidean_random(rng):
    for a, b in rng.uniform(0, 100, (100, 2, 2)):
        assert euclidean(a, b) == pytest.approx(math.sqrt((a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2))


def test_strict_threshold():
    s = [LabeledPrediction((10, 10), (13, 14))]
    assert pk_accuracy(s, 5) == 0.0
    assert pk_accuracy(s, 10) == 1.0


def test_perfect_predictions():
    s = [LabeledPrediction((i, i), (i, i)) for i in range(5)]
    assert pk_accuracy(s, 0.001) == 1.0
    assert mean_distance(s) == 0.0


def test_invalid_samples_excluded():
    s = [LabeledPrediction((0, 0), (0, 0)), LabeledPrediction((0, 0), (50, 50), valid=False)]
    assert pk_accuracy(s, 5) == 1.0
    assert mean_distance(s) == 0.0
    with pytest.raises(ArgumentError):
        pk_accuracy([LabeledPrediction((0, 0), (0, 0), valid=False)], 5)
    with pytest.raises(ArgumentError):
        mean_distance([])


def test_pk_recount(rng):
    gts = rng.uniform(0, 64, (100, 2))
    preds = gts + rng.normal(0, 5, (100, 2))
    preds = np.clip(preds, 0, None)
    s = [LabeledPrediction(tuple(g), tuple(p)) for g, p in zip(gts, preds)]
    d = np.linalg.norm(preds - gts, axis=1)
    assert pk_accuracy(s, 5) == np.count_nonzero(d < 5) / 100


def test_mean_distance():
    assert mean_distance([LabeledPrediction((0, 0), (3, 4))]) == 5
    assert mean_distance([LabeledPrediction((0, 0), (0, 0)), LabeledPrediction((0, 0), (6, 8))]) == 5


@given(st.lists(st.tuples(point, point), min_size=1, max_size=30), st.floats(0.1, 50), st.floats(0, 50))
def test_monotone_and_bounded(pairs, k, dk):
    s = [LabeledPrediction(g, p) for g, p in pairs]
    a, b = pk_accuracy(s, k), pk_accuracy(s, k + dk)
    assert 0 <= a <= b <= 1
    assert mean_distance(s) >= 0


@given(st.lists(st.tuples(point, point), min_size=1, max_size=20), st.floats(0, 100), st.floats(0, 100))
def test_translation_invariance(pairs, tx, ty):
    s = [LabeledPrediction(g, p) for g, p in pairs]
    t = [LabeledPrediction((g[0] + tx, g[1] + ty), (p[0] + tx, p[1] + ty)) for g, p in pairs]
    assert pk_accuracy(s, 5) == pk_accuracy(t, 5) or _near_threshold(s, 5)
    assert mean_distance(t) == pytest.approx(mean_distance(s), abs=1e-9)


def _near_threshold(s, k):
    # float translation can move a distance across k by one ulp
    return any(abs(euclidean(x.gt, x.pred) - k) < 1e-9 for x in s)


def test_report_format():
    s = [LabeledPrediction((10, 10), (13, 14))]
    assert report(s) == "p5=0.000000 p10=1.000000 dist=5.000000 n=1"


def test_negative_coordinates_rejected():
    with pytest.raises(ArgumentError):
        LabeledPrediction((-1, 0), (0, 0))
