import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sedid.detectors import (
    GENERATED, GREATER, LESS, REAL, ScoredSample, Threshold, baseline_score, baseline_scores, calibrate,
    calibrate_arrays, classify,
)
from sedid.errors import DegenerateCalibration, InvalidArgument
from sedid.foundation import Rng, l2_sq
from sedid.noise_model import ConstantPredictor, NoisePredictor, PointMassPredictor
from sedid.schedule import linear_schedule

S = linear_schedule(100, 1e-3, 0.2)


def brute_force_calibrate(scores, labels):
    """Every midpoint/sentinel threshold and both orientations, compared by plain counting."""
    vals = sorted(set(scores))
    cands = [-np.inf] + [(a + b) / 2 for a, b in zip(vals, vals[1:])] + [np.inf]
    best = -1.0
    for h in cands:
        for o in (LESS, GREATER):
            th = Threshold(h, o)
            hits = sum(classify(ScoredSample("", s, None), th) == lab for s, lab in zip(scores, labels))
            best = max(best, hits / len(scores))
    return best


def samples(scores, labels):
    return [ScoredSample(f"s{i}", float(s), int(l)) for i, (s, l) in enumerate(zip(scores, labels))]


def test_classify_examples():
    assert classify(ScoredSample("a", 0.1), Threshold(0.5, LESS)) == GENERATED
    assert classify(ScoredSample("a", 0.5), Threshold(0.5, LESS)) == REAL
    assert classify(ScoredSample("a", 0.9), Threshold(0.5, GREATER)) == GENERATED
    assert classify(ScoredSample("a", 0.5), Threshold(0.5, GREATER)) == REAL


def test_scored_sample_validation():
    with pytest.raises(InvalidArgument):
        ScoredSample("x", float("nan"))
    with pytest.raises(InvalidArgument):
        ScoredSample("x", 1.0, 2)
    with pytest.raises(InvalidArgument):
        Threshold(0.0, "sideways")


def test_calibrate_perfect_separation():
    th, acc = calibrate(samples([0.1, 0.2, 0.8, 0.9], [1, 1, 0, 0]))
    assert acc == 1.0
    assert th.orientation == LESS
    assert 0.2 < th.h < 0.8


def test_calibrate_all_equal():
    th, acc = calibrate(samples([0.3] * 6, [0, 1] * 3))
    assert acc == 0.5
    assert th.h == -np.inf and th.orientation == LESS


def test_calibrate_tie_break_prefers_smaller_h_then_less():
    # every candidate of the mirrored orientation ties; pick the smallest h
    th, acc = calibrate(samples([1.0, 2.0], [0, 1]))
    assert acc == 1.0
    assert (th.h, th.orientation) == (1.5, GREATER)


def test_calibrate_single_class():
    with pytest.raises(DegenerateCalibration):
        calibrate(samples([0.1, 0.2], [1, 1]))


def test_calibrate_random_matches_brute_force():
    r = Rng(1)
    for _ in range(20):
        scores = np.round(r.normal(20), 1)
        labels = r.integers(0, 2, 20)
        if labels.min() == labels.max():
            continue
        th, acc = calibrate_arrays(scores, labels)
        assert acc == brute_force_calibrate(scores.tolist(), labels.tolist())
        hits = sum(classify(ScoredSample("", s), th) == l for s, l in zip(scores, labels))
        assert hits / 20 == acc


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=30), st.floats(-5, 5), st.floats(0, 3))
def test_monotone_in_h(scores, h, dh):
    lo = sum(classify(ScoredSample("", s), Threshold(h, LESS)) for s in scores)
    hi = sum(classify(ScoredSample("", s), Threshold(h + dh, LESS)) for s in scores)
    assert hi >= lo


@settings(max_examples=100, deadline=None)
@given(st.integers(-1000, 1000), st.integers(-1000, 1000), st.sampled_from([LESS, GREATER]))
def test_classify_invariant_under_increasing_transform(s, h, o):
    # integer inputs keep the cubic exact in float64, so it is strictly increasing
    def g(v):
        return float(v ** 3 + 7)

    assert classify(ScoredSample("", float(s)), Threshold(float(h), o)) == \
        classify(ScoredSample("", g(s)), Threshold(g(h), o))


class _Oracle(NoisePredictor):
    """Returns the exact noise that produced x_t from a known x0."""

    def __init__(self, x0, s):
        self.x0, self.s = x0, s

    def eval(self, x, t, cond=None):
        return (x - np.sqrt(self.s.alpha_bar[t]) * self.x0) / np.sqrt(1 - self.s.alpha_bar[t])


def test_baseline_examples():
    x0 = Rng(2).normal(3)
    assert baseline_score(_Oracle(x0, S), S, x0, 50, Rng(3)) == pytest.approx(0.0, abs=1e-20)
    eps = Rng(3).normal(3)
    assert baseline_score(ConstantPredictor(0), S, x0, 50, Rng(3)) == l2_sq(eps, np.zeros(3))
    for seed in range(10):
        assert baseline_score(PointMassPredictor(x0, S), S, x0, 1 + seed * 10, Rng(seed)) <= 1e-20
    with pytest.raises(InvalidArgument):
        baseline_score(ConstantPredictor(0), S, x0, 0, Rng(1))


def test_baseline_scores_batch_matches_single():
    X = Rng(4).normal((5, 2))
    p = ConstantPredictor(0.2)
    batch = baseline_scores(p, S, X, 30, seed=11)
    for i in range(5):
        single = baseline_score(p, S, X[i], 30, Rng(11).spawn(i))
        assert batch[i] == pytest.approx(single, rel=1e-14)
