import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pulsemark import similarity
from pulsemark.core import AnomalyLabel, LabeledTrace
from pulsemark.similarity import Boundary, CostKind, dtw, envelope, knn_search, lb_keogh, nn_search

from conftest import make_seq
from oracles import brute_dtw, brute_envelope

COSTS = [CostKind.ABSOLUTE, CostKind.SQUARED]
BOUNDARIES = [Boundary.FREE, Boundary.STANDARD]

series = st.lists(st.floats(-50, 50, allow_nan=False, allow_subnormal=False), min_size=1, max_size=6)


@pytest.mark.parametrize("cost", COSTS)
@pytest.mark.parametrize("boundary", BOUNDARIES)
def test_identical_sequences_cost_nothing(cost, boundary):
    q = [3.0, 1.0, 4.0, 1.0, 5.0]
    assert dtw(q, q, cost, None, boundary) == 0.0
    assert dtw(q, q, cost, 0, boundary) == 0.0


def test_frozen_examples():
    # Values from brute-force path enumeration (tests/oracles.py).
    assert dtw([0, 1, 2], [0, 1, 3], CostKind.ABSOLUTE) == 1.0
    assert dtw([0, 5], [5, 0], CostKind.ABSOLUTE, band=0) == 5.0
    assert dtw([1, 3, 2], [4, 0, 2], CostKind.SQUARED, band=1) == 2.0
    assert dtw([1, 3, 2], [4, 0, 2], CostKind.SQUARED, band=1, boundary=Boundary.STANDARD) == 11.0


def test_dtw_errors():
    with pytest.raises(ValueError):
        dtw([], [1.0])
    with pytest.raises(ValueError):
        dtw([1.0, 2.0, 3.0], [1.0], band=1)


@settings(max_examples=300, deadline=None)
@given(series, series, st.sampled_from(COSTS), st.sampled_from(BOUNDARIES), st.one_of(st.none(), st.integers(0, 5)))
def test_dtw_matches_path_enumeration(q, c, cost, boundary, band):
    if band is not None and band < abs(len(q) - len(c)):
        band = abs(len(q) - len(c))
    got = dtw(q, c, cost, band, boundary)
    want = brute_dtw(q, c, cost is CostKind.SQUARED, band, boundary is Boundary.FREE)
    assert math.isclose(got, want, rel_tol=1e-12, abs_tol=1e-12)


@settings(max_examples=200, deadline=None)
@given(series, series, st.sampled_from(COSTS))
def test_symmetry_up_to_origin_cost(q, c, cost):
    a, b = dtw(q, c, cost), dtw(c, q, cost)
    origin = abs(q[0] - c[0]) if cost is CostKind.ABSOLUTE else (q[0] - c[0]) ** 2
    assert a >= 0 and b >= 0
    assert abs(a - b) <= origin + 1e-9 * max(1.0, a, b)
    if origin == 0:
        assert math.isclose(a, b, rel_tol=1e-12, abs_tol=1e-12)


def test_envelope_examples():
    env = envelope([1, 3, 2], 1)
    np.testing.assert_array_equal(env.upper, [3, 3, 3])
    np.testing.assert_array_equal(env.lower, [1, 1, 2])
    q = np.array([5.0, 1.0, 7.0, 2.0])
    env0 = envelope(q, 0)
    np.testing.assert_array_equal(env0.upper, q)
    np.testing.assert_array_equal(env0.lower, q)
    flat = envelope(np.full(9, 4.0), 3)
    np.testing.assert_array_equal(flat.upper, np.full(9, 4.0))
    np.testing.assert_array_equal(flat.lower, np.full(9, 4.0))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-100, 100, allow_nan=False), min_size=1, max_size=20), st.integers(0, 8))
def test_envelope_matches_direct_windows(q, w):
    env = envelope(q, w)
    upper, lower = brute_envelope(q, w)
    np.testing.assert_array_equal(env.upper, upper)
    np.testing.assert_array_equal(env.lower, lower)
    assert np.all(env.lower <= np.asarray(q)) and np.all(np.asarray(q) <= env.upper)


def test_lb_keogh_examples():
    q = [1, 3, 2]
    assert lb_keogh(q, [2, 2, 2], 1, CostKind.SQUARED) == 0.0
    assert lb_keogh(q, [4, 0, 2], 1, CostKind.SQUARED, Boundary.STANDARD) == 2.0
    # The free-origin boundary leaves the first pair free, so its first term drops out.
    assert lb_keogh(q, [4, 0, 2], 1, CostKind.SQUARED, Boundary.FREE) == 1.0
    assert lb_keogh(q, [4, 0, 2], 1, CostKind.ABSOLUTE, Boundary.STANDARD) == 2.0
    assert lb_keogh(q, q, 1) == 0.0
    with pytest.raises(ValueError):
        lb_keogh(q, [1, 2], 1)


@pytest.mark.parametrize("cost", COSTS)
@pytest.mark.parametrize("boundary", BOUNDARIES)
def test_lb_keogh_bounds_banded_dtw(rng, cost, boundary):
    for _ in range(300):
        n = int(rng.integers(2, 40))
        w = int(rng.integers(0, 8))
        q, c = rng.normal(0, 10, n), rng.normal(0, 10, n)
        if rng.random() < 0.3:
            c = q + rng.normal(0, 0.5, n)
        lb = lb_keogh(q, c, w, cost, boundary)
        d = dtw(q, c, cost, w, boundary)
        assert 0.0 <= lb <= d * (1 + 1e-12) + 1e-12


def test_first_term_breaks_bound_under_free_origin():
    # Why the free-origin bound omits index 0: a mismatch at the free origin
    # would otherwise be charged by the bound but not by DTW.
    q, c = [0.0, 0.0, 0.0], [10.0, 0.0, 0.0]
    assert dtw(q, c, CostKind.SQUARED, 1, Boundary.FREE) == 0.0
    assert similarity.lb_keogh_terms(envelope(q, 1), c).sum() == 100.0
    assert lb_keogh(q, c, 1, CostKind.SQUARED, Boundary.FREE) == 0.0


def test_stretch():
    np.testing.assert_array_equal(similarity.stretch([0.0, 10.0], 3), [0.0, 5.0, 10.0])
    x = np.array([1.0, 2.0, 3.0])
    np.testing.assert_array_equal(similarity.stretch(x, 3), x)
    np.testing.assert_array_equal(similarity.stretch([7.0], 4), [7.0] * 4)


def test_default_band():
    assert similarity.default_band(10) == 5
    assert similarity.default_band(64) == 7
    assert similarity.default_band(128) == 13


def _candidates(rng, count, length=24):
    out = []
    for i in range(count):
        n = int(rng.integers(length // 2, length + 1))
        rates = np.abs(rng.normal(rng.choice([20.0, 50.0, 80.0]), 5, n))
        label = list(AnomalyLabel)[i % 3]
        out.append(LabeledTrace(make_seq(rates, trace_id=f"c{i:03d}"), "w", label))
    return out


def exhaustive(query, candidates, cost, band, boundary, k=1):
    q = np.asarray(query, dtype=float)
    band = similarity.default_band(q.size) if band is None else band
    scored = []
    for cand in candidates:
        d = dtw(q, similarity.stretch(cand.sequence.rates, q.size), cost, band, boundary)
        scored.append((d, cand.trace_id))
    return sorted(scored)[:k]


def test_nn_search_identical_candidate(rng):
    cands = _candidates(rng, 20)
    best, dist, _ = nn_search(cands[7].sequence, cands)
    assert best.trace_id == "c007" and dist == 0.0


def test_nn_search_tie_prefers_smaller_trace_id():
    rates = [1.0, 2.0, 3.0, 2.0, 1.0]
    cands = [LabeledTrace(make_seq(rates, trace_id=tid), "w", AnomalyLabel.NORMAL) for tid in ("zeta", "alpha", "mid")]
    best, dist, _ = nn_search([1.0, 2.0, 3.0, 2.0, 2.0], cands)
    assert best.trace_id == "alpha"


@pytest.mark.parametrize("k", [1, 3])
@pytest.mark.parametrize("cost", COSTS)
def test_pruned_search_equals_exhaustive(rng, k, cost):
    cands = _candidates(rng, 60)
    pruned_total = 0
    for _ in range(25):
        query = np.abs(rng.normal(rng.choice([20.0, 50.0, 80.0]), 5, int(rng.integers(12, 25))))
        res = knn_search(query, cands, k, cost)
        want = exhaustive(query, cands, cost, None, Boundary.FREE, k)
        assert [(nb.distance, nb.trace.trace_id) for nb in res.neighbors] == want
        pruned_total += res.pruned_count
    assert pruned_total > 0


def test_search_errors():
    with pytest.raises(ValueError):
        nn_search([1.0, 2.0], [])
