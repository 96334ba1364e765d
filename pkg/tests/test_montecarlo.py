from collections import Counter
from fractions import Fraction
from itertools import combinations
from math import sqrt

import numpy as np
import pytest
from scipy.stats import norm

from edgestat.events import ContextParams, D, E1, X_equals
from edgestat.graph import VertexSet, complete_bipartite, complete_graph, cycle_graph, disjoint_union, empty_graph, gnp
from edgestat.montecarlo import (
    McConfig,
    _fisher_yates_row,
    chunk_orders,
    clopper_pearson_ci,
    containment_breakdown,
    estimate_containment,
    estimate_event,
    estimate_x_equals,
    fisher_yates_batch,
    sample_ksubset,
    sample_split,
    wilson_ci,
)
from edgestat.rng import stream
from edgestat.subset_dist import exact_prob


def wilson_reference(s, n, level):
    z = norm.ppf(1 - (1 - level) / 2)
    p = s / n
    denom = 1 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = (z / denom) * sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    return center - half, center + half


def test_wilson_examples():
    assert wilson_ci(0, 100, 0.99)[0] == 0
    assert wilson_ci(100, 100, 0.99)[1] == 1
    low, high = wilson_ci(50, 100, 0.95)
    assert low == pytest.approx(0.404, abs=1e-3)
    assert high == pytest.approx(0.596, abs=1e-3)
    assert abs((low + high) / 2 - 0.5) < 1e-9


@pytest.mark.parametrize("s,n,level", [(3, 10, 0.9), (50, 100, 0.95), (17, 1000, 0.99), (999, 1000, 0.99)])
def test_wilson_matches_closed_form(s, n, level):
    assert wilson_ci(s, n, level) == pytest.approx(wilson_reference(s, n, level), abs=1e-12)


def test_wilson_rejects_bad_counts():
    with pytest.raises(ValueError):
        wilson_ci(5, 4)
    with pytest.raises(ValueError):
        wilson_ci(0, 0)


def test_clopper_pearson_is_wider_than_wilson():
    w = wilson_ci(7, 50, 0.95)
    cp = clopper_pearson_ci(7, 50, 0.95)
    assert cp[0] <= w[0] and cp[1] >= w[1]
    assert clopper_pearson_ci(0, 10)[0] == 0 and clopper_pearson_ci(10, 10)[1] == 1


def test_mcconfig_validation():
    for bad in (dict(trials=0, seed=1), dict(trials=5, seed=1, confidence_level=1.0),
                dict(trials=5, seed=1, interval="wald")):
        with pytest.raises(ValueError):
            McConfig(**bad)


def test_sample_ksubset_full_and_deterministic():
    g = empty_graph(7)
    assert sample_ksubset(g, 7, stream(1)) == g.vertex_set
    assert sample_ksubset(cycle_graph(5), 3, stream(42)) == sample_ksubset(cycle_graph(5), 3, stream(42))
    with pytest.raises(ValueError):
        sample_ksubset(g, 8, stream(1))


def three_sigma_frequency_check(counter, draws, cells):
    p = 1 / cells
    sigma = sqrt(draws * p * (1 - p))
    assert len(counter) == cells
    for c in counter.values():
        assert abs(c - draws * p) <= 3 * sigma


def test_sample_ksubset_uniform_frequencies():
    g = cycle_graph(5)
    rng = stream(2026)
    freq = Counter(sample_ksubset(g, 3, rng).members for _ in range(60_000))
    three_sigma_frequency_check(freq, 60_000, 10)


def test_sample_split_marginal_uniform_and_disjoint():
    g = cycle_graph(5)
    rng = stream(77)
    freq = Counter()
    for _ in range(60_000):
        sp = sample_split(g, 3, 1, rng)
        assert sp.S.members & sp.Q.members == 0
        freq[sp.A.members] += 1
    three_sigma_frequency_check(freq, 60_000, 10)


def test_split_disjointness_battery():
    g = empty_graph(30)
    orders = np.concatenate([chunk_orders(30, 8, 5, c, 25_000) for c in range(4)])
    assert orders.shape == (100_000, 8)
    assert all(len(set(row)) == 8 for row in orders.tolist())


def test_split_sizes():
    g = empty_graph(12)
    sp = sample_split(g, 6, 5, stream(3))
    assert sp.S.size == 1 and sp.Q.size == 5
    with pytest.raises(ValueError):
        sample_split(g, 6, 6, stream(3))


def test_m_zero_reproduces_ksubset():
    g = empty_graph(40)
    for seed in range(20):
        sp = sample_split(g, 9, 0, stream(seed))
        assert sp.Q.size == 0
        assert sp.A == sample_ksubset(g, 9, stream(seed))


def test_dense_and_sparse_fisher_yates_agree():
    rng = stream(8)
    n, k = 300, 12
    draws = rng.integers(np.arange(k), n, size=(500, k))
    dense = fisher_yates_batch(n, draws)
    sparse = np.array([_fisher_yates_row(n, r) for r in draws])
    assert (dense == sparse).all()


def test_estimate_event_examples():
    est = estimate_event(cycle_graph(5), 3, X_equals(1), McConfig(100_000, seed=9))
    sigma = sqrt(0.25 / 100_000)
    assert abs(est.point - 0.5) <= 3 * sigma
    assert est.ci_low <= est.point <= est.ci_high
    assert estimate_event(empty_graph(100), 10, X_equals(0), McConfig(2000, seed=1)).point == 1
    assert estimate_event(complete_graph(10), 3, X_equals(3), McConfig(2000, seed=1)).point == 1


def test_estimate_event_deterministic_and_worker_independent():
    g = gnp(60, 0.1, seed=4)
    cfg = McConfig(10_000, seed=123, chunk_size=1000)
    a = estimate_event(g, 6, X_equals(1), cfg)
    b = estimate_event(g, 6, X_equals(1), cfg)
    c = estimate_event(g, 6, X_equals(1), McConfig(10_000, seed=123, chunk_size=1000, workers=2))
    assert a == b == c


def test_vectorized_x_estimate_uses_same_draws():
    g = gnp(200, 0.03, seed=6)
    cfg = McConfig(20_000, seed=31)
    assert estimate_x_equals(g, 8, 1, cfg) == estimate_event(g, 8, X_equals(1), cfg)


def test_containment_examples():
    g = cycle_graph(7)
    cfg = McConfig(5000, seed=2)
    assert estimate_containment(g, 3, X_equals(1), X_equals(1), cfg).point == 0
    assert estimate_containment(g, 3, X_equals(1), lambda ctx: True, cfg).point == 0


def test_containment_bipartite_degree_one():
    g = complete_bipartite(10, 190)
    ell = 19
    w = 12 / sqrt(ell)
    params = ContextParams.for_graph(g, 20, ell, w=w, m=0)
    est = estimate_containment(g, 20, X_equals(19), D(1), McConfig(100_000, seed=5), params)
    assert est.point < 0.05


def test_containment_count_identity():
    g = gnp(40, 0.15, seed=9)
    params = ContextParams.for_graph(g, 6, 1)
    br = containment_breakdown(g, 6, X_equals(1), E1, McConfig(8000, seed=3), params)
    assert br.e_minus_f.successes + br.e_and_f.successes == br.e.successes
    direct = estimate_event(g, 6, X_equals(1), McConfig(8000, seed=3), params)
    assert direct.successes == br.e.successes


@pytest.mark.parametrize("graph,k,ell", [
    (cycle_graph(5), 3, 1),
    (disjoint_union(complete_graph(3), complete_graph(2)), 3, 1),
    (cycle_graph(8), 4, 0),
])
def test_wilson_coverage_calibration(graph, k, ell):
    p = float(exact_prob(graph, k, ell))
    covered = 0
    reps = 1000
    for seed in range(reps):
        est = estimate_x_equals(graph, k, ell, McConfig(200, seed=seed))
        covered += est.ci_low <= p <= est.ci_high
    level = 0.99
    sigma = sqrt(reps * level * (1 - level))
    assert covered >= reps * level - 3 * sigma
