"""Brute-force reference computations, independent of the library's fast paths."""
from collections import Counter
from fractions import Fraction
from itertools import combinations
from math import comb


def naive_counts(n, edges, k):
    es = {frozenset(e) for e in edges}
    counts = Counter()
    for s in combinations(range(n), k):
        counts[sum(1 for a, b in combinations(s, 2) if frozenset((a, b)) in es)] += 1
    return counts


def naive_pmf(n, edges, k):
    total = comb(n, k)
    return {ell: Fraction(c, total) for ell, c in naive_counts(n, edges, k).items()}


def brute_force_extremal(n, k, ell):
    """Double loop over every labeled graph and every k-subset."""
    pairs = list(combinations(range(n), 2))
    best, witness = Fraction(-1), None
    subsets = list(combinations(range(n), k))
    for code in range(1 << len(pairs)):
        es = {pairs[i] for i in range(len(pairs)) if (code >> i) & 1}
        hits = 0
        for s in subsets:
            if sum(1 for p in combinations(s, 2) if p in es) == ell:
                hits += 1
        value = Fraction(hits, len(subsets))
        if value > best:
            best, witness = value, sorted(es)
    return best, witness
