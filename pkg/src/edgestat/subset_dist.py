"""Exact law of the induced edge count of a uniform k-subset, and its
maximum over all n-vertex graphs.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from math import comb
from typing import Iterable, Iterator

import numpy as np

from edgestat.graph import Graph, _popcount, complete_graph, empty_graph
from edgestat.graph6 import parse_graph6, write_graph6

DEFAULT_BUDGET = 10_000_000
MAX_EXHAUSTIVE_N = 7


class BudgetExceeded(RuntimeError):
    """Raised when exact enumeration would visit too many subsets."""


# --- revolving door ---------------------------------------------------------

def revolving_door(n: int, k: int, reverse: bool = False) -> Iterator[int]:
    """k-subsets of ``0..n-1`` as bitmasks in revolving-door order.

    Consecutive masks differ by exactly one element leaving and one entering.
    Built from ``R(n, k) = R(n-1, k), reversed(R(n-1, k-1)) + {n-1}``.
    """
    if k < 0 or k > n:
        return
    if k == 0:
        yield 0
        return
    if k == n:
        yield (1 << n) - 1
        return
    top = 1 << (n - 1)
    if not reverse:
        yield from revolving_door(n - 1, k)
        for m in revolving_door(n - 1, k - 1, True):
            yield m | top
    else:
        for m in revolving_door(n - 1, k - 1):
            yield m | top
        yield from revolving_door(n - 1, k, True)


def revolving_door_moves(n: int, k: int) -> Iterator[tuple[int, int]]:
    """``(out, in)`` vertex pairs that walk the revolving-door sequence."""
    it = revolving_door(n, k)
    prev = next(it, None)
    if prev is None:
        return
    for cur in it:
        out = prev & ~cur
        inn = cur & ~prev
        yield out.bit_length() - 1, inn.bit_length() - 1
        prev = cur


# --- exact distribution ------------------------------------------------------

@dataclass(frozen=True)
class DistTable:
    n: int
    k: int
    counts: tuple[int, ...]  # counts[ell] = number of k-subsets inducing ell edges

    @property
    def total(self) -> int:
        return comb(self.n, self.k)

    @property
    def support_max(self) -> int:
        return comb(self.k, 2)

    @property
    def probs(self) -> dict[int, Fraction]:
        t = self.total
        return {ell: Fraction(c, t) for ell, c in enumerate(self.counts) if c}

    def prob(self, ell: int) -> Fraction:
        if 0 <= ell < len(self.counts):
            return Fraction(self.counts[ell], self.total)
        return Fraction(0)

    def mean(self) -> Fraction:
        return Fraction(sum(ell * c for ell, c in enumerate(self.counts)), self.total)


def _check_budget(n: int, k: int, budget: int) -> None:
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    if comb(n, k) > budget:
        raise BudgetExceeded(
            f"C({n},{k}) = {comb(n, k)} subsets exceeds the enumeration budget {budget}; "
            "use a Monte Carlo estimate instead"
        )


def exact_pmf(g: Graph, k: int, budget: int = DEFAULT_BUDGET) -> DistTable:
    """Count edges induced by every k-subset, walking the revolving-door order
    so each step costs two row popcounts."""
    n = g.n
    _check_budget(n, k, budget)
    rows = g.rows
    counts = [0] * (comb(k, 2) + 1)
    mask = (1 << k) - 1  # first set in revolving-door order is {0..k-1}
    e = 0
    for v in range(k):
        e += _popcount(rows[v] & mask)
    e //= 2
    counts[e] += 1
    for out, inn in revolving_door_moves(n, k):
        mask &= ~(1 << out)
        e -= _popcount(rows[out] & mask)
        e += _popcount(rows[inn] & mask)
        mask |= 1 << inn
        counts[e] += 1
    return DistTable(n, k, tuple(counts))


def exact_prob(g: Graph, k: int, ell: int, budget: int = DEFAULT_BUDGET) -> Fraction:
    return exact_pmf(g, k, budget).prob(ell)


# --- extremal search ---------------------------------------------------------

@dataclass(frozen=True)
class ExtremalResult:
    n: int
    k: int
    ell: int
    value: Fraction
    witness: Graph
    graphs_scanned: int
    source: str  # "exhaustive_labeled" or "catalog:<path>"

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "k": self.k,
            "ell": self.ell,
            "value": self.value,
            "witness_graph6": write_graph6(self.witness),
            "graphs_scanned": self.graphs_scanned,
            "source": self.source,
        }


def pair_index(i: int, j: int) -> int:
    """Position of pair ``{i, j}`` in graph6 column-major order."""
    if i > j:
        i, j = j, i
    return j * (j - 1) // 2 + i


def graph_from_code(n: int, code: int) -> Graph:
    """Labeled graph whose bit ``pair_index(i, j)`` of ``code`` marks edge ij."""
    rows = [0] * n
    for j in range(1, n):
        for i in range(j):
            if (code >> pair_index(i, j)) & 1:
                rows[i] |= 1 << j
                rows[j] |= 1 << i
    return Graph._trusted(n, tuple(rows))


def _subset_pair_mask(subset: int, n: int) -> int:
    verts = [v for v in range(n) if (subset >> v) & 1]
    pm = 0
    for a in range(len(verts)):
        for b in range(a + 1, len(verts)):
            pm |= 1 << pair_index(verts[a], verts[b])
    return pm


def _scan_shard(args) -> tuple[int, int, int]:
    """Best (hits, code) over graph codes ``lo..hi-1``; returns (hits, code, scanned)."""
    n, k, ell, lo, hi = args
    dtype = np.uint32 if n * (n - 1) // 2 <= 32 else np.uint64
    codes = np.arange(lo, hi, dtype=dtype)
    hits = np.zeros(hi - lo, dtype=np.int32)
    for subset in revolving_door(n, k):
        pm = dtype(_subset_pair_mask(subset, n))
        hits += np.bitwise_count(codes & pm) == ell
    best = int(np.argmax(hits))
    return int(hits[best]), lo + best, hi - lo


def exhaustive_labeled(n: int, k: int, ell: int, workers: int = 1, shards: int | None = None) -> ExtremalResult:
    """Scan all ``2**C(n,2)`` labeled graphs.

    Graph codes are split into contiguous shards; the merge keeps the
    largest count and, on ties, the earliest code, so the witness is the
    first maximizer in scan order whatever the worker count.
    """
    if n > MAX_EXHAUSTIVE_N:
        raise ValueError(f"exhaustive labeled search supports n <= {MAX_EXHAUSTIVE_N}, got {n}")
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    total = 1 << (n * (n - 1) // 2)
    if shards is None:
        shards = max(1, min(64, total >> 16))
    bounds = [total * s // shards for s in range(shards + 1)]
    jobs = [(n, k, ell, bounds[s], bounds[s + 1]) for s in range(shards) if bounds[s] < bounds[s + 1]]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_scan_shard, jobs))
    else:
        results = [_scan_shard(j) for j in jobs]
    best_hits, best_code = -1, 0
    for hits, code, _ in results:  # shard order: strict > keeps the first
        if hits > best_hits:
            best_hits, best_code = hits, code
    return ExtremalResult(
        n, k, ell,
        Fraction(best_hits, comb(n, k)),
        graph_from_code(n, best_code),
        sum(r[2] for r in results),
        "exhaustive_labeled",
    )


def catalog_search(n: int, k: int, ell: int, lines: Iterable[str], label: str = "catalog") -> ExtremalResult:
    best: Fraction | None = None
    witness = None
    scanned = 0
    for lineno, line in enumerate(lines, 1):
        line = line.strip()
        if not line:
            continue
        g = parse_graph6(line)
        if g.n != n:
            raise ValueError(f"{label}:{lineno}: graph has {g.n} vertices, expected {n}")
        p = exact_prob(g, k, ell)
        scanned += 1
        if best is None or p > best:
            best, witness = p, g
    if best is None:
        raise ValueError(f"{label}: no graphs")
    return ExtremalResult(n, k, ell, best, witness, scanned, f"catalog:{label}")


def max_over_graphs(n: int, k: int, ell: int, source: str = "exhaustive_labeled",
                    workers: int = 1) -> ExtremalResult:
    """``I(n, k, ell)`` with a witness.

    ``source`` is ``"exhaustive_labeled"`` or a path to a graph6 catalog.
    """
    if source == "exhaustive_labeled":
        return exhaustive_labeled(n, k, ell, workers=workers)
    with open(source, encoding="ascii") as fh:
        return catalog_search(n, k, ell, fh, label=os.fspath(source))


def trivial_extremal(n: int, k: int, ell: int) -> ExtremalResult | None:
    """Closed-form answer for ``ell`` in ``{0, C(k,2)}``; ``None`` otherwise."""
    if ell == 0:
        return ExtremalResult(n, k, ell, Fraction(1), empty_graph(n), 1, "closed_form")
    if ell == comb(k, 2):
        return ExtremalResult(n, k, ell, Fraction(1), complete_graph(n), 1, "closed_form")
    return None


@dataclass(frozen=True)
class MonotonicityReport:
    k: int
    ell: int
    values: tuple[tuple[int, Fraction], ...]
    violations: tuple[int, ...]  # n values where I(n) > I(previous n)

    @property
    def ok(self) -> bool:
        return not self.violations


def monotonicity_report(n_list: Iterable[int], k: int, ell: int, source: str = "exhaustive_labeled",
                        workers: int = 1, catalogs: dict[int, str] | None = None) -> MonotonicityReport:
    values = []
    for n in sorted(n_list):
        src = catalogs[n] if catalogs and n in catalogs else source
        values.append((n, max_over_graphs(n, k, ell, src, workers=workers).value))
    violations = tuple(values[i][0] for i in range(1, len(values)) if values[i][1] > values[i - 1][1])
    return MonotonicityReport(k, ell, tuple(values), violations)
