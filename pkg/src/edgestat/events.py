"""Events on a sampled k-set and the exact moment calculations around them.

A :class:`SampleContext` holds one two-phase draw ``A = S ∪ Q`` together
with cached degrees.  Events are small picklable objects (:class:`EventId`)
so they can be shipped to worker processes.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from math import comb
from statistics import median_low

import numpy as np

from edgestat.graph import Graph, HeavyLightSplit, VertexSet, _popcount, heavy_light, induced_edges
from edgestat.montecarlo import (
    SplitSample,
    batch_induced_edges,
    chunk_orders,
    chunk_plan,
)
from edgestat.subset_dist import _check_budget, DEFAULT_BUDGET, revolving_door


def default_w(k: int) -> float:
    """``max(1, ln k)``."""
    return max(1.0, math.log(k)) if k > 1 else 1.0


def split_size(k: int, ell: int, w: float) -> int:
    """``k / (w**(1/3) * sqrt(ell))`` rounded and clamped to ``[1, k-1]``."""
    raw = k / (w ** (1 / 3) * math.sqrt(ell))
    return max(1, min(k - 1, round(raw)))


@dataclass(frozen=True)
class ContextParams:
    k: int
    ell: int
    w: float
    m: int
    split: HeavyLightSplit | None = None
    mu: Fraction | None = None

    @classmethod
    def for_graph(cls, g: Graph, k: int, ell: int, w: float | None = None, m: int | None = None,
                  mu: Fraction | None = None) -> "ContextParams":
        if w is None:
            w = default_w(k)
        if m is None:
            m = split_size(k, ell, w)
        if not 0 <= m < k:
            raise ValueError(f"split size m={m} outside [0, k-1]")
        split = heavy_light(g, k, ell) if ell >= 1 else None
        return cls(k, ell, float(w), m, split, mu)


class SampleContext:
    """One draw ``A = S ∪ Q`` plus lazily cached degree data."""

    def __init__(self, graph: Graph, params: ContextParams, S: VertexSet, Q: VertexSet):
        self.graph = graph
        self.params = params
        self.S = S
        self.Q = Q
        self.A = S | Q
        if self.A.size != params.k:
            raise ValueError(f"|A| = {self.A.size}, expected k = {params.k}")

    @classmethod
    def from_split(cls, g: Graph, params: ContextParams, split: SplitSample) -> "SampleContext":
        return cls(g, params, split.S, split.Q)

    @property
    def k(self) -> int:
        return self.params.k

    @property
    def ell(self) -> int:
        return self.params.ell

    @property
    def w(self) -> float:
        return self.params.w

    @property
    def m(self) -> int:
        return self.params.m

    @cached_property
    def deg_A(self) -> dict[int, int]:
        """``e(v, A)`` for ``v`` in ``A``."""
        mask = self.A.members
        rows = self.graph.rows
        return {v: _popcount(rows[v] & mask) for v in self.A}

    @cached_property
    def deg_S_of_Q(self) -> dict[int, int]:
        """``e(v, S)`` for ``v`` in ``Q``."""
        mask = self.S.members
        rows = self.graph.rows
        return {v: _popcount(rows[v] & mask) for v in self.Q}

    @cached_property
    def x(self) -> int:
        return sum(self.deg_A.values()) // 2

    @cached_property
    def e_S(self) -> int:
        return induced_edges(self.graph, self.S)

    @cached_property
    def e_Q(self) -> int:
        return induced_edges(self.graph, self.Q)

    @cached_property
    def z(self) -> int:
        return light_degree_sum(self)

    @cached_property
    def mode(self) -> tuple[int, int]:
        return _mode(self.deg_A.values())


def _mode(values) -> tuple[int, int]:
    c = Counter(values)
    if not c:
        return 0, 0
    top = max(c.values())
    return min(d for d, n in c.items() if n == top), top


def mode_degree(g: Graph, A) -> tuple[int, int]:
    """Most frequent ``e(v, A)`` over ``v`` in ``A`` (smallest on ties), with its multiplicity."""
    a = A if isinstance(A, VertexSet) else VertexSet.of(A)
    if a.size < 1:
        raise ValueError("A must be nonempty")
    return _mode(_popcount(g.rows[v] & a.members) for v in a)


def light_degree_sum(ctx: SampleContext) -> int:
    split = ctx.params.split
    if split is None:
        raise ValueError("context has no heavy/light split")
    light = split.light.members
    return sum(d for v, d in ctx.deg_A.items() if (light >> v) & 1)


# --- events -------------------------------------------------------------------

EVENT_KINDS = ("D", "Dstar", "E1", "E2", "E3", "E4", "F1", "F2", "F3", "F4", "X")


@dataclass(frozen=True)
class EventId:
    kind: str
    value: int | None = None  # d for D(d), target for X

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event {self.kind!r}")
        if self.kind in ("D", "X") and (self.value is None or self.value < 0):
            raise ValueError(f"{self.kind} needs a nonnegative integer parameter")

    def __call__(self, ctx: SampleContext) -> bool:
        return eval_event(ctx, self)

    def __str__(self) -> str:
        return f"{self.kind}({self.value})" if self.value is not None else self.kind

    @classmethod
    def parse(cls, text: str) -> "EventId":
        text = text.strip()
        if "(" in text:
            kind, arg = text.rstrip(")").split("(", 1)
            return cls(kind.strip(), int(arg))
        return cls(text)


def D(d: int) -> EventId:
    return EventId("D", d)


def X_equals(ell: int) -> EventId:
    return EventId("X", ell)


DSTAR, E1, E2, E3, E4 = EventId("Dstar"), EventId("E1"), EventId("E2"), EventId("E3"), EventId("E4")
F1, F2, F3, F4 = EventId("F1"), EventId("F2"), EventId("F3"), EventId("F4")


def _all_but_same(values, allowed: float) -> bool:
    values = list(values)
    if not values:
        return True
    return len(values) - _mode(values)[1] <= allowed


def eval_event(ctx: SampleContext, ev: EventId) -> bool:
    """Evaluate one event on a draw.

    Counting thresholds (``w*sqrt(ell)``, ``w**(1/3)``, ``w*ell**(5/6)``) are
    compared in floating point with ``<=``; the cube-root bounds in F1/F2 are
    compared exactly on cubes.
    """
    kind = ev.kind
    ell, w = ctx.ell, ctx.w
    if kind == "X":
        return ctx.x == ev.value
    if kind == "D":
        off = sum(1 for d in ctx.deg_A.values() if d != ev.value)
        return off <= w * math.sqrt(ell)
    if kind == "Dstar":
        return ctx.k - ctx.mode[1] <= w * math.sqrt(ell)
    if kind == "E1":
        return ctx.e_Q == 0
    if kind == "E2":
        return ctx.e_S + sum(ctx.deg_S_of_Q.values()) == ell
    if kind == "E3":
        return _all_but_same(ctx.deg_S_of_Q.values(), w ** (1 / 3))
    if kind == "E4":
        return _all_but_same((ctx.deg_A[v] for v in ctx.Q), w ** (1 / 3))
    split = ctx.params.split
    if kind == "F1":
        light = split.light.members
        return all(d ** 3 <= 8 * ell for v, d in ctx.deg_A.items() if (light >> v) & 1)
    if kind == "F2":
        heavy = split.heavy.members
        return all(8 * d ** 3 >= ell for v, d in ctx.deg_A.items() if (heavy >> v) & 1)
    if kind == "F3":
        if ctx.params.mu is None:
            raise ValueError("F3 needs mu; build ContextParams with mu=exact_moments(...).mu")
        return abs(ctx.x - ctx.z - ctx.params.mu) <= w * ell ** (5 / 6)
    if kind == "F4":
        return abs(ctx.z - ctx.k * ctx.mode[0]) <= 3 * w * ell ** (5 / 6)
    raise AssertionError(kind)


def case_diagnostic(ctx: SampleContext) -> dict:
    """Which branch of the median-degree dichotomy the exposed ``S`` falls in.

    Case 1: at most ``w**(1/4) * n / m`` outside vertices have ``e(v, S)``
    different from the median; Case 2 otherwise.
    """
    g = ctx.graph
    d_med = median_degree_into(g, ctx.S)
    mask = ctx.S.members
    off = sum(1 for v in range(g.n) if not (mask >> v) & 1 and _popcount(g.rows[v] & mask) != d_med)
    threshold = ctx.w ** 0.25 * g.n / max(ctx.m, 1)
    return {"d_med": d_med, "off_median": off, "threshold": threshold, "case": 1 if off <= threshold else 2}


def median_degree_into(g: Graph, S) -> int:
    """Lower median of ``e(v, S)`` over ``v`` outside ``S``."""
    s = S if isinstance(S, VertexSet) else VertexSet.of(S)
    outside = [v for v in range(g.n) if v not in s]
    if not outside:
        raise ValueError("S covers every vertex")
    return median_low(_popcount(g.rows[v] & s.members) for v in outside)


# --- moments -------------------------------------------------------------------

RELATIONS = ("identical", "share_one", "disjoint")


def edge_indicator_moments(n: int, k: int, relation: str) -> tuple[Fraction, Fraction]:
    """``(E[X_e], Cov[X_e, X_f])`` for edges ``e, f`` in the given relation.

    ``X_e`` indicates that both ends of ``e`` land in a uniform k-subset.
    """
    if relation not in RELATIONS:
        raise ValueError(f"relation must be one of {RELATIONS}")
    need = {"identical": 2, "share_one": 3, "disjoint": 4}[relation]
    if n < need:
        raise ValueError(f"relation {relation!r} needs n >= {need}")
    if not 2 <= k <= n:
        raise ValueError(f"need 2 <= k <= n, got k={k}")
    total = comb(n, k)
    mean = Fraction(comb(n - 2, k - 2), total)
    if relation == "identical":
        joint = mean
    elif relation == "share_one":
        joint = Fraction(comb(n - 3, k - 3), total) if k >= 3 else Fraction(0)
    else:
        joint = Fraction(comb(n - 4, k - 4), total) if k >= 4 else Fraction(0)
    return mean, joint - mean * mean


@dataclass(frozen=True)
class MomentReport:
    mu1: Fraction
    mu2: Fraction
    heavy_edges: int
    light_edges: int

    @property
    def mu(self) -> Fraction:
        return self.mu1 - self.mu2


def exact_moments(g: Graph, k: int, ell: int) -> MomentReport:
    """``E[H]`` and ``E[L]`` for heavy-heavy and light-light induced edges."""
    split = heavy_light(g, k, ell)
    eh = induced_edges(g, split.heavy)
    el = induced_edges(g, split.light)
    n = g.n
    factor = Fraction(k * (k - 1), n * (n - 1)) if n > 1 else Fraction(0)
    return MomentReport(eh * factor, el * factor, eh, el)


@dataclass(frozen=True)
class VarianceReport:
    var_diff: Fraction  # Var[H - L]
    var_h: Fraction
    var_l: Fraction
    bound: float  # 30 * ell**(5/3)

    @property
    def bound_holds(self) -> bool:
        return self.var_diff <= self.bound

    @property
    def decomposition_holds(self) -> bool:
        return self.var_diff <= 2 * self.var_h + 2 * self.var_l


def _variance(sum1: int, sum2: int, total: int) -> Fraction:
    mean = Fraction(sum1, total)
    return Fraction(sum2, total) - mean * mean


def variance_x_minus_z(g: Graph, k: int, ell: int, budget: int = DEFAULT_BUDGET) -> VarianceReport:
    """Exact ``Var[X - Z] = Var[H - L]`` by enumerating all k-subsets."""
    _check_budget(g.n, k, budget)
    split = heavy_light(g, k, ell)
    hv, lt = split.heavy.members, split.light.members
    sums = [0] * 6  # H, H^2, L, L^2, H-L, (H-L)^2
    total = 0
    for mask in revolving_door(g.n, k):
        h = induced_edges(g, mask & hv)
        l = induced_edges(g, mask & lt)
        sums[0] += h
        sums[1] += h * h
        sums[2] += l
        sums[3] += l * l
        sums[4] += h - l
        sums[5] += (h - l) ** 2
        total += 1
    return VarianceReport(
        _variance(sums[4], sums[5], total),
        _variance(sums[0], sums[1], total),
        _variance(sums[2], sums[3], total),
        30 * ell ** (5 / 3),
    )


def heavy_count_report(g: Graph, k: int, ell: int) -> dict:
    """Number of heavy vertices against ``5 * ell**(2/3) * n / k``."""
    split = heavy_light(g, k, ell)
    limit = 5 * ell ** (2 / 3) * g.n / k
    return {"heavy": split.heavy.size, "limit": limit, "exceeds": split.heavy.size > limit}


@dataclass(frozen=True)
class ModePrediction:
    d: int
    center: Fraction
    half_width: float
    ambiguous: bool


def predicted_mode_degree(g: Graph, k: int, ell: int, w: float | None = None) -> ModePrediction:
    """Nearest integer to ``(ell - mu) / k`` (ties go down) with window ``(w/k) * ell**(5/6)``.

    The window is flagged ambiguous once its width reaches 1, since it can
    then hold two integers.
    """
    if w is None:
        w = default_w(k)
    mu = exact_moments(g, k, ell).mu
    center = (ell - mu) / k
    d = math.ceil(center - Fraction(1, 2))
    half = w / k * ell ** (5 / 6)
    return ModePrediction(d, center, half, 2 * half >= 1)


# --- hypergeometric and Poisson -------------------------------------------------

@dataclass(frozen=True)
class HypergeomSpec:
    N: int
    t: int
    m: int

    def __post_init__(self):
        if not (0 <= self.t <= self.N and 0 <= self.m <= self.N):
            raise ValueError("need 0 <= t <= N and 0 <= m <= N")

    @property
    def mean(self) -> Fraction:
        return Fraction(self.m * self.t, self.N) if self.N else Fraction(0)

    @property
    def variance(self) -> Fraction:
        N, t, m = self.N, self.t, self.m
        if N <= 1:
            return Fraction(0)
        return Fraction(m * t * (N - t) * (N - m), N * N * (N - 1))


@dataclass(frozen=True)
class HypergeomPmf:
    lo: int
    probs: tuple[Fraction, ...]  # probs[i - lo] = Pr[I = i]

    @property
    def argmax(self) -> int:
        best = max(self.probs)
        return self.lo + self.probs.index(best)

    @property
    def max(self) -> Fraction:
        return max(self.probs)

    def __getitem__(self, i: int) -> Fraction:
        j = i - self.lo
        return self.probs[j] if 0 <= j < len(self.probs) else Fraction(0)


def hypergeom_pmf(spec: HypergeomSpec) -> HypergeomPmf:
    """Law of the number of special items among ``m`` drawn without replacement."""
    N, t, m = spec.N, spec.t, spec.m
    lo, hi = max(0, m - (N - t)), min(m, t)
    total = comb(N, m)
    return HypergeomPmf(lo, tuple(Fraction(comb(t, i) * comb(N - t, m - i), total) for i in range(lo, hi + 1)))


def poisson_mode_bound(d: int) -> float:
    """``d**d * e**-d / d!``, the largest ``Pr[Poisson(lam) = d]`` over ``lam``."""
    if d < 1:
        raise ValueError("d must be >= 1")
    return math.exp(d * math.log(d) - d - math.lgamma(d + 1))


def poisson_point(lam: float, d: int) -> float:
    return math.exp(d * math.log(lam) - lam - math.lgamma(d + 1))


def poisson_mode_is_optimal(d: int, eps: float = 1e-3) -> bool:
    """``lam = d`` beats ``lam = d ± eps`` for ``Pr[Poisson(lam) = d]``."""
    peak = poisson_mode_bound(d)
    return poisson_point(d - eps, d) <= peak and poisson_point(d + eps, d) <= peak


# --- conditional statistics (vectorized) ------------------------------------------

@dataclass(frozen=True)
class ConditionalMean:
    mean: float
    std: float
    samples: int
    draws: int
    expected: Fraction

    @property
    def sigma_of_mean(self) -> float:
        return self.std / math.sqrt(self.samples) if self.samples else float("inf")

    @property
    def z_score(self) -> float:
        return (self.mean - float(self.expected)) / self.sigma_of_mean


def conditional_eq_mean(g: Graph, k: int, ell: int, seed: int, target: int, m: int | None = None,
                        w: float | None = None, chunk_size: int = 1 << 14,
                        max_draws: int = 10 ** 8) -> ConditionalMean:
    """Mean of ``e(Q)`` over split draws with ``X = ell``, until ``target`` such draws.

    Draw ``c`` of the chunk sequence uses the same streams as the per-trial
    harness, so the conditioned draws are a prefix of one fixed sequence.
    """
    if w is None:
        w = default_w(k)
    if m is None:
        m = split_size(k, ell, w)
    vals: list[np.ndarray] = []
    got = 0
    draws = 0
    chunk = 0
    while got < target:
        if draws >= max_draws:
            raise RuntimeError(f"only {got} conditioned samples after {draws} draws")
        orders = chunk_orders(g.n, k, seed, chunk, chunk_size)
        x = batch_induced_edges(g, orders)
        keep = np.flatnonzero(x == ell)
        if got + keep.size >= target:
            keep = keep[: target - got]
            draws += int(keep[-1]) + 1 if keep.size else chunk_size
        else:
            draws += chunk_size
        vals.append(batch_induced_edges(g, orders[keep][:, k - m:]))
        got += keep.size
        chunk += 1
    eq = np.concatenate(vals).astype(np.float64)
    expected = ell * Fraction(comb(m, 2), comb(k, 2))
    return ConditionalMean(float(eq.mean()), float(eq.std(ddof=1)), int(eq.size), draws, expected)

