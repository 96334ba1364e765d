"""Seeded Monte Carlo estimation under uniform k-subset sampling.

Trials are cut into fixed-size chunks; chunk ``c`` draws from the Philox
stream ``(seed, c)``.  The chunk size, not the worker count, fixes which
random numbers each trial sees, so results are identical for any number of
workers.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from math import sqrt
from statistics import NormalDist
from typing import Callable, Sequence

import numpy as np

from edgestat.graph import Graph, VertexSet
from edgestat.rng import substream

DEFAULT_CHUNK = 4096
_DENSE_FY_LIMIT = 1024


@dataclass(frozen=True)
class McConfig:
    trials: int
    seed: int
    confidence_level: float = 0.99
    interval: str = "wilson"  # or "clopper_pearson"
    workers: int = 1
    chunk_size: int = DEFAULT_CHUNK

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not 0 < self.confidence_level < 1:
            raise ValueError("confidence_level must lie in (0, 1)")
        if self.interval not in ("wilson", "clopper_pearson"):
            raise ValueError(f"unknown interval {self.interval!r}")
        if self.chunk_size < 1 or self.workers < 1:
            raise ValueError("chunk_size and workers must be positive")


@dataclass(frozen=True)
class Estimate:
    successes: int
    trials: int
    point: float
    ci_low: float
    ci_high: float
    seed: int
    level: float = 0.99

    def to_dict(self) -> dict:
        return asdict(self)


def wilson_ci(successes: int, trials: int, level: float = 0.99) -> tuple[float, float]:
    if trials < 1 or not 0 <= successes <= trials:
        raise ValueError("need 0 <= successes <= trials and trials >= 1")
    z = NormalDist().inv_cdf(0.5 + level / 2)
    p = successes / trials
    z2n = z * z / trials
    center = (p + z2n / 2) / (1 + z2n)
    half = z * sqrt(p * (1 - p) / trials + z2n / (4 * trials)) / (1 + z2n)
    low = 0.0 if successes == 0 else max(0.0, min(p, center - half))
    high = 1.0 if successes == trials else min(1.0, max(p, center + half))
    return low, high


def clopper_pearson_ci(successes: int, trials: int, level: float = 0.99) -> tuple[float, float]:
    from scipy.stats import beta

    alpha = 1 - level
    low = 0.0 if successes == 0 else float(beta.ppf(alpha / 2, successes, trials - successes + 1))
    high = 1.0 if successes == trials else float(beta.ppf(1 - alpha / 2, successes + 1, trials - successes))
    return low, high


def make_estimate(successes: int, trials: int, cfg: McConfig) -> Estimate:
    ci = wilson_ci if cfg.interval == "wilson" else clopper_pearson_ci
    low, high = ci(successes, trials, cfg.confidence_level)
    return Estimate(successes, trials, successes / trials, low, high, cfg.seed, cfg.confidence_level)


# --- sampling ---------------------------------------------------------------

def _fy_draws(n: int, k: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Swap targets for a partial Fisher–Yates pass: column ``i`` lies in ``[i, n)``."""
    lows = np.arange(k)
    if size is None:
        return rng.integers(lows, n)
    return rng.integers(lows, n, size=(size, k))


def _fisher_yates_row(n: int, draws) -> list[int]:
    # sparse virtual array: only touched positions are stored
    pos: dict[int, int] = {}
    out = []
    for i, j in enumerate(draws):
        j = int(j)
        vi = pos.get(i, i)
        vj = pos.get(j, j)
        pos[j] = vi
        out.append(vj)
    return out


def fisher_yates_batch(n: int, draws: np.ndarray) -> np.ndarray:
    """Apply partial Fisher–Yates to every row of ``draws`` (shape ``(B, k)``)."""
    b, k = draws.shape
    if n <= _DENSE_FY_LIMIT:
        perm = np.tile(np.arange(n, dtype=np.int64), (b, 1))
        rows = np.arange(b)
        for i in range(k):
            j = draws[:, i]
            vj = perm[rows, j]
            perm[rows, j] = perm[:, i]
            perm[:, i] = vj
        return perm[:, :k].copy()
    return np.array([_fisher_yates_row(n, r) for r in draws], dtype=np.int64).reshape(b, k)


def sample_ksubset(g: Graph, k: int, rng: np.random.Generator) -> VertexSet:
    """Uniform k-subset via partial Fisher–Yates over ``0..n-1``."""
    if not 0 <= k <= g.n:
        raise ValueError(f"cannot draw {k} of {g.n} vertices")
    if k == 0:
        return VertexSet(0)
    return VertexSet.of(_fisher_yates_row(g.n, _fy_draws(g.n, k, rng)))


@dataclass(frozen=True)
class SplitSample:
    S: VertexSet
    Q: VertexSet

    @property
    def A(self) -> VertexSet:
        return self.S | self.Q


def _split_from_order(order: Sequence[int], k: int, m: int) -> SplitSample:
    return SplitSample(VertexSet.of(order[: k - m]), VertexSet.of(order[k - m:k]))


def sample_split(g: Graph, k: int, m: int, rng: np.random.Generator) -> SplitSample:
    """``S`` uniform of size ``k - m``, then ``Q`` uniform of size ``m`` from the rest.

    Both come from one Fisher–Yates pass, so ``m = 0`` reproduces
    :func:`sample_ksubset` draw for draw.
    """
    if not 0 <= m < k or k > g.n:
        raise ValueError(f"need 0 <= m < k <= n, got m={m}, k={k}, n={g.n}")
    order = _fisher_yates_row(g.n, _fy_draws(g.n, k, rng))
    return _split_from_order(order, k, m)


def chunk_orders(n: int, k: int, seed: int, chunk: int, size: int) -> np.ndarray:
    """Vertex orders (first ``k`` Fisher–Yates picks) for one trial chunk."""
    rng = substream(seed, chunk)
    return fisher_yates_batch(n, _fy_draws(n, k, rng, size))


def chunk_plan(cfg: McConfig) -> list[tuple[int, int]]:
    """``(chunk_index, trials_in_chunk)`` covering ``cfg.trials``."""
    full, rest = divmod(cfg.trials, cfg.chunk_size)
    plan = [(c, cfg.chunk_size) for c in range(full)]
    if rest:
        plan.append((full, rest))
    return plan


def batch_induced_edges(g: Graph, idx: np.ndarray) -> np.ndarray:
    """Induced edge counts for each row of vertex indices ``idx`` (shape ``(B, k)``)."""
    b, k = idx.shape
    if k < 2:
        return np.zeros(b, dtype=np.int64)
    iu, ju = np.triu_indices(k, 1)
    return g.adjacent(idx[:, iu], idx[:, ju]).sum(axis=1, dtype=np.int64)


def estimate_x_equals(g: Graph, k: int, ell: int, cfg: McConfig) -> Estimate:
    """Vectorized ``Pr[X = ell]``; same draws as ``estimate_event`` with ``m = 0``."""
    hits = 0
    for c, size in chunk_plan(cfg):
        x = batch_induced_edges(g, chunk_orders(g.n, k, cfg.seed, c, size))
        hits += int(np.count_nonzero(x == ell))
    return make_estimate(hits, cfg.trials, cfg)


# --- estimation harness -----------------------------------------------------

Predicate = Callable[["object"], bool]


def _run_chunk(args) -> list[int]:
    from edgestat.events import SampleContext

    g, k, params, predicates, seed, chunk, size = args
    orders = chunk_orders(g.n, k, seed, chunk, size)
    counts = [0] * (1 << len(predicates))
    for order in orders.tolist():
        ctx = SampleContext.from_split(g, params, _split_from_order(order, k, params.m))
        code = 0
        for bit, pred in enumerate(predicates):
            if pred(ctx):
                code |= 1 << bit
        counts[code] += 1
    return counts


def joint_counts(g: Graph, k: int, predicates: Sequence[Predicate], cfg: McConfig,
                 params=None) -> list[int]:
    """Counts of every truth pattern of ``predicates`` on shared draws.

    ``result[code]`` counts trials where predicate ``i`` held iff bit ``i`` of
    ``code`` is set.
    """
    from edgestat.events import ContextParams

    if params is None:
        params = ContextParams.for_graph(g, k, ell=1, m=0)
    jobs = [(g, k, params, tuple(predicates), cfg.seed, c, size) for c, size in chunk_plan(cfg)]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            parts = list(pool.map(_run_chunk, jobs))
    else:
        parts = [_run_chunk(j) for j in jobs]
    return [sum(col) for col in zip(*parts)]


def estimate_event(g: Graph, k: int, predicate: Predicate, cfg: McConfig, params=None) -> Estimate:
    """Fraction of trials where ``predicate(ctx)`` holds.

    ``params`` (an :class:`edgestat.events.ContextParams`) fixes ``ell``,
    ``w`` and the split size ``m``; by default ``m = 0`` so each trial is a
    plain uniform k-subset.
    """
    counts = joint_counts(g, k, [predicate], cfg, params)
    return make_estimate(counts[1], cfg.trials, cfg)


@dataclass(frozen=True)
class ContainmentBreakdown:
    e_minus_f: Estimate
    e_and_f: Estimate
    e: Estimate


def containment_breakdown(g: Graph, k: int, event_e: Predicate, event_f: Predicate, cfg: McConfig,
                          params=None) -> ContainmentBreakdown:
    counts = joint_counts(g, k, [event_e, event_f], cfg, params)
    e_only, both = counts[0b01], counts[0b11]
    return ContainmentBreakdown(
        make_estimate(e_only, cfg.trials, cfg),
        make_estimate(both, cfg.trials, cfg),
        make_estimate(e_only + both, cfg.trials, cfg),
    )


def estimate_containment(g: Graph, k: int, event_e: Predicate, event_f: Predicate, cfg: McConfig,
                         params=None) -> Estimate:
    """Estimate ``Pr[E and not F]`` with both events read off the same draws."""
    return containment_breakdown(g, k, event_e, event_f, cfg, params).e_minus_f
