"""The black/green sequential coloring process and its geometric-sum law.

Vertices ``v_1, v_2, ...`` are drawn uniformly with replacement.  ``v_1`` is
black; later ``v_i`` is green iff ``v_i`` together with the black vertices so
far spans at least ``ell`` edges.  The run stops at the (k-1)-th black vertex
and ``Y`` counts the greens before it.

Given the black vertices ``u_1, ..., u_{k-1}``, the number of greens between
``u_i`` and ``u_{i+1}`` is geometric, ``Pr[g] = p_i**g * (1 - p_i)``, where
``p_i`` is the fraction of vertices that would be green after ``u_i``.  With
this failures-before-success convention ``Pr[Y = 1]`` is
``sum_i p_i * prod_j (1 - p_j)``.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from edgestat.graph import Graph, _popcount, induced_edges
from edgestat.montecarlo import Estimate, McConfig, chunk_plan, make_estimate
from edgestat.rng import substream

DEFAULT_STEP_CAP = 10 ** 6
EXACT_PARAM_LIMIT = 64
_BLOCK = 64


class _Draws:
    """Buffered uniform vertex draws from one generator."""

    def __init__(self, n: int, rng: np.random.Generator):
        self.n = n
        self.rng = rng
        self.buf: list[int] = []
        self.pos = 0

    def next(self) -> int:
        if self.pos == len(self.buf):
            self.buf = self.rng.integers(0, self.n, size=_BLOCK).tolist()
            self.pos = 0
        v = self.buf[self.pos]
        self.pos += 1
        return v


class _Colorer:
    """Incremental coloring state: the set of black vertices and the edges it spans."""

    __slots__ = ("rows", "ell", "mask", "e", "blacks")

    def __init__(self, g: Graph, ell: int):
        self.rows = g.rows
        self.ell = ell
        self.mask = 0
        self.e = 0
        self.blacks = 0

    def closes(self, v: int) -> int:
        """Edges spanned by ``v`` and the current black set."""
        if (self.mask >> v) & 1:
            return self.e
        return self.e + _popcount(self.rows[v] & self.mask)

    def is_green(self, v: int) -> bool:
        return self.blacks > 0 and self.closes(v) >= self.ell

    def push(self, v: int) -> bool:
        """Color ``v``; returns True for black."""
        if self.is_green(v):
            return False
        self.e = self.closes(v)
        self.mask |= 1 << v
        self.blacks += 1
        return True


@dataclass
class ProcessTrace:
    sequence: list[int]
    colors: list[str]  # "black" / "green"
    stop_index: int | None  # 1-based position of the (k-1)-th black; None when diverged
    y_value: int | None
    diverged: bool = False

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def blacks(self) -> list[int]:
        return [v for v, c in zip(self.sequence, self.colors) if c == "black"]


def recolor(g: Graph, sequence: Sequence[int], ell: int) -> list[str]:
    """Colors implied by the rule for a given vertex sequence, computed from scratch."""
    colors = []
    black: list[int] = []
    for v in sequence:
        if not black:
            colors.append("black")
            black.append(v)
            continue
        if induced_edges(g, set(black) | {v}) >= ell:
            colors.append("green")
        else:
            colors.append("black")
            black.append(v)
    return colors


def run_coloring(g: Graph, k: int, ell: int, rng: np.random.Generator,
                 step_cap: int = DEFAULT_STEP_CAP) -> ProcessTrace:
    """Run the process until ``k - 1`` black vertices appear or ``step_cap`` draws."""
    if k < 2 or ell < 1 or step_cap < k:
        raise ValueError("need k >= 2, ell >= 1, step_cap >= k")
    draws = _Draws(g.n, rng)
    col = _Colorer(g, ell)
    seq, colors = [], []
    greens = 0
    while len(seq) < step_cap:
        v = draws.next()
        seq.append(v)
        if col.push(v):
            colors.append("black")
            if col.blacks == k - 1:
                return ProcessTrace(seq, colors, len(seq), greens)
        else:
            colors.append("green")
            greens += 1
    return ProcessTrace(seq, colors, None, None, diverged=True)


def run_coloring_given_prefix(g: Graph, prefix: Sequence[int], ell: int, rng: np.random.Generator,
                              step_cap: int = DEFAULT_STEP_CAP) -> int:
    """``Y`` from one run conditioned on the black vertices being ``prefix``.

    Each gap between consecutive blacks is redrawn until it ends on the
    prescribed black vertex.  A gap's green count is independent of which
    vertex ends it, so this samples the conditional law exactly.
    """
    _check_prefix(g, prefix, ell)
    draws = _Draws(g.n, rng)
    col = _Colorer(g, ell)
    col.push(prefix[0])
    y = 0
    steps = 0
    for target in prefix[1:]:
        gap = 0
        while True:
            v = draws.next()
            steps += 1
            if steps > step_cap:
                raise RuntimeError("step cap reached while conditioning")
            if col.is_green(v):
                gap += 1
            elif v == target:
                col.push(v)
                y += gap
                break
            else:
                gap = 0
    return y


def _check_prefix(g: Graph, prefix: Sequence[int], ell: int) -> None:
    if len(prefix) < 1:
        raise ValueError("empty prefix")
    col = _Colorer(g, ell)
    col.push(prefix[0])
    for i, u in enumerate(prefix[1:], 2):
        if col.is_green(u):
            raise ValueError(f"prefix vertex {u} at position {i} would be green, so the prefix has probability 0")
        col.push(u)


# --- geometric-sum law ---------------------------------------------------------

@dataclass(frozen=True)
class GeomParams:
    p: tuple[Fraction, ...]
    prefix: tuple[int, ...]


def geometric_params(g: Graph, prefix: Sequence[int], ell: int) -> GeomParams:
    """``p_i = |{v : e({u_1..u_i, v}) >= ell}| / n`` for ``i = 1..len(prefix)-1``."""
    if len(prefix) < 1:
        raise ValueError("prefix must be nonempty")
    ps = []
    for i in range(1, len(prefix)):
        base = set(prefix[:i])
        count = sum(1 for v in range(g.n) if induced_edges(g, base | {v}) >= ell)
        ps.append(Fraction(count, g.n))
    return GeomParams(tuple(ps), tuple(prefix))


def y1_prob(params: GeomParams | Sequence) -> Fraction | float:
    """``Pr[Y = 1 | prefix] = sum_i p_i * prod_j (1 - p_j)``.

    Exact for up to 64 parameters; beyond that a float with relative error
    of a few ulps per parameter.
    """
    p = params.p if isinstance(params, GeomParams) else tuple(params)
    if len(p) <= EXACT_PARAM_LIMIT:
        p = [Fraction(x) for x in p]
        prod = Fraction(1)
        for x in p:
            prod *= 1 - x
        return sum(p, Fraction(0)) * prod
    pf = [float(x) for x in p]
    if any(x >= 1 for x in pf):
        return 0.0
    return math.fsum(pf) * math.exp(math.fsum(math.log1p(-x) for x in pf))


@dataclass(frozen=True)
class YPmf:
    probs: tuple[Fraction, ...]  # Pr[Y = y] for y = 0..y_max
    tail: Fraction  # Pr[Y > y_max]

    def __getitem__(self, y: int) -> Fraction:
        return self.probs[y]


def y_pmf(params: GeomParams | Sequence, y_max: int) -> YPmf:
    """Exact truncated law of ``geom(p_1) + ... + geom(p_{k-2})``."""
    p = params.p if isinstance(params, GeomParams) else tuple(params)
    if y_max < 0:
        raise ValueError("y_max must be >= 0")
    p = [Fraction(x) for x in p]
    if any(x >= 1 for x in p):
        raise ValueError("a parameter equals 1: the sum diverges")
    dist = [Fraction(1)] + [Fraction(0)] * y_max
    for x in p:
        q = 1 - x
        g = [q]
        for _ in range(y_max):
            g.append(g[-1] * x)
        dist = [sum(dist[a] * g[y - a] for a in range(y + 1)) for y in range(y_max + 1)]
    return YPmf(tuple(dist), 1 - sum(dist, Fraction(0)))


def sample_y_given_prefix(g: Graph, prefix: Sequence[int], ell: int, trials: int, seed: int) -> np.ndarray:
    """Vectorized :func:`run_coloring_given_prefix` over ``trials`` independent runs.

    Green sets per stage come from the coloring rule applied to the black
    prefix; every draw is a uniform vertex.
    """
    _check_prefix(g, prefix, ell)
    rng = substream(seed, 0)
    col = _Colorer(g, ell)
    col.push(prefix[0])
    y = np.zeros(trials, dtype=np.int64)
    for target in prefix[1:]:
        green = np.array([col.is_green(v) for v in range(g.n)])
        gap = np.zeros(trials, dtype=np.int64)
        active = np.arange(trials)
        while active.size:
            v = rng.integers(0, g.n, size=active.size)
            is_g = green[v]
            gap[active[is_g]] += 1
            hit = ~is_g & (v == target)
            gap[active[~is_g & ~hit]] = 0
            active = active[~hit]
        y += gap
        col.push(target)
    return y


# --- coupling --------------------------------------------------------------------

@dataclass(frozen=True)
class CouplingReport:
    pr_x_tilde: Estimate  # Pr[e({v_1..v_k}) = ell]
    pr_both: Estimate  # Pr[e({v_1..v_k}) = e({v_1..v_{k-1}}) = ell]
    pr_y1: Estimate
    pr_distinct: Estimate
    implication_violations: int  # on sequences with v_1..v_k distinct
    repeat_exceptions: int  # failures of the implication explained by a repeated vertex
    diverged: int

    def to_dict(self) -> dict:
        return {
            "pr_x_tilde": self.pr_x_tilde.to_dict(),
            "pr_both": self.pr_both.to_dict(),
            "pr_y1": self.pr_y1.to_dict(),
            "pr_distinct": self.pr_distinct.to_dict(),
            "implication_violations": self.implication_violations,
            "repeat_exceptions": self.repeat_exceptions,
            "diverged": self.diverged,
        }


def _coupling_chunk(args) -> list[int]:
    g, k, ell, seed, chunk, size, step_cap = args
    rows = g.rows
    draws = _Draws(g.n, substream(seed, chunk))
    tally = [0] * 7  # x_tilde, both, y1, distinct, violations, repeat_exceptions, diverged
    for _ in range(size):
        col = _Colorer(g, ell)
        seq_mask = 0
        e_seq = 0
        e_prev = 0
        distinct = True
        greens = 0
        y = None
        steps = 0
        while True:
            v = draws.next()
            steps += 1
            if steps <= k:
                if (seq_mask >> v) & 1:
                    distinct = False
                else:
                    e_seq += _popcount(rows[v] & seq_mask)
                    seq_mask |= 1 << v
                if steps == k - 1:
                    e_prev = e_seq
            if y is None:
                if col.push(v):
                    if col.blacks == k - 1:
                        y = greens
                else:
                    greens += 1
            if steps >= k and y is not None:
                break
            if steps >= step_cap:
                break
        both = e_seq == ell and e_prev == ell
        tally[0] += e_seq == ell
        tally[1] += both
        tally[2] += y == 1
        tally[3] += distinct
        if both and y != 1:
            tally[4 if distinct else 5] += 1
        tally[6] += y is None
    return tally


def coupling_report(g: Graph, k: int, ell: int, cfg: McConfig, step_cap: int = DEFAULT_STEP_CAP) -> CouplingReport:
    """Estimate the coupling probabilities on shared with-replacement sequences.

    Every trial draws one sequence; ``X~_k`` and ``X~_{k-1}`` read its first
    ``k`` and ``k-1`` entries and ``Y`` runs the process on the same draws.
    """
    if k < 2 or ell < 1:
        raise ValueError("need k >= 2 and ell >= 1")
    if g.n <= k * k:
        warnings.warn(f"n={g.n} is not large compared with k^2={k * k}; repeated draws will be common")
    jobs = [(g, k, ell, cfg.seed, c, size, step_cap) for c, size in chunk_plan(cfg)]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            parts = list(pool.map(_coupling_chunk, jobs))
    else:
        parts = [_coupling_chunk(j) for j in jobs]
    t = [sum(col) for col in zip(*parts)]
    est = lambda c: make_estimate(c, cfg.trials, cfg)  # noqa: E731
    return CouplingReport(est(t[0]), est(t[1]), est(t[2]), est(t[3]), t[4], t[5], t[6])
