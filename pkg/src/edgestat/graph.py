"""Simple undirected graphs stored as bitset adjacency rows.

Row ``v`` is a Python ``int`` whose bit ``u`` is set iff ``uv`` is an edge.
Subset edge counts reduce to AND + popcount on these rows.  A packed
``numpy`` bit matrix is built lazily for the vectorized Monte Carlo paths.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from edgestat.rng import stream


def _popcount(x: int) -> int:
    return x.bit_count()


@dataclass(frozen=True)
class VertexSet:
    """Immutable vertex subset; ``members`` is a bitmask over ``0..n-1``."""

    members: int
    size: int = field(init=False)

    def __post_init__(self):
        if self.members < 0:
            raise ValueError("negative bitmask")
        object.__setattr__(self, "size", _popcount(self.members))

    @classmethod
    def of(cls, vertices: Iterable[int]) -> "VertexSet":
        mask = 0
        for v in vertices:
            if v < 0:
                raise ValueError(f"negative vertex {v}")
            mask |= 1 << v
        return cls(mask)

    def __iter__(self):
        mask = self.members
        while mask:
            low = mask & -mask
            yield low.bit_length() - 1
            mask ^= low

    def __contains__(self, v: int) -> bool:
        return v >= 0 and (self.members >> v) & 1 == 1

    def __len__(self) -> int:
        return self.size

    def vertices(self) -> list[int]:
        return list(self)

    def __or__(self, other: "VertexSet") -> "VertexSet":
        return VertexSet(self.members | other.members)

    def __and__(self, other: "VertexSet") -> "VertexSet":
        return VertexSet(self.members & other.members)

    def __sub__(self, other: "VertexSet") -> "VertexSet":
        return VertexSet(self.members & ~other.members)


def _as_mask(s) -> int:
    if isinstance(s, VertexSet):
        return s.members
    if isinstance(s, int):
        return s
    return VertexSet.of(s).members


class Graph:
    """Immutable simple graph on vertices ``0..n-1``."""

    __slots__ = ("n", "rows", "_edge_count", "_packed", "_hash")

    def __init__(self, n: int, rows: Sequence[int]):
        if n < 0:
            raise ValueError("vertex count must be nonnegative")
        if len(rows) != n:
            raise ValueError(f"expected {n} rows, got {len(rows)}")
        full = (1 << n) - 1
        rows = tuple(int(r) for r in rows)
        for v, r in enumerate(rows):
            if r & ~full:
                raise ValueError(f"row {v} has bits outside 0..{n - 1}")
            if (r >> v) & 1:
                raise ValueError(f"loop at vertex {v}")
        for v, r in enumerate(rows):
            for u in VertexSet(r):
                if not (rows[u] >> v) & 1:
                    raise ValueError(f"asymmetric adjacency at ({v}, {u})")
        self.n = n
        self.rows = rows
        self._edge_count = None
        self._packed = None
        self._hash = None

    # Constructors that bypass validation go through here.
    @classmethod
    def _trusted(cls, n: int, rows: tuple[int, ...]) -> "Graph":
        g = cls.__new__(cls)
        g.n = n
        g.rows = rows
        g._edge_count = None
        g._packed = None
        g._hash = None
        return g

    def __eq__(self, other) -> bool:
        return isinstance(other, Graph) and self.n == other.n and self.rows == other.rows

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self.n, self.rows))
        return self._hash

    def __repr__(self) -> str:
        return f"Graph(n={self.n}, edges={self.edge_count})"

    @property
    def edge_count(self) -> int:
        if self._edge_count is None:
            self._edge_count = sum(_popcount(r) for r in self.rows) // 2
        return self._edge_count

    @property
    def vertex_set(self) -> VertexSet:
        return VertexSet((1 << self.n) - 1)

    def degree(self, v: int) -> int:
        return _popcount(self.rows[v])

    def degrees(self) -> list[int]:
        return [_popcount(r) for r in self.rows]

    def has_edge(self, u: int, v: int) -> bool:
        return (self.rows[u] >> v) & 1 == 1

    def edges(self) -> list[tuple[int, int]]:
        out = []
        for u, r in enumerate(self.rows):
            r >>= u + 1
            v = u + 1
            while r:
                if r & 1:
                    out.append((u, v))
                r >>= 1
                v += 1
        return out

    def check_invariants(self) -> None:
        for u, r in enumerate(self.rows):
            if (r >> u) & 1:
                raise AssertionError(f"loop at {u}")
            for v in VertexSet(r):
                if not (self.rows[v] >> u) & 1:
                    raise AssertionError(f"asymmetric pair ({u}, {v})")

    def packed(self) -> np.ndarray:
        """``(n, ceil(n/8))`` uint8 matrix, little bit order within each byte."""
        if self._packed is None:
            width = (self.n + 7) // 8
            buf = b"".join(r.to_bytes(width, "little") for r in self.rows)
            self._packed = np.frombuffer(buf, dtype=np.uint8).reshape(self.n, width)
        return self._packed

    def adjacent(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Vectorized adjacency lookup for index arrays of equal shape."""
        p = self.packed()
        return (p[u, v >> 3] >> (v & 7).astype(np.uint8)) & 1

    def to_bytes(self) -> bytes:
        width = (self.n + 7) // 8
        return self.n.to_bytes(4, "little") + b"".join(
            r.to_bytes(width, "little") for r in self.rows
        )


def graph_from_edges(n: int, edges: Iterable[tuple[int, int]]) -> Graph:
    rows = [0] * n
    for u, v in edges:
        if not (0 <= u < n and 0 <= v < n):
            raise ValueError(f"edge ({u}, {v}) has an endpoint outside 0..{n - 1}")
        if u == v:
            raise ValueError(f"loop at vertex {u}")
        rows[u] |= 1 << v
        rows[v] |= 1 << u
    return Graph._trusted(n, tuple(rows))


def _graph_from_edge_arrays(n: int, us: np.ndarray, vs: np.ndarray) -> Graph:
    width = (n + 7) // 8
    packed = np.zeros((n, width), dtype=np.uint8)
    us = us.astype(np.int64)
    vs = vs.astype(np.int64)
    for a, b in ((us, vs), (vs, us)):
        np.bitwise_or.at(packed, (a, b >> 3), (1 << (b & 7)).astype(np.uint8))
    rows = tuple(int.from_bytes(packed[v].tobytes(), "little") for v in range(n))
    return Graph._trusted(n, rows)


def complement(g: Graph) -> Graph:
    full = (1 << g.n) - 1
    return Graph._trusted(g.n, tuple(full & ~r & ~(1 << v) for v, r in enumerate(g.rows)))


def disjoint_union(*graphs: Graph) -> Graph:
    rows = []
    offset = 0
    for h in graphs:
        rows.extend(r << offset for r in h.rows)
        offset += h.n
    return Graph._trusted(offset, tuple(rows))


def induced_edges(g: Graph, s) -> int:
    """Number of edges of ``g`` with both endpoints in ``s``."""
    mask = _as_mask(s)
    total = 0
    m = mask
    rows = g.rows
    while m:
        low = m & -m
        v = low.bit_length() - 1
        total += _popcount(rows[v] & mask)
        m ^= low
    return total // 2


def degree_into(g: Graph, v: int, s) -> int:
    """``|N(v) ∩ s|``; ``v`` itself never counts since there are no loops."""
    return _popcount(g.rows[v] & _as_mask(s))


def add_delta(g: Graph, mask: int, v: int) -> int:
    """Edge-count change when ``v`` (not in ``mask``) joins the subset."""
    return _popcount(g.rows[v] & mask)


def remove_delta(g: Graph, mask: int, v: int) -> int:
    """Edge-count change (to subtract) when ``v`` leaves the subset."""
    return _popcount(g.rows[v] & mask & ~(1 << v))


# --- families -------------------------------------------------------------

@dataclass(frozen=True)
class FamilySpec:
    """Declarative description of a graph family member.

    ``variant`` is one of ``empty``, ``complete``, ``complete_bipartite``,
    ``gnp``, ``cycle``, ``union_of``.
    """

    variant: str
    n: int = 0
    a: int = 0
    b: int = 0
    p: float = 0.0
    seed: int | None = None
    parts: tuple["FamilySpec", ...] = ()

    def __post_init__(self):
        v = self.variant
        if v in ("empty", "complete", "cycle", "gnp") and self.n <= 0:
            raise ValueError(f"{v} requires n > 0")
        if v == "cycle" and self.n < 3:
            raise ValueError("cycle requires n >= 3")
        if v == "complete_bipartite" and (self.a <= 0 or self.b <= 0):
            raise ValueError("complete_bipartite requires positive part sizes")
        if v == "gnp":
            if not 0 <= self.p <= 1:
                raise ValueError(f"p={self.p} outside [0, 1]")
            if self.seed is None:
                raise ValueError("gnp requires an explicit seed")
        if v == "union_of" and not self.parts:
            raise ValueError("union_of requires at least one part")
        if v not in ("empty", "complete", "cycle", "gnp", "complete_bipartite", "union_of"):
            raise ValueError(f"unknown family variant {v!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "FamilySpec":
        d = dict(d)
        parts = tuple(cls.from_dict(x) for x in d.pop("parts", ()))
        return cls(parts=parts, **d)

    def to_dict(self) -> dict:
        out = {"variant": self.variant}
        if self.variant in ("empty", "complete", "cycle", "gnp"):
            out["n"] = self.n
        if self.variant == "complete_bipartite":
            out["a"], out["b"] = self.a, self.b
        if self.variant == "gnp":
            out["p"], out["seed"] = self.p, self.seed
        if self.variant == "union_of":
            out["parts"] = [x.to_dict() for x in self.parts]
        return out


def empty_graph(n: int) -> Graph:
    return Graph._trusted(n, (0,) * n)


def complete_graph(n: int) -> Graph:
    full = (1 << n) - 1
    return Graph._trusted(n, tuple(full ^ (1 << v) for v in range(n)))


def cycle_graph(n: int) -> Graph:
    return graph_from_edges(n, [(i, (i + 1) % n) for i in range(n)])


def complete_bipartite(a: int, b: int) -> Graph:
    """Parts ``0..a-1`` and ``a..a+b-1``."""
    left = (1 << a) - 1
    right = ((1 << b) - 1) << a
    return Graph._trusted(a + b, (right,) * a + (left,) * b)


def gnp(n: int, p: float, seed: int) -> Graph:
    """Erdős–Rényi ``G(n, p)``.

    Row ``u`` decides the pairs ``(u, v)``, ``v > u``, from Philox stream
    ``(seed, u)``: uniform doubles compared against ``p``.  The result depends
    only on ``(n, p, seed)``.
    """
    if not 0 <= p <= 1:
        raise ValueError(f"p={p} outside [0, 1]")
    if p == 0:
        return empty_graph(n)
    if p == 1:
        return complete_graph(n)
    us, vs = [], []
    for u in range(n - 1):
        hits = np.flatnonzero(stream(seed, u).random(n - u - 1) < p)
        if hits.size:
            us.append(np.full(hits.size, u, dtype=np.int64))
            vs.append(hits + u + 1)
    if not us:
        return empty_graph(n)
    return _graph_from_edge_arrays(n, np.concatenate(us), np.concatenate(vs))


def generate(spec: FamilySpec) -> Graph:
    v = spec.variant
    if v == "empty":
        return empty_graph(spec.n)
    if v == "complete":
        return complete_graph(spec.n)
    if v == "cycle":
        return cycle_graph(spec.n)
    if v == "complete_bipartite":
        return complete_bipartite(spec.a, spec.b)
    if v == "gnp":
        return gnp(spec.n, spec.p, spec.seed)
    return disjoint_union(*(generate(x) for x in spec.parts))


# --- heavy / light ----------------------------------------------------------

@dataclass(frozen=True)
class HeavyLightSplit:
    heavy: VertexSet
    light: VertexSet
    threshold: tuple[int, int, int]  # (n, k, ell): threshold is n * ell**(1/3) / k

    @property
    def threshold_value(self) -> float:
        n, k, ell = self.threshold
        return n * ell ** (1 / 3) / k

    def is_heavy(self, v: int) -> bool:
        return v in self.heavy


def is_heavy_degree(deg: int, n: int, k: int, ell: int) -> bool:
    """``deg >= n * ell**(1/3) / k`` decided in integers: ``(k*deg)**3 >= n**3 * ell``."""
    return (k * deg) ** 3 >= n ** 3 * ell


def heavy_light(g: Graph, k: int, ell: int) -> HeavyLightSplit:
    if k < 1 or ell < 1:
        raise ValueError("k and ell must be positive")
    heavy = 0
    for v, r in enumerate(g.rows):
        if is_heavy_degree(_popcount(r), g.n, k, ell):
            heavy |= 1 << v
    full = (1 << g.n) - 1
    return HeavyLightSplit(VertexSet(heavy), VertexSet(full & ~heavy), (g.n, k, ell))

