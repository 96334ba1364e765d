"""graph6 short form (n <= 62) reader and writer.

Format: one byte ``n + 63`` followed by ``ceil(C(n,2)/6)`` bytes carrying
the upper triangle in column-major order ``x(0,1), x(0,2), x(1,2), x(0,3), ...``,
six bits per byte, most significant first, each byte offset by 63 and the
final byte zero-padded.
"""
from __future__ import annotations

from typing import IO, Iterator

from edgestat.graph import Graph

MAX_N = 62


class Graph6Error(ValueError):
    pass


def _pairs(n: int) -> Iterator[tuple[int, int]]:
    for j in range(1, n):
        for i in range(j):
            yield i, j


def parse_graph6(text: str) -> Graph:
    line = text[:-1] if text.endswith("\n") else text
    if not line:
        raise Graph6Error("empty graph6 line")
    if line.startswith(">>graph6<<"):
        line = line[10:]
    for ch in line:
        if not 63 <= ord(ch) <= 126:
            raise Graph6Error(f"byte {ord(ch)} outside the printable graph6 range 63..126")
    n = ord(line[0]) - 63
    if n > MAX_N:
        raise Graph6Error("long-form graph6 (n >= 63) is not supported")
    nbits = n * (n - 1) // 2
    nbytes = (nbits + 5) // 6
    body = line[1:]
    if len(body) != nbytes:
        raise Graph6Error(f"n={n} needs {nbytes} data bytes, got {len(body)}")
    bits = 0
    for ch in body:
        bits = (bits << 6) | (ord(ch) - 63)
    pad = 6 * nbytes - nbits
    if bits & ((1 << pad) - 1):
        raise Graph6Error("nonzero padding bits")
    bits >>= pad
    rows = [0] * n
    pos = nbits - 1
    for i, j in _pairs(n):
        if (bits >> pos) & 1:
            rows[i] |= 1 << j
            rows[j] |= 1 << i
        pos -= 1
    return Graph._trusted(n, tuple(rows))


def write_graph6(g: Graph) -> str:
    """Short-form encoding without the trailing newline."""
    n = g.n
    if n > MAX_N:
        raise Graph6Error(f"n={n} needs long-form graph6, which is not supported")
    nbits = n * (n - 1) // 2
    nbytes = (nbits + 5) // 6
    bits = 0
    for i, j in _pairs(n):
        bits = (bits << 1) | ((g.rows[i] >> j) & 1)
    bits <<= 6 * nbytes - nbits
    out = [chr(n + 63)]
    for b in range(nbytes - 1, -1, -1):
        out.append(chr(((bits >> (6 * b)) & 63) + 63))
    return "".join(out)


def read_graph6_lines(stream: IO[str]) -> Iterator[Graph]:
    for lineno, line in enumerate(stream, 1):
        line = line.strip()
        if not line:
            continue
        try:
            yield parse_graph6(line)
        except Graph6Error as exc:
            raise Graph6Error(f"line {lineno}: {exc}") from None
