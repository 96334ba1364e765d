import random

import pytest
from hypothesis import strategies as st

from edgestat.graph import graph_from_edges


def random_graph(n, p, rnd):
    return graph_from_edges(n, [(u, v) for u in range(n) for v in range(u + 1, n) if rnd.random() < p])


@st.composite
def graphs(draw, min_n=1, max_n=9):
    n = draw(st.integers(min_n, max_n))
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n)]
    chosen = draw(st.lists(st.booleans(), min_size=len(pairs), max_size=len(pairs)))
    return graph_from_edges(n, [e for e, c in zip(pairs, chosen) if c])


@pytest.fixture
def rnd():
    return random.Random(20261016)


def pytest_terminal_summary(terminalreporter, config):
    lines = config.__dict__.get("_acceptance_lines")
    if lines:
        terminalreporter.section("acceptance criteria")
        for num in sorted(lines):
            terminalreporter.write_line(lines[num])
