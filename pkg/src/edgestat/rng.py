"""Seeded random streams.

Every random draw in the package comes from numpy's Philox4x64 generator,
a counter-based bit generator.  A stream is addressed by ``(seed, stream_id)``
through ``SeedSequence([seed, stream_id])``, so independent streams can be
split off without coordination and results do not depend on how work is
scheduled across workers.
"""
from __future__ import annotations

import numpy as np

SEED_BITS = 64


def stream(seed: int, stream_id: int = 0) -> np.random.Generator:
    if not 0 <= seed < 2 ** SEED_BITS:
        raise ValueError(f"seed must fit in {SEED_BITS} unsigned bits")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, stream_id])))


def substream(seed: int, *path: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *path])))
