"""Counter-based random streams.

Every stochastic routine in the package draws from a Philox generator keyed
by (root seed, *stream indices).  Streams for different indices are
statistically independent and reproducible regardless of evaluation order,
which keeps disorder sampling and Monte Carlo chains bit-stable under
concurrency.
"""
from __future__ import annotations

import numpy as np


def stream(seed: int, *indices: int) -> np.random.Generator:
    """Return the generator for stream ``indices`` of root ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(i) for i in indices))
    return np.random.Generator(np.random.Philox(ss))


def substreams(seed: int, count: int, *prefix: int) -> list[np.random.Generator]:
    """Independent generators for indices ``(*prefix, 0..count-1)``."""
    return [stream(seed, *prefix, i) for i in range(count)]
