"""Counter-based random substreams and ordered parallel map.

Every random object is drawn from a Philox generator keyed by
``(seed, domain, index...)``.  Path ``k`` therefore has the same increments
whatever the ensemble size, and a block of work gives the same numbers
whichever worker runs it.  Block results are concatenated in block order
before any reduction, so sums never depend on scheduling.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable

import numpy as np

# substream domains
PATHS = 0
SPECTRAL = 1
ENSEMBLE = 2
AUX = 3

STREAM_LAYOUT = "philox(SeedSequence(seed, spawn_key=(domain, index, ...))); domain 0 = paths"


def substream(seed: int, *key: int) -> np.random.Generator:
    if seed < 0 or seed >= 2**64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def map_blocks(fn: Callable[[int], object], n_blocks: int, workers: int = 1) -> list:
    """Evaluate ``fn(0..n_blocks-1)`` and return results in block order."""
    if workers <= 1 or n_blocks <= 1:
        return [fn(i) for i in range(n_blocks)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n_blocks)))


def block_ranges(total: int, block: int) -> list[tuple[int, int]]:
    return [(start, min(start + block, total)) for start in range(0, total, block)]
