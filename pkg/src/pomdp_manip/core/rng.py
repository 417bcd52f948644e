"""Deterministic randomness streams.

Every consumer of randomness receives its own ``numpy.random.Generator``
derived from a root seed and a tuple of integer keys, so runs are reproducible
regardless of the order in which episodes or steps are executed.
"""

from __future__ import annotations

import zlib

import numpy as np

# stream purposes
INIT = 0
TRUTH = 1
ENV = 2
AGENT = 3
EVAL = 4


def _key(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode())
    return int(part)


def substream(seed: int, *keys) -> np.random.Generator:
    """Generator for the sub-stream ``(seed, *keys)``.

    Keys may be ints or strings; strings are hashed with CRC32 so that named
    purposes ("env", "planner") map to stable integers.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


def child(rng: np.random.Generator) -> np.random.Generator:
    """Independent generator spawned from ``rng``'s own state."""
    return np.random.Generator(np.random.PCG64(int(rng.integers(0, 2**63))))
