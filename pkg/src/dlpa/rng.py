"""Deterministic seeded RNG substreams.

Every stochastic component draws from a named child stream derived from one
root seed, so results do not depend on the order subsystems consume random
numbers or on how work is split across workers.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key_to_int(part: int | str) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFF
    return zlib.crc32(str(part).encode("utf-8"))


def substream(seed: int, *key: int | str) -> np.random.Generator:
    """Child generator for (seed, *key); same arguments always give the same stream."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [_key_to_int(p) for p in key]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def child_seed(seed: int, *key: int | str) -> int:
    """Stable 63-bit integer seed derived from (seed, *key)."""
    ss = np.random.SeedSequence(
        [int(seed) & 0xFFFFFFFFFFFFFFFF] + [_key_to_int(p) for p in key]
    )
    return int(ss.generate_state(1, np.uint64)[0] >> 1)
