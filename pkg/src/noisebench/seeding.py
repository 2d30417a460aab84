"""Deterministic sub-seed derivation.

One run seed fans out into independent per-stage streams keyed by strings
(stage name, channel, source), so any stage can be re-run in isolation.
"""

import zlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part)
    return zlib.crc32(str(part).encode("utf-8"))


def derive(seed: int, *keys) -> int:
    """Return a 63-bit seed for the stream named by ``keys``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def rng(seed: int, *keys) -> np.random.Generator:
    return np.random.default_rng(derive(seed, *keys))
