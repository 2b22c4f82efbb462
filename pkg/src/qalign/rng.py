"""Derived random streams.

Every stochastic step draws from a generator keyed by a base seed plus a tuple
of labels (image id, kind, level, ...). Results therefore do not depend on the
order in which work items are scheduled.
"""
from __future__ import annotations

import hashlib

import numpy as np


def _key_words(key) -> list[int]:
    if isinstance(key, (int, np.integer)):
        return [int(key) & 0xFFFFFFFF, (int(key) >> 32) & 0xFFFFFFFF]
    digest = hashlib.blake2b(str(key).encode("utf-8"), digest_size=8).digest()
    return list(np.frombuffer(digest, dtype="<u4"))


def derive_seed(seed: int, *keys) -> int:
    """A 64-bit seed mixed from ``seed`` and ``keys``."""
    words = [int(w) for k in keys for w in _key_words(k)]
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=words)
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)


def derive_rng(seed: int, *keys) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *keys))
