"""Keyed random streams.

Every random quantity in the package is drawn from a generator keyed by
``(seed, purpose, *ids)`` so results never depend on evaluation order.
"""

from __future__ import annotations

import hashlib

import numpy as np

FEATURES = 1
HISTORY = 2
SCENARIO = 3
TRAIN_INIT = 4
ALNS = 5
DEMAND = 6


def stream(seed: int, purpose: int, *ids: int) -> np.random.Generator:
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    entropy = [int(seed), int(purpose), *(int(i) for i in ids)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def derive_seed(*parts: object) -> int:
    """Stable 63-bit seed from arbitrary printable parts (not Python's salted hash)."""
    digest = hashlib.blake2b("\x1f".join(map(str, parts)).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") >> 1
