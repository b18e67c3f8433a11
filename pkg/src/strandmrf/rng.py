"""Seeded random substreams keyed by purpose and index."""

from __future__ import annotations

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


class RandomSource:
    """Derives independent generators from one 64-bit master seed.

    ``stream("ga", 12)`` always yields the same generator for the same seed,
    no matter which process asks for it or in what order.
    """

    def __init__(self, seed: int = 0):
        self.seed = int(seed) & _MASK64

    def stream(self, purpose: str, *indices: int) -> np.random.Generator:
        key = [self.seed & 0xFFFFFFFF, self.seed >> 32, zlib.crc32(purpose.encode())]
        key.extend(int(i) for i in indices)
        return np.random.default_rng(np.random.SeedSequence(key))

    def __repr__(self) -> str:
        return f"RandomSource({self.seed})"
