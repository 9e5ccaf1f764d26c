"""Seeded random streams.

Every function in this package that needs randomness takes an explicit
RngStream; there is no global generator.  Same seed => same draw sequence
on every platform (PCG64 is specified bit-exactly).
"""
from __future__ import annotations

import numpy as np


class RngStream:
    """A named, reproducible random stream backed by PCG64.

    Child streams are derived with integer keys via SeedSequence spawn keys,
    so parallel work can use statistically independent streams that are still
    fully determined by the root seed.
    """

    def __init__(self, seed: int, _spawn_key: tuple[int, ...] = ()):
        self.seed = int(seed)
        self._spawn_key = tuple(_spawn_key)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self._spawn_key)
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def derive(self, *keys: int) -> "RngStream":
        """Independent child stream addressed by integer keys."""
        return RngStream(self.seed, self._spawn_key + tuple(int(k) for k in keys))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, key={self._spawn_key})"
