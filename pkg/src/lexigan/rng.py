"""Seeded random source with a checkpoint-friendly 4x u64 state.

Wraps numpy's PCG64 bit generator. PCG64 keeps a 128-bit state and a
128-bit increment, which serialize exactly into four u64 words. All
draws go through 53-bit doubles or u64 integers so the generator never
holds a buffered half-word, keeping the 4-word snapshot lossless.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


class Rng:
    def __init__(self, seed: int | None = None):
        self._bg = np.random.PCG64(seed)
        self._gen = np.random.Generator(self._bg)

    def uniform(self, low: float, high: float, shape=None) -> np.ndarray:
        u = self._gen.random(shape)
        return low + (high - low) * u

    def integers(self, n: int, shape=None) -> np.ndarray:
        """Uniform ints in [0, n) derived from doubles (keeps state u64-aligned)."""
        u = np.asarray(self._gen.random(shape))
        return np.minimum((u * n).astype(np.int64), n - 1)

    def bits(self, shape=None) -> np.ndarray:
        return (self._gen.random(shape) < 0.5).astype(np.int64)

    def permutation(self, n: int) -> np.ndarray:
        # Fisher-Yates driven by double draws so the state stays 4-word clean.
        perm = np.arange(n)
        for i in range(n - 1, 0, -1):
            j = int(self.integers(i + 1))
            perm[i], perm[j] = perm[j], perm[i]
        return perm

    def state_words(self) -> tuple[int, int, int, int]:
        st = self._bg.state["state"]
        s, inc = st["state"], st["inc"]
        return (s >> 64) & _MASK64, s & _MASK64, (inc >> 64) & _MASK64, inc & _MASK64

    def set_state_words(self, words) -> None:
        s_hi, s_lo, i_hi, i_lo = (int(w) & _MASK64 for w in words)
        self._bg.state = {
            "bit_generator": "PCG64",
            "state": {"state": (s_hi << 64) | s_lo, "inc": (i_hi << 64) | i_lo},
            "has_uint32": 0,
            "uinteger": 0,
        }
