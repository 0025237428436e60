"""Seeded random streams.

Raw bits come from Philox4x64-10 (counter based) keyed directly with
``seed | stream << 64`` and a zero counter, so a stream is fully described by
``(seed, stream)`` and can be regenerated in any language that has Philox.
Uniform doubles take the top 53 bits of each 64-bit word; normals use the
Box-Muller transform, consuming one pair of uniforms per pair of variates.
"""

from __future__ import annotations

import math

import numpy as np

_MASK64 = (1 << 64) - 1

# stream ids
DATA = 0
INIT = 1
SHUFFLE = 2
NOISE = 3
GROUND_TRUTH = 4


class Rng:
    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)
        key = (self.seed & _MASK64) | ((self.stream & _MASK64) << 64)
        self._bits = np.random.Philox(counter=0, key=key)

    def uniform(self, size=None) -> np.ndarray | float:
        """Doubles in [0, 1)."""
        n = 1 if size is None else int(np.prod(size))
        raw = self._bits.random_raw(n)
        u = (raw >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)
        if size is None:
            return float(u[0])
        return u.reshape(size)

    def normal(self, size=None) -> np.ndarray | float:
        n = 1 if size is None else int(np.prod(size))
        k = (n + 1) // 2
        u = self.uniform(2 * k)
        u1 = 1.0 - u[0::2]  # (0, 1], keeps log finite
        u2 = u[1::2]
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * math.pi * u2
        z = np.empty(2 * k)
        z[0::2] = r * np.cos(theta)
        z[1::2] = r * np.sin(theta)
        if size is None:
            return float(z[0])
        return z[:n].reshape(size)

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of ``range(n)``, high index first."""
        perm = np.arange(n)
        if n < 2:
            return perm
        u = self.uniform(n - 1)
        for k, i in enumerate(range(n - 1, 0, -1)):
            j = min(int(u[k] * (i + 1)), i)
            perm[i], perm[j] = perm[j], perm[i]
        return perm


def as_rng(seed_or_rng, stream: int = 0) -> Rng:
    if isinstance(seed_or_rng, Rng):
        return seed_or_rng
    return Rng(seed_or_rng, stream)
