"""xoshiro256** generator seeded through splitmix64.

Pure Python so the stream is pinned independently of numpy's bit
generators. Only small draws (mode coefficients) go through it.
"""

from __future__ import annotations

import math

import numpy as np

NAME = "xoshiro256**/splitmix64"
VERSION = 1
_MASK = (1 << 64) - 1


def _rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & _MASK


def splitmix64(state):
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


class Xoshiro256:
    def __init__(self, seed: int):
        sm = int(seed) & _MASK
        s = []
        for _ in range(4):
            sm, z = splitmix64(sm)
            s.append(z)
        self.s = s

    def next_u64(self) -> int:
        s = self.s
        result = (_rotl((s[1] * 5) & _MASK, 7) * 9) & _MASK
        t = (s[1] << 17) & _MASK
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def uniform(self) -> float:
        """Double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def normal(self) -> float:
        # Box-Muller, one variate per call
        u1 = 1.0 - self.uniform()
        u2 = self.uniform()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


def random_band_limited(grid, rng: Xoshiro256, kmax: int = 4, amplitude: float = 1.0):
    """Mean-zero field with Gaussian cos/sin coefficients on modes 0 < |k|_inf <= kmax."""
    x1, x2 = grid.coords
    scale = 2 * math.pi / grid.L
    f = np.zeros((grid.N, grid.N))
    for k1 in range(0, kmax + 1):
        for k2 in range(-kmax, kmax + 1):
            if k1 == 0 and k2 <= 0:
                continue
            phase = scale * (k1 * x1 + k2 * x2)
            a, b = rng.normal(), rng.normal()
            f += (a * np.cos(phase) + b * np.sin(phase)) / (1.0 + k1 * k1 + k2 * k2)
    f -= np.mean(f)
    return amplitude * f / max(float(np.max(np.abs(f))), 1e-300)
