"""SplitMix64 pseudo-random generator.

Every random draw in prepcast goes through this generator (or its numba twin
in :mod:`prepcast.learning.tree`) so that a seed reproduces the same dataset
and the same models on any platform. Platform PRNGs are never used.

Algorithm (all arithmetic modulo 2**64)::

    state += 0x9E3779B97F4A7C15
    z = state
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    return z ^ (z >> 31)

Uniform floats take the top 53 bits: ``(z >> 11) * 2**-53``. Gaussians use the
Box-Muller cosine branch, consuming two uniforms per draw. Independent
streams are keyed with :func:`derive_seed`.
"""

from __future__ import annotations

import math

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_MUL1 = 0xBF58476D1CE4E5B9
_MUL2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MUL1) & MASK64
    z = ((z ^ (z >> 27)) * _MUL2) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, *keys: int) -> int:
    """Fold integer keys into ``seed``; used for per-record and per-tree streams."""
    state = seed & MASK64
    for key in keys:
        state = mix64((state + GOLDEN * ((key & MASK64) + 1)) & MASK64)
    return state


class SplitMix64:
    def __init__(self, seed: int) -> None:
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN) & MASK64
        return mix64(self.state)

    def uniform(self) -> float:
        """Float in [0, 1)."""
        return (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)

    def uniform_range(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.uniform()

    def below(self, n: int) -> int:
        """Integer in [0, n) by multiply-shift on the top 32 bits."""
        if n <= 0:
            raise ValueError("n must be positive")
        return ((self.next_u64() >> 32) * n) >> 32

    def gauss(self) -> float:
        u1 = 1.0 - self.uniform()  # (0, 1]
        u2 = self.uniform()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates, walking from the end."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]
