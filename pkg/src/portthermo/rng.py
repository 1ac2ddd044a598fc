"""Deterministic 64-bit PRNG used for all sampling that ends up in reports.

The generator is xoshiro256** (Blackman & Vigna, public domain reference
implementation), seeded through splitmix64.  It is implemented here rather
than taken from ``random``/``numpy`` so that validation samples, shell
samples, and fuzz corpora are bit-reproducible across platforms and library
versions.

State update, from the reference:

    result = rotl(s1 * 5, 7) * 9
    t  = s1 << 17
    s2 ^= s0;  s3 ^= s1;  s1 ^= s2;  s0 ^= s3;  s2 ^= t
    s3 = rotl(s3, 45)

Doubles are produced from the top 53 bits, uniform in [0, 1).
"""

from __future__ import annotations

import math

_MASK = (1 << 64) - 1


def _splitmix64(x: int):
    while True:
        x = (x + 0x9E3779B97F4A7C15) & _MASK
        z = x
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        yield (z ^ (z >> 31)) & _MASK


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK


class Xoshiro256:
    """xoshiro256** generator with splitmix64 seeding."""

    def __init__(self, seed: int = 0):
        sm = _splitmix64(seed & _MASK)
        self._s = [next(sm), next(sm), next(sm), next(sm)]

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & _MASK, 7) * 9) & _MASK
        t = (s1 << 17) & _MASK
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def random(self) -> float:
        """Uniform double in [0, 1)."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi] (inclusive), by rejection."""
        if hi < lo:
            raise ValueError("empty integer range")
        span = hi - lo + 1
        limit = (1 << 64) - ((1 << 64) % span)
        while True:
            u = self.next_u64()
            if u < limit:
                return lo + (u % span)

    def normal(self) -> float:
        """Standard normal via Box-Muller (uses two uniforms)."""
        u1 = self.random()
        while u1 == 0.0:
            u1 = self.random()
        u2 = self.random()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def direction(self, dim: int) -> list[float]:
        """Isotropic unit vector in R^dim."""
        while True:
            v = [self.normal() for _ in range(dim)]
            n = math.sqrt(sum(x * x for x in v))
            if n > 1e-12:
                return [x / n for x in v]

    def bytes(self, n: int) -> bytes:
        out = bytearray()
        while len(out) < n:
            out += self.next_u64().to_bytes(8, "little")
        return bytes(out[:n])
