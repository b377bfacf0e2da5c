"""Deterministic pseudo-random streams.

Every consumer of randomness (problem generators, weight initialization,
per-episode action noise) derives its own `Stream` from a string tag plus
integer words, so results are reproducible across runs, platforms, and
thread schedules. The generator is xoshiro256++ seeded through SplitMix64.
"""

from __future__ import annotations

import math

_MASK64 = (1 << 64) - 1
_SPLITMIX_GAMMA = 0x9E3779B97F4A7C15
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3

_INV_2_53 = 2.0 ** -53
_TWO_PI = 2.0 * math.pi


def _fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


def _splitmix64(state: int) -> tuple[int, int]:
    state = (state + _SPLITMIX_GAMMA) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class Stream:
    """xoshiro256++ generator bound to a (tag, words) identity."""

    __slots__ = ("_s0", "_s1", "_s2", "_s3")

    def __init__(self, s0: int, s1: int, s2: int, s3: int) -> None:
        if (s0 | s1 | s2 | s3) == 0:
            s0 = 1  # the all-zero state is a fixed point of xoshiro
        self._s0, self._s1, self._s2, self._s3 = s0, s1, s2, s3

    @classmethod
    def for_tag(cls, tag: str, *words: int) -> "Stream":
        """Derive an independent stream from a tag string and integer words."""
        state = _fnv1a64(tag.encode("utf-8"))
        for word in words:
            state, _ = _splitmix64(state ^ (word & _MASK64))
        seeds = []
        for _ in range(4):
            state, out = _splitmix64(state)
            seeds.append(out)
        return cls(*seeds)

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s0, self._s1, self._s2, self._s3
        result = (_rotl((s0 + s3) & _MASK64, 23) + s0) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s0, self._s1, self._s2, self._s3 = s0, s1, s2, s3
        return result

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        """Uniform draw in [lo, hi)."""
        u = (self.next_u64() >> 11) * _INV_2_53
        return lo + (hi - lo) * u

    def normal_pair(self) -> tuple[float, float]:
        """Two independent standard normals (Box-Muller)."""
        u1 = 1.0 - (self.next_u64() >> 11) * _INV_2_53  # (0, 1], keeps log finite
        u2 = (self.next_u64() >> 11) * _INV_2_53
        r = math.sqrt(-2.0 * math.log(u1))
        theta = _TWO_PI * u2
        return r * math.cos(theta), r * math.sin(theta)

    def randrange(self, n: int) -> int:
        """Uniform integer in [0, n) without modulo bias."""
        if n <= 0:
            raise ValueError("randrange needs n >= 1")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            u = self.next_u64()
            if u < limit:
                return u % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randrange(i + 1)
            items[i], items[j] = items[j], items[i]

    def permutation(self, n: int) -> tuple[int, ...]:
        order = list(range(n))
        self.shuffle(order)
        return tuple(order)
