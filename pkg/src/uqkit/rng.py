"""Deterministic random number generation.

Stream derivation uses splitmix64; the draw stream itself comes from a
xorshift64* generator. Both are fixed-point arithmetic on 64-bit unsigned
integers, so a given seed replays the identical stream on any platform.
Normal variates use the Box-Muller transform with the (cos, sin) pair
consumed in order, which pins posterior-sampling golden values.
"""

from __future__ import annotations

import math

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_TWO_PI = 2.0 * math.pi


def _mix64(x: int) -> int:
    """splitmix64 output function (Vigna's finalizer)."""
    x &= _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def child_seed(seed: int, index: int) -> int:
    """Seed of the index-th child stream of ``seed``.

    This is the index-th output of the splitmix64 sequence started at
    ``seed``, so distinct indices give independent streams by construction.
    """
    if index < 0:
        raise ValueError(f"child index must be nonnegative, got {index}")
    return _mix64((seed + (index + 1) * _GOLDEN) & _MASK64)


class Rng:
    """Seeded xorshift64* stream with splitmix64-derived state.

    Instances are single-owner mutable: callers that need parallelism
    derive independent child streams up front via :meth:`child`.
    """

    __slots__ = ("_seed", "_state", "_cached_normal")

    def __init__(self, seed: int):
        self._seed = int(seed) & _MASK64
        state = _mix64((self._seed + _GOLDEN) & _MASK64)
        # xorshift state must never be zero
        self._state = state if state != 0 else _GOLDEN
        self._cached_normal: float | None = None

    @property
    def seed(self) -> int:
        return self._seed

    def child(self, index: int) -> "Rng":
        """Independent stream derived from (seed, index)."""
        return Rng(child_seed(self._seed, index))

    def next_uint64(self) -> int:
        x = self._state
        x ^= x >> 12
        x = (x ^ (x << 25)) & _MASK64
        x ^= x >> 27
        self._state = x
        return (x * 0x2545F4914F6CDD1D) & _MASK64

    def uniform(self) -> float:
        """Uniform draw in [0, 1) with 53 bits of precision."""
        return (self.next_uint64() >> 11) * (1.0 / 9007199254740992.0)

    def standard_normal(self) -> float:
        """N(0, 1) draw; Box-Muller, cos draw returned before the sin draw."""
        if self._cached_normal is not None:
            z = self._cached_normal
            self._cached_normal = None
            return z
        # 1 - uniform() lies in (0, 1], so the log is always finite
        r = math.sqrt(-2.0 * math.log(1.0 - self.uniform()))
        a = _TWO_PI * self.uniform()
        self._cached_normal = r * math.sin(a)
        return r * math.cos(a)

    def integer(self, bound: int) -> int:
        """Uniform integer in [0, bound) without modulo bias."""
        if bound <= 0:
            raise ValueError(f"bound must be positive, got {bound}")
        threshold = (_MASK64 + 1) - ((_MASK64 + 1) % bound)
        while True:
            draw = self.next_uint64()
            if draw < threshold:
                return draw % bound

    def uniforms(self, n: int) -> np.ndarray:
        return np.array([self.uniform() for _ in range(n)], dtype=np.float64)

    def normals(self, n: int) -> np.ndarray:
        return np.array([self.standard_normal() for _ in range(n)], dtype=np.float64)

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates permutation of range(n)."""
        perm = np.arange(n, dtype=np.int64)
        for i in range(n - 1, 0, -1):
            j = self.integer(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return perm
