"""Deterministic random streams: splitmix64-seeded xoshiro256** generators.

The stream definition below is a contract (file formats and reports depend on
it); any port to another language must reproduce it bit for bit.

* Seeding: the 64-bit seed (any int, reduced mod 2**64) drives a splitmix64
  sequence; stream ``k`` takes splitmix64 outputs ``4k .. 4k+3`` as its
  xoshiro256** state words.  An all-zero state (vanishingly unlikely) is
  repaired by replacing the first word with the splitmix64 gamma.
* ``next_u64`` is the reference xoshiro256** step.
* Uniforms in [0, 1): ``(x >> 11) * 2**-53``.
* Normals: Box-Muller over consecutive output pairs.  The radius draw maps to
  (0, 1] via ``((x >> 11) + 1) * 2**-53`` so the log stays finite; cos uses
  the first draw of the pair, sin the second, and the sin half is cached when
  an odd count is requested.
* Bounded ints: ``next_u64() % n`` (modulo; bias is negligible for n << 2**64).
* Shuffles: Fisher-Yates from the top index down with ``j = below(i + 1)``.
"""

from __future__ import annotations

import math

import numpy as np

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


def splitmix64(seed: int, count: int) -> list[int]:
    """First ``count`` outputs of the splitmix64 sequence started at ``seed``."""
    x = seed & _MASK
    out = []
    for _ in range(count):
        x = (x + _GAMMA) & _MASK
        z = x
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        out.append(z ^ (z >> 31))
    return out


def derive_seeds(seed: int, count: int) -> list[int]:
    """Child seeds for independent sub-streams (splitmix64 outputs of ``seed``)."""
    return splitmix64(seed, count)


class Xoshiro256StarStar:
    """xoshiro256** stream, seeded via splitmix64 as documented above."""

    def __init__(self, seed: int, stream: int = 0):
        if stream < 0:
            raise ValueError("stream must be nonnegative")
        words = splitmix64(seed, 4 * (stream + 1))[4 * stream : 4 * stream + 4]
        if not any(words):
            words[0] = _GAMMA
        self._s = tuple(words)
        self._spare: float | None = None

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        v = (s1 * 5) & _MASK
        result = ((((v << 7) | (v >> 57)) & _MASK) * 9) & _MASK
        t = (s1 << 17) & _MASK
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = ((s3 << 45) | (s3 >> 19)) & _MASK
        self._s = (s0, s1, s2, s3)
        return result

    def uint64s(self, count: int) -> np.ndarray:
        """Next ``count`` raw outputs as a uint64 array."""
        s0, s1, s2, s3 = self._s
        out = [0] * count
        for i in range(count):
            v = (s1 * 5) & _MASK
            out[i] = ((((v << 7) | (v >> 57)) & _MASK) * 9) & _MASK
            t = (s1 << 17) & _MASK
            s2 ^= s0
            s3 ^= s1
            s1 ^= s2
            s0 ^= s3
            s2 ^= t
            s3 = ((s3 << 45) | (s3 >> 19)) & _MASK
        self._s = (s0, s1, s2, s3)
        return np.array(out, dtype=np.uint64)

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * 2.0**-53

    def uniforms(self, count: int) -> np.ndarray:
        u = self.uint64s(count)
        return (u >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def normals(self, count: int, mean: float = 0.0, std: float = 1.0) -> np.ndarray:
        out = np.empty(count, dtype=np.float64)
        i = 0
        if self._spare is not None and count > 0:
            out[0] = self._spare
            self._spare = None
            i = 1
        remaining = count - i
        pairs = (remaining + 1) // 2
        if pairs > 0:
            u = self.uint64s(2 * pairs)
            u1 = ((u[0::2] >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53
            u2 = (u[1::2] >> np.uint64(11)).astype(np.float64) * 2.0**-53
            radius = np.sqrt(-2.0 * np.log(u1))
            z = np.empty(2 * pairs, dtype=np.float64)
            z[0::2] = radius * np.cos(2.0 * math.pi * u2)
            z[1::2] = radius * np.sin(2.0 * math.pi * u2)
            out[i:] = z[:remaining]
            if remaining % 2 == 1:
                self._spare = float(z[remaining])
        if mean != 0.0 or std != 1.0:
            out = out * std + mean
        return out

    def normal(self, mean: float = 0.0, std: float = 1.0) -> float:
        return float(self.normals(1, mean, std)[0])

    def below(self, n: int) -> int:
        """Integer in [0, n) via modulo reduction."""
        if n <= 0:
            raise ValueError("n must be positive")
        return self.next_u64() % n

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates permutation of range(n)."""
        idx = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.next_u64() % (i + 1)
            idx[i], idx[j] = idx[j], idx[i]
        return np.array(idx, dtype=np.int64)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle of a list."""
        for i in range(len(items) - 1, 0, -1):
            j = self.next_u64() % (i + 1)
            items[i], items[j] = items[j], items[i]
