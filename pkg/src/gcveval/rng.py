"""Deterministic 64-bit generator used for every randomized step in this repo.

Dataset splits must be byte-identical across platforms and reimplementations,
so nothing here relies on a platform RNG. The generator is SplitMix64
(Steele, Lea & Flood 2014), restated in full so another implementation can
reproduce the streams without reading this source:

    state    <- (state + 0x9E3779B97F4A7C15) mod 2^64
    z        <- state
    z        <- ((z XOR (z >> 30)) * 0xBF58476D1CE4E5B9) mod 2^64
    z        <- ((z XOR (z >> 27)) * 0x94D049BB133111EB) mod 2^64
    output   <- z XOR (z >> 31)

Derived draws, all fully specified:

* bounded integer in [0, n): ``next_u64() mod n``
* unit double in [0, 1):     ``(next_u64() >> 11) * 2^-53``
* standard normal pairs:     Box-Muller on two unit doubles, with
  ``u1 = 1 - unit()`` so the logarithm argument stays in (0, 1]

Named substreams decorrelate per-dataset shuffles sharing one experiment
seed: ``stream_seed = seed XOR u64_be(sha256(name)[0:8])``.

Shuffling is the classic Fisher-Yates walk from the last index down to 1,
swapping index ``i`` with ``j = bounded(i + 1)``.
"""

from __future__ import annotations

import hashlib
import math
from collections.abc import Sequence
from typing import TypeVar

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15

T = TypeVar("T")


class SplitMix64:
    """SplitMix64 stream seeded with a 64-bit unsigned integer."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def bounded(self, n: int) -> int:
        """Integer in [0, n) via modulo reduction (bias < n / 2^64)."""
        if n <= 0:
            raise ValueError(f"bound must be positive, got {n}")
        return self.next_u64() % n

    def unit(self) -> float:
        """Double in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * 2.0**-53

    def normal_pair(self) -> tuple[float, float]:
        """Two independent standard normals via Box-Muller."""
        u1 = 1.0 - self.unit()  # (0, 1], keeps log() finite
        u2 = self.unit()
        r = math.sqrt(-2.0 * math.log(u1))
        theta = 2.0 * math.pi * u2
        return r * math.cos(theta), r * math.sin(theta)


def stream_for(seed: int, name: str) -> SplitMix64:
    """Substream for `name`, decorrelated from sibling streams of one seed."""
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    tweak = int.from_bytes(digest[:8], "big")
    return SplitMix64((seed & _MASK64) ^ tweak)


def shuffled(items: Sequence[T], rng: SplitMix64) -> list[T]:
    """Fisher-Yates shuffle of a copy of `items`, driven by `rng`."""
    out = list(items)
    for i in range(len(out) - 1, 0, -1):
        j = rng.bounded(i + 1)
        out[i], out[j] = out[j], out[i]
    return out
