"""Deterministic randomness and hashing primitives.

Every stochastic choice in the pipeline (corpus splits, epoch shuffles,
hashed token embeddings, weight initialization) is driven by the splitmix64
generator defined here, so results are bit-identical across runs and
platforms.  Nothing in this module touches Python's or numpy's global RNG
state.
"""

from __future__ import annotations

from typing import Iterator, List, Sequence, TypeVar

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF

# splitmix64 constants (Steele, Lea & Flood; the java.util.SplittableRandom mixer).
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

# FNV-1a, 64-bit variant.
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3

_T = TypeVar("_T")


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a hash of a byte string."""
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & MASK64
    return h


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


class SplitMix64:
    """splitmix64 stream: state advances by the 64-bit golden gamma, outputs
    are the mixed states.  Output k (0-based) equals mix(seed + (k+1)*gamma).
    """

    __slots__ = ("_state",)

    def __init__(self, seed: int) -> None:
        self._state = seed & MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & MASK64
        return _mix(self._state)

    def next_unit(self) -> float:
        """Uniform float64 in [0, 1), from the top 53 bits of the next output."""
        return (self.next_u64() >> 11) * 2.0**-53

    def next_symmetric(self) -> float:
        """Uniform float64 in [-1, 1)."""
        return 2.0 * self.next_unit() - 1.0

    def next_below(self, bound: int) -> int:
        """next_u64() mod bound; bound must be positive."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        return self.next_u64() % bound

    def shuffle(self, items: List[_T]) -> None:
        """In-place Fisher-Yates: for i = n-1 down to 1, j = next_u64() mod (i+1)."""
        for i in range(len(items) - 1, 0, -1):
            j = self.next_below(i + 1)
            items[i], items[j] = items[j], items[i]

    def choice(self, items: Sequence[_T]) -> _T:
        return items[self.next_below(len(items))]


def derive_seed(seed: int, stream: int) -> int:
    """Output number `stream` of the splitmix64 stream seeded with `seed`.

    O(1); used to give each consumer (epoch shuffle, weight tensor, synthetic
    document) its own decorrelated sub-seed.
    """
    return _mix((seed + ((stream + 1) & MASK64) * _GAMMA) & MASK64)


def shuffled(items: Sequence[_T], seed: int) -> List[_T]:
    """Fisher-Yates-shuffled copy of `items`, driven by splitmix64(seed)."""
    out = list(items)
    SplitMix64(seed).shuffle(out)
    return out


def bulk_u64(seed: int, count: int) -> np.ndarray:
    """Outputs 0..count-1 of the splitmix64 stream seeded with `seed`.

    Vectorized; bitwise identical to calling SplitMix64(seed).next_u64()
    `count` times.
    """
    idx = np.arange(1, count + 1, dtype=np.uint64)
    z = np.uint64(seed & MASK64) + idx * np.uint64(_GAMMA)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


def bulk_unit(seed: int, count: int) -> np.ndarray:
    """`count` uniform float64 values in [0, 1) via the top-53-bit conversion."""
    return (bulk_u64(seed, count) >> np.uint64(11)).astype(np.float64) * 2.0**-53


def bulk_symmetric(seed: int, count: int) -> np.ndarray:
    """`count` uniform float64 values in [-1, 1)."""
    return 2.0 * bulk_unit(seed, count) - 1.0


def seed_stream(seed: int) -> Iterator[int]:
    """Infinite iterator of derived seeds: derive_seed(seed, 0), derive_seed(seed, 1), ..."""
    k = 0
    while True:
        yield derive_seed(seed, k)
        k += 1
