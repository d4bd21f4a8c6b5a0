"""Counter-based deterministic random draws.

Every random quantity in the project is derived from ``mix64(seed, index)``,
the SplitMix64 finalizer applied to ``seed + (index + 1) * GOLDEN``.  The
scheme is counter-based (no hidden stream state), exactly reproducible on any
platform, and cheap to evaluate out of order.
"""

from __future__ import annotations

import math

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def mix64(seed: int, index: int) -> int:
    """SplitMix64 finalizer of (seed, index); uniform over 64-bit integers."""
    z = (seed + (index + 1) * _GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK


def uniform(seed: int, index: int) -> float:
    """Uniform draw in [0, 1) from counter ``index``."""
    return mix64(seed, index) / 2.0**64


def gaussian(seed: int, index: int) -> float:
    """Standard normal draw via Box-Muller; consumes counters index and index+1."""
    u1 = max(uniform(seed, index), 1e-300)
    u2 = uniform(seed, index + 1)
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


class CounterStream:
    """Sequential view over the counter-based draws for one seed."""

    def __init__(self, seed: int, start: int = 0):
        self.seed = seed
        self._index = start

    def next_uniform(self) -> float:
        u = uniform(self.seed, self._index)
        self._index += 1
        return u

    def next_gaussian(self) -> float:
        g = gaussian(self.seed, self._index)
        self._index += 2
        return g

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle driven by the stream."""
        for i in range(len(items) - 1, 0, -1):
            j = int(self.next_uniform() * (i + 1))
            items[i], items[j] = items[j], items[i]


_HALTON_BASES = (2, 3, 5, 7)


def _radical_inverse(i: int, base: int) -> float:
    inv = 0.0
    f = 1.0 / base
    while i > 0:
        inv += f * (i % base)
        i //= base
        f /= base
    return inv


def halton4(index: int, shift: tuple[float, float, float, float]) -> tuple[float, ...]:
    """4-d Halton point with a Cranley-Patterson rotation, in [0, 1)^4."""
    return tuple(
        (_radical_inverse(index + 1, b) + s) % 1.0
        for b, s in zip(_HALTON_BASES, shift)
    )
