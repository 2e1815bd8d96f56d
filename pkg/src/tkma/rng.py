"""Portable PCG32 generator with Box-Muller normals.

Every random draw in the package flows through an explicitly passed
:class:`RngState`, so experiments are reproducible bit-for-bit across
platforms and languages that follow the same recipe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

MULTIPLIER = 6364136223846793005
MASK64 = (1 << 64) - 1
MASK32 = (1 << 32) - 1
_TWO_M53 = 2.0 ** -53


@dataclass
class RngState:
    """PCG32 state: 64-bit LCG state plus an odd stream increment.

    ``cached_normal`` holds the sine half of the last Box-Muller pair.
    """

    state: int = 0
    inc: int = 1
    cached_normal: float | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.inc % 2 != 1:
            raise ValueError("PCG32 increment must be odd")

    def copy(self) -> RngState:
        return RngState(self.state, self.inc, self.cached_normal)


def _advance(rng: RngState) -> None:
    rng.state = (rng.state * MULTIPLIER + rng.inc) & MASK64


def rng_new(seed: int, stream: int = 0) -> RngState:
    """Seed a generator following the reference ``pcg32_srandom_r`` recipe."""
    seed &= MASK64
    rng = RngState(0, ((stream << 1) | 1) & MASK64)
    _advance(rng)
    rng.state = (rng.state + seed) & MASK64
    _advance(rng)
    return rng


def next_u32(rng: RngState) -> int:
    """XSH-RR output of the current state, then advance the LCG."""
    old = rng.state
    _advance(rng)
    xorshifted = (((old >> 18) ^ old) >> 27) & MASK32
    rot = old >> 59
    return ((xorshifted >> rot) | (xorshifted << ((-rot) & 31))) & MASK32


def next_u64(rng: RngState) -> int:
    """High word first, then low word."""
    hi = next_u32(rng)
    lo = next_u32(rng)
    return (hi << 32) | lo


def next_uniform(rng: RngState) -> float:
    """Uniform double in (0, 1] from a 53-bit mantissa; never returns 0."""
    return ((next_u64(rng) >> 11) + 1) * _TWO_M53


def next_bounded(rng: RngState, bound: int) -> int:
    """Unbiased integer in ``[0, bound)`` by threshold rejection."""
    if not 0 < bound <= MASK32 + 1:
        raise ValueError(f"bound must be in [1, 2**32], got {bound}")
    threshold = ((1 << 32) - bound) % bound
    while True:
        r = next_u32(rng)
        if r >= threshold:
            return r % bound


def next_gaussian(rng: RngState) -> float:
    """Standard normal draw.

    Box-Muller on two uniforms; the cosine branch is returned and the sine
    branch is cached for the following call.
    """
    if rng.cached_normal is not None:
        z = rng.cached_normal
        rng.cached_normal = None
        return z
    u1 = next_uniform(rng)
    u2 = next_uniform(rng)
    radius = math.sqrt(-2.0 * math.log(u1))
    angle = 2.0 * math.pi * u2
    rng.cached_normal = radius * math.sin(angle)
    return radius * math.cos(angle)


def gaussian_array(rng: RngState, size: int) -> np.ndarray:
    """``size`` consecutive :func:`next_gaussian` draws as a float64 array."""
    out = np.empty(size, dtype=np.float64)
    for i in range(size):
        out[i] = next_gaussian(rng)
    return out


def sample_without_replacement(rng: RngState, population: int, count: int) -> np.ndarray:
    """First ``count`` entries of a seeded partial Fisher-Yates shuffle of
    ``range(population)``."""
    if not 0 <= count <= population:
        raise ValueError(f"cannot draw {count} items from {population}")
    idx = list(range(population))
    for i in range(count):
        j = i + next_bounded(rng, population - i)
        idx[i], idx[j] = idx[j], idx[i]
    return np.array(idx[:count], dtype=np.int64)
