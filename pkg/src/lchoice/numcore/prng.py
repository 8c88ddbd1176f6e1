"""Counter-based pseudo-random numbers shared by both compute backends.

The generator is splitmix64 in counter form: draw ``k`` of a stream seeded
with ``s`` is ``mix64(s + (k + 1) * GAMMA)``.  Because each draw is addressed
by its index, the vectorised numpy backend and the scalar loops of the jit
backend produce bit-identical streams, which keeps fits reproducible across
backends and makes their agreement testable.
"""

from __future__ import annotations

import numpy as np

GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U53 = 1.0 / 9007199254740992.0  # 2**-53


def mix64(z: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer on uint64 values (arrays or scalars)."""
    with np.errstate(over="ignore"):
        z = np.uint64(z) if np.isscalar(z) else z.astype(np.uint64)
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


def derive_seed(seed: int, stream: int) -> int:
    """Decorrelated child seed for a named stream of a user seed."""
    base = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
    with np.errstate(over="ignore"):
        salted = base + GAMMA * np.uint64(0x10000 + stream)
    return int(mix64(salted))


def uniforms(seed: int, start: int, n: int) -> np.ndarray:
    """Draws ``start .. start+n-1`` of the stream, as float64 in [0, 1)."""
    idx = np.arange(start + 1, start + n + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        states = np.uint64(seed) + idx * GAMMA
    return (mix64(states) >> np.uint64(11)).astype(np.float64) * _U53
