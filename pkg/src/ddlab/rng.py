"""Deterministic random-stream derivation.

Every stochastic routine in this package draws from a
``numpy.random.Generator`` backed by the Philox-4x64-10 counter-based
bit generator.  Streams are named by an integer seed plus a path of
integer words; the key for a stream is obtained by folding the path
into the seed with SplitMix64 finalization steps:

    key = seed mod 2**64
    for word in path:
        key = splitmix64(key XOR (word mod 2**64))

Distinct paths therefore yield statistically independent Philox keys,
and the mapping (seed, path) -> stream is stable across platforms,
process counts, and thread counts.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


def splitmix64(value: int) -> int:
    """One SplitMix64 finalization step on a 64-bit word."""
    z = (value + _GAMMA) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def derive_key(seed: int, *path: int) -> int:
    """Fold a path of integer words into a 64-bit stream key."""
    key = seed & _MASK64
    for word in path:
        key = splitmix64(key ^ (word & _MASK64))
    return key


def stream(seed: int, *path: int) -> np.random.Generator:
    """Return the Generator for the stream named by (seed, path)."""
    return np.random.Generator(np.random.Philox(key=derive_key(seed, *path)))
