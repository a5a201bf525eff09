"""Counter-based random streams with platform-independent output.

Stream ``(base_seed, level, m)`` is keyed by a splitmix64 mix of the three
integers; draw ``k`` of a stream is ``splitmix64(key + k * golden_gamma)``.
Standard normals come from the inverse normal CDF
(:func:`scipy.special.ndtri`, a fixed Cephes rational approximation) applied
to the 53-bit uniform ``(u + 0.5) / 2**53``, which never hits 0 or 1.  No
state is shared between streams, so realizations can be generated in any
order or in parallel with identical results.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    z = (x + GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def _splitmix64_array(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = x + np.uint64(GOLDEN_GAMMA)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def stream_key(base_seed: int, level: int, m: int) -> int:
    key = splitmix64(base_seed & MASK64)
    key = splitmix64(key ^ (level & MASK64))
    return splitmix64(key ^ (m & MASK64))


def uniforms(key: int, n: int) -> np.ndarray:
    k = np.arange(n, dtype=np.uint64)
    with np.errstate(over="ignore"):
        counters = np.uint64(key) + k * np.uint64(GOLDEN_GAMMA)
    bits = _splitmix64_array(counters) >> np.uint64(11)
    return (bits.astype(np.float64) + 0.5) * 2.0**-53


@dataclass(frozen=True)
class RngSpec:
    """A base seed; streams are addressed by ``(level, m)``."""

    base_seed: int = 0

    def normals(self, level: int, m: int, n: int) -> np.ndarray:
        return ndtri(uniforms(stream_key(self.base_seed, level, m), n))

    def uniforms(self, level: int, m: int, n: int) -> np.ndarray:
        return uniforms(stream_key(self.base_seed, level, m), n)

    def normal_matrix(self, level: int, indices, n: int) -> np.ndarray:
        """Row ``r`` holds the ``n`` normals of stream ``(level, indices[r])``."""
        return np.array([self.normals(level, int(m), n) for m in indices]).reshape(-1, n)
