"""Counter-based uniform stream keyed by (seed, stream id).

The n-th uniform of a stream is a pure function of (seed, stream, n): the
SplitMix64 finaliser applied to ``key + n * GOLDEN``. Nothing is carried
between draws except the counter, so replicates can be handed out to any
worker in any order and still produce identical numbers.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_STREAM_MUL = np.uint64(0xD1B54A32D192ED03)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


@nb.njit(cache=True, nogil=True)
def mix64(z):
    z = np.uint64(z)
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@nb.njit(cache=True, nogil=True)
def stream_key(seed, stream):
    return mix64(mix64(np.uint64(seed) + _GOLDEN) ^ (np.uint64(stream) * _STREAM_MUL))


@nb.njit(cache=True, nogil=True)
def uniform_at(key, counter):
    """Uniform on the open interval (0, 1)."""
    z = mix64(np.uint64(key) + np.uint64(counter) * _GOLDEN)
    return (np.float64(z >> _S11) + 0.5) * _INV53


def _u64(value: int) -> np.uint64:
    return np.uint64(int(value) & 0xFFFFFFFFFFFFFFFF)


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream: int = 0

    @property
    def key(self) -> np.uint64:
        return np.uint64(stream_key(_u64(self.seed), _u64(self.stream)))

    def uniforms(self, n: int, start: int = 0) -> np.ndarray:
        return _uniforms(self.key, np.uint64(start), n)


def sub_seed(seed: int, index: int) -> int:
    """Derive an independent experiment seed, e.g. one per horizon T."""
    return int(stream_key(_u64(seed), _u64(index + (1 << 40))))


@nb.njit(cache=True)
def _uniforms(key, start, n):
    out = np.empty(n)
    for i in range(n):
        out[i] = uniform_at(key, start + np.uint64(i))
    return out
