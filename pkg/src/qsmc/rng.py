"""Counter-based random streams.

Every draw is a pure function of ``(seed, substream, purpose, counter)``:
the stream key is a SplitMix64 hash chain of the first three, and draw
``k`` is the SplitMix64 output at state ``key + (k + 1) * golden``.  Any
subset of replicas can therefore be simulated in any order, in any chunking,
and reproduce the same numbers bit for bit.

Purposes separate the path noise, the exponential killing threshold, the
initial-state draw, Brownian-bridge refinements and test oracles so that
they are independent of each other.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

PATH = 0
KILL = 1
INIT = 2
BRIDGE = 3
ORACLE = 4

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30, _S27, _S31, _S11 = (np.uint64(s) for s in (30, 27, 31, 11))
_MASK = (1 << 64) - 1
_TWO_M53 = 2.0**-53


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def stream_keys(seed: int, substreams, purpose: int) -> np.ndarray:
    """Keys for ``substreams`` (array of non-negative ints) under ``seed``/``purpose``."""
    sub = np.asarray(substreams, dtype=np.uint64)
    with np.errstate(over="ignore"):
        s = _mix(np.array([int(seed) & _MASK], dtype=np.uint64) + _GOLDEN)
        k = _mix(s + (sub + np.uint64(1)) * _GOLDEN)
        return _mix(k ^ (np.uint64(purpose + 1) * _M2))


def bits(keys: np.ndarray, counters) -> np.ndarray:
    """Raw 64-bit draws; result shape is ``keys.shape + np.shape(counters)``."""
    c = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over="ignore"):
        state = keys.reshape(keys.shape + (1,) * c.ndim) + (c + np.uint64(1)) * _GOLDEN
        return _mix(state)


def uniforms(keys: np.ndarray, counters) -> np.ndarray:
    """Uniforms on the open interval (0, 1) with 53 random bits."""
    return ((bits(keys, counters) >> _S11).astype(np.float64) + 0.5) * _TWO_M53


def normals(keys: np.ndarray, counters) -> np.ndarray:
    """Standard normals by inverse-CDF transform of :func:`uniforms`."""
    return ndtri(uniforms(keys, counters))


def exponentials(keys: np.ndarray, counters) -> np.ndarray:
    """Unit-rate exponentials ``-log(U)``."""
    return -np.log(uniforms(keys, counters))


@dataclass(frozen=True)
class RngStream:
    """The random stream of one replica: ``seed`` plus a replica index ``substream``."""

    seed: int
    substream: int = 0

    def __post_init__(self):
        if not 0 <= self.seed <= _MASK:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.substream < 0:
            raise ValueError("substream must be non-negative")

    def key(self, purpose: int) -> np.ndarray:
        return stream_keys(self.seed, [self.substream], purpose)

    def normals(self, purpose: int, counters) -> np.ndarray:
        return normals(self.key(purpose), counters)[0]

    def uniforms(self, purpose: int, counters) -> np.ndarray:
        return uniforms(self.key(purpose), counters)[0]

    def exponential(self, purpose: int = KILL, counter: int = 0) -> float:
        return float(exponentials(self.key(purpose), counter)[0])
