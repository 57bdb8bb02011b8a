"""Counter-based random streams.

Every pull owns an independent stream keyed by ``(seed, salt, round, arm)``.
The ``n``-th output of a stream is ``mix64(key + (n + 1) * GOLDEN)`` (the
SplitMix64 output function evaluated at a counter), so draws never depend on
the order in which pulls are simulated. Two policies run with the same seed
and salt therefore see the same reward for the same (round, arm) pair, which
gives common random numbers across policies for free.

All functions are numba-compiled so the episode kernels can call them; they
also work from plain Python.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_R1 = np.uint64(0xD1B54A32D192ED03)
_R2 = np.uint64(0xABC98388FB8FAC03)
_R3 = np.uint64(0x8CB92BA72F3D8DD7)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True)
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True)
def pull_key(seed, salt, round_, arm):
    """Stream key for the pull of ``arm`` at ``round_``."""
    k = mix64(np.uint64(seed) + GOLDEN)
    k = mix64(k ^ (np.uint64(salt) * _R1))
    k = mix64(k ^ (np.uint64(round_) * _R2))
    return mix64(k ^ (np.uint64(arm) * _R3))


@njit(cache=True)
def new_stream(key):
    s = np.empty(2, dtype=np.uint64)
    s[0] = key
    s[1] = np.uint64(0)
    return s


@njit(cache=True)
def next_u64(stream):
    stream[1] += _ONE
    return mix64(stream[0] + stream[1] * GOLDEN)


@njit(cache=True)
def next_uniform(stream):
    """Uniform double in the open interval (0, 1)."""
    return (float(next_u64(stream) >> _S11) + 0.5) * _INV53


@njit(cache=True)
def next_normal(stream):
    u1 = next_uniform(stream)
    u2 = next_uniform(stream)
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


@njit(cache=True)
def next_gamma(shape, stream):
    # Marsaglia-Tsang; shapes below one are boosted by U^(1/shape).
    boost = shape < 1.0
    k = shape + 1.0 if boost else shape
    d = k - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    while True:
        x = next_normal(stream)
        v = 1.0 + c * x
        if v <= 0.0:
            continue
        v = v * v * v
        u = next_uniform(stream)
        if u < 1.0 - 0.0331 * x * x * x * x:
            break
        if math.log(u) < 0.5 * x * x + d * (1.0 - v + math.log(v)):
            break
    g = d * v
    if boost:
        g *= next_uniform(stream) ** (1.0 / shape)
    return g


@njit(cache=True)
def next_beta(a, b, stream):
    if a == 1.0 and b == 1.0:
        return next_uniform(stream)
    x = next_gamma(a, stream)
    y = next_gamma(b, stream)
    return x / (x + y)


class Stream:
    """Python handle on a counter-based stream (``draw`` takes one of these)."""

    __slots__ = ("state",)

    def __init__(self, key: int) -> None:
        self.state = new_stream(np.uint64(key))

    @classmethod
    def for_pull(cls, seed: int, round_: int, arm: int, salt: int = 0) -> "Stream":
        return cls(int(pull_key(seed, salt, round_, arm)))

    def uniform(self) -> float:
        return next_uniform(self.state)

    def beta(self, a: float, b: float) -> float:
        return next_beta(float(a), float(b), self.state)
