"""Reward generators: smooth synthetic environments and replay pools."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
from numba import njit

from .core import RewardVector, SmoothnessSpec, TPMABError, LengthMismatch, validate_spec
from .rng import Stream, new_stream, next_beta, next_uniform, pull_key

if TYPE_CHECKING:
    from .ingest import SessionPool

SPLITS = ("random-simplex", "equal", "terminal")
DISTRIBUTIONS = ("beta", "point")

SYNTHETIC = 0
REPLAY = 1


class EmptyPool(TPMABError, ValueError):
    pass


class UnknownScenario(TPMABError, KeyError):
    pass


@njit(cache=True)
def draw_into(out, zout, arm, env_kind, a, b, cap, split, point_mass, pool, offsets, stream):
    """Fill ``out`` with one reward vector for ``arm``.

    When ``zout`` is non-empty the synthetic bucket totals are written to it
    before they are split, so callers can audit the split.

    Synthetic: draw one scaled Beta value per bucket, then spread it over the
    bucket's rounds (0 random simplex, 1 equal parts, 2 all on the last round).
    Replay: copy a uniformly chosen pooled vector.
    """
    tau = out.shape[0]
    if env_kind == 1:
        n = offsets[arm + 1] - offsets[arm]
        idx = int(next_uniform(stream) * n)
        if idx >= n:
            idx = n - 1
        row = offsets[arm] + idx
        for j in range(tau):
            out[j] = pool[row, j]
        return
    alpha = a.shape[1]
    phi = tau // alpha
    c = cap[arm]
    for k in range(alpha):
        ak = a[arm, k]
        bk = b[arm, k]
        if point_mass:
            z = c * (ak / (ak + bk))
        else:
            z = c * next_beta(ak, bk, stream)
        if zout.shape[0] > 0:
            zout[k] = z
        base = k * phi
        if phi == 1:
            out[base] = z
        elif split == 1:
            part = z / phi
            for r in range(phi):
                out[base + r] = part
        elif split == 2:
            for r in range(phi - 1):
                out[base + r] = 0.0
            out[base + phi - 1] = z
        else:
            tot = 0.0
            for r in range(phi):
                e = -math.log(next_uniform(stream))
                out[base + r] = e
                tot += e
            for r in range(phi):
                out[base + r] = z * (out[base + r] / tot)


@dataclass(frozen=True)
class SyntheticEnv:
    """Each bucket sum is ``(max_reward / alpha) * Beta(a[i, k], b[i, k])``.

    ``a`` and ``b`` have shape ``(K, alpha)``; ``a = b = 1`` is the uniform
    case. ``distribution="point"`` replaces every Beta draw by its mean, which
    gives a deterministic environment.
    """

    spec: SmoothnessSpec
    a: np.ndarray
    b: np.ndarray
    split: str = "random-simplex"
    distribution: str = "beta"
    name: str = ""

    def __post_init__(self) -> None:
        shape = (self.spec.num_arms, self.spec.alpha)
        a = np.array(np.broadcast_to(np.asarray(self.a, float), shape))
        b = np.array(np.broadcast_to(np.asarray(self.b, float), shape))
        if np.any(~np.isfinite(a)) or np.any(~np.isfinite(b)) or np.any(a <= 0) or np.any(b <= 0):
            raise ValueError("Beta shape parameters must be finite and > 0")
        if self.split not in SPLITS:
            raise ValueError(f"unknown split {self.split!r}; expected one of {SPLITS}")
        if self.distribution not in DISTRIBUTIONS:
            raise ValueError(f"unknown distribution {self.distribution!r}")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def num_arms(self) -> int:
        return self.spec.num_arms

    def true_means(self) -> np.ndarray:
        cap = self.spec.bucket_cap[:, None]
        return (cap * (self.a / (self.a + self.b))).sum(axis=1)

    def kernel_args(self) -> tuple:
        empty = np.zeros((0, self.spec.tau_max))
        return (
            SYNTHETIC,
            self.a,
            self.b,
            self.spec.bucket_cap,
            SPLITS.index(self.split),
            self.distribution == "point",
            empty,
            np.zeros(self.num_arms + 1, dtype=np.int64),
        )

    def draw(self, arm: int, stream: Stream, pull_round: int = 1) -> RewardVector:
        return _draw(self, arm, stream, pull_round)

    def sample(self, arm: int, n: int, seed: int = 0) -> np.ndarray:
        """``n`` reward vectors for ``arm`` as an ``(n, tau_max)`` array."""
        return _sample(self, arm, n, seed)

    def sample_buckets(self, arm: int, n: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
        """Like :meth:`sample`, also returning the ``(n, alpha)`` bucket totals drawn before splitting."""
        return _sample(self, arm, n, seed, buckets=True)


@dataclass(frozen=True)
class ReplayEnv:
    """Samples stored reward vectors uniformly with replacement."""

    pool: "SessionPool"
    name: str = "replay"
    _values: np.ndarray = field(init=False, repr=False)
    _offsets: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        blocks = self.pool.vectors
        if len(blocks) != self.pool.spec.num_arms:
            raise LengthMismatch("pool has a different number of arms than its spec")
        for i, block in enumerate(blocks):
            if len(block) == 0:
                raise EmptyPool(f"arm {i} has no pooled vectors")
        values = np.ascontiguousarray(np.vstack(blocks), dtype=float)
        offsets = np.zeros(len(blocks) + 1, dtype=np.int64)
        offsets[1:] = np.cumsum([len(block) for block in blocks])
        object.__setattr__(self, "_values", values)
        object.__setattr__(self, "_offsets", offsets)

    @property
    def spec(self) -> SmoothnessSpec:
        return self.pool.spec

    @property
    def num_arms(self) -> int:
        return self.spec.num_arms

    def true_means(self) -> np.ndarray:
        return np.array([block.sum(axis=1).mean() for block in self.pool.vectors])

    def kernel_args(self) -> tuple:
        K, alpha = self.spec.num_arms, self.spec.alpha
        ones = np.ones((K, alpha))
        return (REPLAY, ones, ones, self.spec.bucket_cap, 0, False, self._values, self._offsets)

    def draw(self, arm: int, stream: Stream, pull_round: int = 1) -> RewardVector:
        return _draw(self, arm, stream, pull_round)

    def sample(self, arm: int, n: int, seed: int = 0) -> np.ndarray:
        return _sample(self, arm, n, seed)


Environment = SyntheticEnv | ReplayEnv


_NO_BUCKETS = np.zeros(0)


def _draw(env, arm: int, stream: Stream, pull_round: int) -> RewardVector:
    if not 0 <= arm < env.num_arms:
        raise IndexError(f"arm {arm} out of range for {env.num_arms} arms")
    out = np.empty(env.spec.tau_max)
    draw_into(out, _NO_BUCKETS, arm, *env.kernel_args(), stream.state)
    return RewardVector(arm, pull_round, out)


@njit(cache=True)
def _sample_kernel(out, zout, arm, seed, env_kind, a, b, cap, split, point_mass, pool, offsets):
    for r in range(out.shape[0]):
        stream = new_stream(pull_key(seed, 0, r + 1, arm))
        draw_into(out[r], zout[r], arm, env_kind, a, b, cap, split, point_mass, pool, offsets, stream)


def _sample(env, arm: int, n: int, seed: int, buckets: bool = False):
    out = np.empty((n, env.spec.tau_max))
    zout = np.zeros((n, env.spec.alpha if buckets else 0))
    _sample_kernel(out, zout, arm, seed, *env.kernel_args())
    return (out, zout) if buckets else out


def draw(env: Environment, arm: int, stream: Stream, pull_round: int = 1) -> RewardVector:
    return env.draw(arm, stream, pull_round)


def true_means(env: Environment) -> np.ndarray:
    return env.true_means()


# ---------------------------------------------------------------------------
# Scenario library
# ---------------------------------------------------------------------------

_SETTING23 = {
    (100, 10): (
        [7, 7, 1, 5, 9, 8, 7, 5, 8, 6],
        [10, 4, 9, 3, 5, 3, 2, 10, 5, 9],
    ),
    (200, 20): (
        [10, 3, 5, 2, 2, 6, 8, 9, 2, 6, 7, 6, 10, 4, 9, 8, 8, 9, 5, 1],
        [9, 1, 2, 7, 1, 10, 8, 6, 4, 6, 2, 4, 10, 4, 4, 3, 9, 8, 2, 2],
    ),
    (100, 50): (
        [6, 9, 8, 2, 5, 9, 5, 2, 9, 6, 9, 4, 10, 9, 10, 5, 8, 2, 10, 7, 6, 10, 4, 5, 3,
         4, 3, 1, 10, 5, 8, 2, 2, 3, 3, 1, 2, 9, 7, 9, 5, 9, 4, 4, 10, 7, 10, 5, 8, 8],
        [6, 2, 6, 10, 2, 8, 10, 6, 4, 4, 1, 5, 2, 4, 6, 3, 6, 7, 1, 2, 3, 4, 1, 10, 9,
         10, 2, 1, 2, 4, 10, 10, 2, 7, 2, 6, 2, 1, 10, 1, 4, 3, 2, 8, 4, 1, 1, 9, 7, 10],
    ),
    (200, 100): (
        [2, 5, 2, 4, 2, 5, 6, 7, 3, 1, 9, 8, 1, 10, 2, 7, 4, 5, 6, 8, 10, 3, 4, 1, 3,
         3, 6, 9, 5, 2, 10, 8, 3, 1, 8, 7, 10, 9, 5, 6, 7, 5, 3, 9, 1, 8, 2, 6, 1, 9,
         5, 3, 4, 8, 6, 10, 5, 6, 10, 10, 3, 5, 7, 7, 2, 1, 10, 4, 6, 3, 4, 4, 8, 7, 10,
         7, 1, 7, 10, 7, 1, 3, 8, 2, 5, 3, 8, 9, 8, 9, 10, 1, 1, 8, 6, 5, 8, 1, 7, 4],
        [9, 2, 3, 1, 7, 7, 6, 1, 4, 1, 1, 9, 10, 2, 4, 2, 10, 4, 5, 5, 3, 2, 8, 7, 2,
         1, 5, 8, 2, 5, 3, 9, 6, 2, 3, 5, 1, 1, 1, 4, 5, 9, 6, 6, 10, 1, 10, 8, 8, 7,
         6, 9, 3, 4, 7, 10, 5, 1, 3, 3, 5, 6, 6, 6, 2, 6, 10, 1, 1, 5, 3, 3, 10, 5, 6,
         7, 9, 3, 5, 2, 8, 4, 1, 5, 3, 9, 2, 5, 7, 6, 5, 7, 2, 2, 9, 8, 8, 6, 6, 2],
    ),
}

_SETTING4 = [
    ([8, 2, 8, 7, 1, 5, 6, 3, 3, 10], [7, 2, 2, 2, 4, 4, 1, 7, 1, 2]),
    ([7, 9, 9, 5, 8, 8, 10, 4, 7, 2], [6, 4, 5, 10, 3, 7, 4, 6, 2, 2]),
    ([1, 9, 8, 4, 2, 8, 7, 5, 4, 1], [4, 10, 3, 2, 4, 8, 7, 6, 9, 3]),
    ([2, 10, 8, 3, 10, 7, 7, 9, 8, 6], [8, 8, 4, 9, 10, 4, 1, 6, 6, 6]),
    ([1, 9, 3, 5, 10, 3, 7, 10, 5, 8], [2, 2, 9, 1, 2, 4, 3, 1, 5, 1]),
    ([8, 6, 3, 3, 8, 6, 9, 7, 9, 9], [1, 10, 2, 9, 10, 2, 7, 4, 5, 9]),
    ([10, 7, 8, 7, 10, 10, 4, 1, 1, 3], [5, 9, 10, 5, 6, 2, 8, 5, 5, 7]),
    ([7, 7, 1, 3, 3, 4, 5, 6, 1, 1], [8, 7, 3, 8, 10, 2, 3, 6, 7, 1]),
    ([10, 8, 7, 8, 1, 2, 8, 3, 1, 1], [10, 10, 3, 6, 2, 9, 6, 4, 7, 8]),
    ([2, 1, 10, 8, 10, 6, 2, 10, 5, 3], [7, 5, 2, 9, 4, 1, 7, 8, 6, 4]),
]

SETTING2_GRID = ((100, 10), (200, 20), (100, 50), (200, 100))
NUM_ARMS = 10


def _rising(alpha: int) -> list[int]:
    # [2, 4, ..., alpha, alpha, ..., alpha]
    return [min(2 * k, alpha) for k in range(1, alpha + 1)]


def scenario_names() -> list[str]:
    names = ["setting1", "setting5"]
    for variant in ("2", "2.1", "2.2", "2.3"):
        names += [f"setting{variant}-{tau}-{alpha}" for tau, alpha in SETTING2_GRID]
    names += [f"setting4-scenario{i}" for i in range(1, len(_SETTING4) + 1)]
    return names


def scenario_library(name: str, split: str = "random-simplex") -> SyntheticEnv:
    """Environment for one of the named experimental settings.

    ``setting1`` (alias ``setting5``): 10 arms, ``tau_max=100``, ``alpha=20``,
    uniform buckets, ``max_reward[i] = 100 (i + 1)``.
    ``setting2-<tau>-<alpha>``: uniform buckets with ``max_reward[i] = tau (i + 1)``.
    ``setting2.1/2.2/2.3-<tau>-<alpha>``: same arms with rising, falling and
    randomly drawn Beta shapes. ``setting4-scenario<n>``: ``tau_max=100``,
    ``alpha=10`` with the n-th tabulated shape pair.
    """
    K = NUM_ARMS
    ranks = np.arange(1, K + 1, dtype=float)
    if name in ("setting1", "setting5"):
        spec = validate_spec(K, 100, 20, 100 * ranks)
        return SyntheticEnv(spec, 1.0, 1.0, split=split, name=name)
    m = re.fullmatch(r"setting(2|2\.1|2\.2|2\.3)-(\d+)-(\d+)", name)
    if m:
        variant, tau, alpha = m.group(1), int(m.group(2)), int(m.group(3))
        spec = validate_spec(K, tau, alpha, tau * ranks)
        if variant == "2":
            a, b = [1] * alpha, [1] * alpha
        elif variant in ("2.1", "2.2"):
            if (tau, alpha) not in SETTING2_GRID:
                raise UnknownScenario(name)
            a = _rising(alpha)
            b = a[::-1]
            if variant == "2.2":
                a, b = b, a
        else:
            if (tau, alpha) not in _SETTING23:
                raise UnknownScenario(name)
            a, b = _SETTING23[(tau, alpha)]
        return SyntheticEnv(spec, np.tile(a, (K, 1)), np.tile(b, (K, 1)), split=split, name=name)
    m = re.fullmatch(r"setting4-scenario(\d+)", name)
    if m and 1 <= int(m.group(1)) <= len(_SETTING4):
        a, b = _SETTING4[int(m.group(1)) - 1]
        spec = validate_spec(K, 100, 10, 100 * ranks)
        return SyntheticEnv(spec, np.tile(a, (K, 1)), np.tile(b, (K, 1)), split=split, name=name)
    raise UnknownScenario(name)
