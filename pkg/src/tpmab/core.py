"""Domain types and reward arithmetic shared by every other module.

Conventions used throughout the package:

* arms are 0-based indices ``0 .. K-1``;
* rounds are 1-based (``t = 1`` is the first pull), so the logarithms in the
  confidence bounds read exactly like their textbook form;
* the ``j``-th per-round reward of a pull made at round ``t`` (``j`` 1-based)
  is revealed at round ``t + j - 1``. A pull therefore reveals its first value
  in the round it is made and is complete at round ``t + tau_max - 1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

TOL = 1e-9


class TPMABError(Exception):
    """Base class for errors raised by this package."""


class SpecError(TPMABError, ValueError):
    pass


class NonDivisorAlpha(SpecError):
    def __init__(self, alpha: int, tau_max: int) -> None:
        super().__init__(f"alpha={alpha} does not divide tau_max={tau_max}")
        self.alpha = alpha
        self.tau_max = tau_max


class NonPositiveDimension(SpecError):
    pass


class NegativeMaxReward(SpecError):
    pass


class LengthMismatch(TPMABError, ValueError):
    pass


class FuturePull(TPMABError, ValueError):
    pass


class RewardOutOfBounds(TPMABError, ValueError):
    pass


def _positive_int(name: str, value) -> int:
    if isinstance(value, bool) or int(value) != value:
        raise NonPositiveDimension(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if value < 1:
        raise NonPositiveDimension(f"{name} must be >= 1, got {value}")
    return value


@dataclass(frozen=True)
class SmoothnessSpec:
    """Shape of the reward structure: arms, span, smoothness and maxima.

    Parameters
    ----------
    num_arms : int
        Number of arms ``K``.
    tau_max : int
        Number of rounds over which the reward of one pull is spread.
    alpha : int
        Smoothness; must divide ``tau_max``.
    max_reward : tuple of float
        Per-arm upper bound on the cumulative reward of one pull.
    """

    num_arms: int
    tau_max: int
    alpha: int
    max_reward: tuple[float, ...]

    def __post_init__(self) -> None:
        K = _positive_int("num_arms", self.num_arms)
        tau = _positive_int("tau_max", self.tau_max)
        alpha = _positive_int("alpha", self.alpha)
        if alpha > tau:
            raise NonPositiveDimension(f"alpha={alpha} exceeds tau_max={tau}")
        if tau % alpha:
            raise NonDivisorAlpha(alpha, tau)
        rbar = tuple(float(r) for r in np.broadcast_to(np.asarray(self.max_reward, float), (K,)))
        if any(not np.isfinite(r) for r in rbar):
            raise NegativeMaxReward("max_reward must be finite")
        if any(r < 0 for r in rbar):
            raise NegativeMaxReward(f"max_reward must be >= 0, got {rbar}")
        object.__setattr__(self, "num_arms", K)
        object.__setattr__(self, "tau_max", tau)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "max_reward", rbar)

    @property
    def phi(self) -> int:
        """Rounds per bucket, ``tau_max / alpha``."""
        return self.tau_max // self.alpha

    @property
    def rbar(self) -> np.ndarray:
        return np.array(self.max_reward, dtype=float)

    @property
    def bucket_cap(self) -> np.ndarray:
        """Per-arm upper bound of a single bucket sum."""
        return self.rbar / self.alpha

    def with_alpha(self, alpha: int) -> "SmoothnessSpec":
        return SmoothnessSpec(self.num_arms, self.tau_max, alpha, self.max_reward)


def validate_spec(num_arms: int, tau_max: int, alpha: int, max_reward) -> SmoothnessSpec:
    """Build a :class:`SmoothnessSpec`, broadcasting a scalar ``max_reward``."""
    if num_arms is None or tau_max is None or alpha is None or max_reward is None:
        raise SpecError("num_arms, tau_max, alpha and max_reward are all required")
    K = _positive_int("num_arms", num_arms)
    rbar = np.asarray(max_reward, dtype=float)
    if rbar.ndim == 0:
        rbar = np.full(K, float(rbar))
    if rbar.shape != (K,):
        raise LengthMismatch(f"max_reward has {rbar.size} entries for {K} arms")
    return SmoothnessSpec(K, tau_max, alpha, tuple(rbar))


@dataclass(frozen=True, eq=False)
class RewardVector:
    """The per-round rewards produced by a single pull."""

    arm: int
    pull_round: int
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        if values.ndim != 1:
            raise LengthMismatch("reward values must be one-dimensional")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise RewardOutOfBounds("per-round rewards must be finite and non-negative")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class AggregatedRewardVector:
    arm: int
    z_values: np.ndarray


@dataclass(frozen=True, eq=False)
class PullRecord:
    """A pull made at ``pull_round`` together with its (hidden) reward."""

    arm: int
    pull_round: int
    reward: RewardVector = field(repr=False)

    def observed_prefix(self, now: int) -> int:
        """How many per-round values have been revealed by the end of round ``now``."""
        return min(len(self.reward), max(0, now - self.pull_round + 1))


def seq_sum(values) -> float:
    """Left-to-right float sum.

    The simulator kernels accumulate in exactly this order; using it here too
    keeps the two engine backends bit-identical.
    """
    total = 0.0
    for x in values:
        total += float(x)
    return total


def cumulative_reward(v: RewardVector) -> float:
    return seq_sum(v.values)


def check_reward(v: RewardVector, spec: SmoothnessSpec, smooth: bool = True, tol: float = TOL) -> None:
    """Raise if ``v`` violates the bounds declared by ``spec``."""
    if len(v) != spec.tau_max:
        raise LengthMismatch(f"reward has length {len(v)}, expected {spec.tau_max}")
    rbar = spec.max_reward[v.arm]
    if cumulative_reward(v) > rbar + tol:
        raise RewardOutOfBounds(f"cumulative reward exceeds max_reward={rbar}")
    if smooth:
        z = aggregate(v, spec).z_values
        if z.max(initial=0.0) > rbar / spec.alpha + tol:
            raise RewardOutOfBounds(f"bucket sum exceeds cap {rbar / spec.alpha}")


def aggregate(v: RewardVector, spec: SmoothnessSpec) -> AggregatedRewardVector:
    """Bucket sums over consecutive groups of ``phi`` per-round rewards."""
    if len(v) != spec.tau_max:
        raise LengthMismatch(f"reward has length {len(v)}, expected {spec.tau_max}")
    z = v.values.reshape(spec.alpha, spec.phi).sum(axis=1)
    return AggregatedRewardVector(v.arm, z)


def fictitious_cumulative(p: PullRecord, now: int, tau_max: int | None = None) -> float:
    """Sum of the values of ``p`` revealed by the end of round ``now``.

    Unrevealed values count as zero. ``tau_max`` is only used to check the
    record's length when given.
    """
    if p.pull_round > now:
        raise FuturePull(f"pull at round {p.pull_round} is after round {now}")
    if tau_max is not None and len(p.reward) != tau_max:
        raise LengthMismatch(f"reward has length {len(p.reward)}, expected {tau_max}")
    return seq_sum(p.reward.values[: p.observed_prefix(now)])


def as_rewards(arm: int, pull_round: int, values: Sequence[float]) -> RewardVector:
    return RewardVector(arm, pull_round, np.asarray(values, dtype=float))
