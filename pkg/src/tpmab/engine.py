"""Round loop, delayed delivery, pseudo-regret accounting and replication."""
from __future__ import annotations

import logging
import zlib
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from . import _kernel
from .core import PullRecord, TPMABError, cumulative_reward
from .environments import Environment
from .policies import DELAYED_UCB1, TP_UCB_EW, TP_UCB_FR, UCB1, PolicyConfig
from .rng import Stream

logger = logging.getLogger(__name__)

_KERNEL_KIND = {UCB1: _kernel.K_UCB1, DELAYED_UCB1: _kernel.K_DELAYED, TP_UCB_FR: _kernel.K_FR, TP_UCB_EW: _kernel.K_EW}


class HorizonTooShort(TPMABError, ValueError):
    pass


class DeliveryQueue:
    """Active pulls and the per-round values they still owe.

    At round ``m`` every pull made at ``t`` with ``1 <= m - t + 1 <= tau_max``
    delivers its ``(m - t + 1)``-th value; after ``tau_max`` deliveries the pull
    is retired. In clairvoyant mode a pull delivers its cumulative reward once,
    in its own round.
    """

    def __init__(self, tau_max: int, clairvoyant: bool = False) -> None:
        self.tau_max = tau_max
        self.clairvoyant = clairvoyant
        self.round = 0
        self._active: deque[PullRecord] = deque()

    def __len__(self) -> int:
        return len(self._active)

    def push(self, record: PullRecord) -> None:
        if self._active and record.pull_round <= self._active[-1].pull_round:
            raise ValueError("pulls must be pushed in increasing round order")
        self._active.append(record)

    def deliver(self, t: int) -> list[tuple[PullRecord, float]]:
        if t <= self.round:
            raise ValueError(f"round {t} already delivered")
        self.round = t
        out = []
        if self.clairvoyant:
            while self._active:
                rec = self._active.popleft()
                if rec.pull_round == t:
                    out.append((rec, cumulative_reward(rec.reward)))
            return out
        while self._active and self._active[0].pull_round <= t - self.tau_max:
            self._active.popleft()
        for rec in self._active:
            j = t - rec.pull_round + 1
            if j >= 1:
                out.append((rec, float(rec.reward.values[j - 1])))
        while self._active and self._active[0].pull_round <= t - self.tau_max + 1:
            self._active.popleft()
        return out


def deliver(queue: DeliveryQueue, t: int) -> list[tuple[PullRecord, float]]:
    return queue.deliver(t)


@dataclass
class RegretTrajectory:
    """Cumulative pseudo-regret after each round of one seeded episode."""

    regret: np.ndarray
    pull_counts: np.ndarray
    seed: int
    arms: np.ndarray = field(repr=False)

    @property
    def final(self) -> float:
        return float(self.regret[-1])


def policy_salt(label: str) -> int:
    return zlib.crc32(label.encode())


def _check_horizon(config: PolicyConfig, env: Environment, horizon: int) -> None:
    K, tau = env.spec.num_arms, env.spec.tau_max
    if horizon < K:
        raise HorizonTooShort(f"horizon {horizon} is shorter than the {K} initial pulls")
    if config.kind == DELAYED_UCB1 and horizon < tau:
        raise HorizonTooShort(f"Delayed-UCB1 needs horizon >= tau_max={tau}, got {horizon}")


def _trajectory(env: Environment, arms: np.ndarray, seed: int) -> RegretTrajectory:
    means = env.true_means()
    gaps = means.max() - means
    regret = np.cumsum(gaps[arms])
    counts = np.bincount(arms, minlength=env.spec.num_arms)
    return RegretTrajectory(regret, counts, seed, arms)


def run_episode(
    config: PolicyConfig,
    env: Environment,
    horizon: int,
    seed: int,
    *,
    shared_randomness: bool = True,
    backend: str = "compiled",
) -> RegretTrajectory:
    """Simulate one episode of ``config`` on ``env``.

    With ``shared_randomness`` every policy run with the same seed sees the
    same reward for a given (round, arm); otherwise the stream is salted by
    the policy label. ``backend="python"`` drives the reference policy
    objects through a :class:`DeliveryQueue`; ``"compiled"`` runs the
    equivalent numba kernel.
    """
    _check_horizon(config, env, horizon)
    spec = env.spec
    salt = 0 if shared_randomness else policy_salt(config.label(spec))
    if backend == "compiled":
        arms = _kernel.simulate(
            _KERNEL_KIND[config.kind],
            config.resolved_eta(spec),
            config.matched_log,
            config.empty_bucket == "cap",
            spec.rbar,
            int(horizon),
            spec.tau_max,
            *env.kernel_args(),
            int(seed),
            salt,
        )
    elif backend == "python":
        arms = _run_python(config, env, horizon, seed, salt)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    return _trajectory(env, arms, seed)


def _run_python(config: PolicyConfig, env: Environment, horizon: int, seed: int, salt: int) -> np.ndarray:
    policy = config.build(env.spec)
    queue = DeliveryQueue(env.spec.tau_max, clairvoyant=policy.clairvoyant)
    arms = np.empty(horizon, dtype=np.int64)
    for t in range(1, horizon + 1):
        arm = policy.select(t)
        reward = env.draw(arm, Stream.for_pull(seed, t, arm, salt), pull_round=t)
        queue.push(PullRecord(arm, t, reward))
        policy.observe(queue.deliver(t), t)
        arms[t - 1] = arm
    return arms


# ---------------------------------------------------------------------------
# Replication
# ---------------------------------------------------------------------------


def checkpoint_grid(horizon: int, dense_until: int = 1000, stride: int = 100) -> np.ndarray:
    """Every round up to ``dense_until``, then every ``stride`` rounds, plus the last."""
    dense = np.arange(1, min(horizon, dense_until) + 1)
    sparse = np.arange(dense_until + stride, horizon + 1, stride)
    grid = np.concatenate([dense, sparse])
    if grid[-1] != horizon:
        grid = np.append(grid, horizon)
    return grid.astype(np.int64)


def t_interval(samples: np.ndarray, confidence: float = 0.95, axis: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Mean and Student-t half-width along ``axis``."""
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[axis]
    mean = samples.mean(axis=axis)
    if n < 2:
        return mean, np.full_like(mean, np.nan)
    sd = samples.std(axis=axis, ddof=1)
    q = stats.t.ppf(0.5 + confidence / 2.0, n - 1)
    return mean, q * sd / np.sqrt(n)


@dataclass
class AggregateResult:
    label: str
    rounds: np.ndarray
    mean: np.ndarray
    half_width: np.ndarray
    runs: int
    finals: np.ndarray = field(repr=False)
    pull_counts: np.ndarray = field(repr=False)
    regret_percent: float | None = None
    regret_percent_half_width: float | None = None

    @property
    def final_mean(self) -> float:
        return float(self.mean[-1])

    @property
    def final_half_width(self) -> float:
        return float(self.half_width[-1])

    def at(self, round_: int) -> float:
        """Mean regret at a checkpoint round."""
        idx = np.searchsorted(self.rounds, round_)
        if idx >= len(self.rounds) or self.rounds[idx] != round_:
            raise KeyError(f"round {round_} is not a checkpoint")
        return float(self.mean[idx])


def _episode_task(args):
    config, env, horizon, seed, shared, rounds = args
    traj = run_episode(config, env, horizon, seed, shared_randomness=shared)
    return traj.regret[rounds - 1], traj.pull_counts


def replicate(
    env: Environment,
    policies: Sequence[PolicyConfig],
    horizon: int,
    runs: int,
    *,
    base_seed: int = 0,
    workers: int = 1,
    shared_randomness: bool = True,
    checkpoints: np.ndarray | None = None,
    confidence: float = 0.95,
) -> dict[str, AggregateResult]:
    """Run ``runs`` seeded episodes per policy and aggregate them.

    Run ``r`` uses seed ``base_seed + r``. Results are keyed by policy label,
    in input order. When a Delayed-UCB1 policy is present its final mean
    regret is the reference for ``regret_percent``.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    rounds = checkpoint_grid(horizon) if checkpoints is None else np.asarray(checkpoints, dtype=np.int64)
    labels = [p.label(env.spec) for p in policies]
    if len(set(labels)) != len(labels):
        raise ValueError(f"duplicate policy labels in {labels}")
    for p in policies:
        _check_horizon(p, env, horizon)
    tasks = [(p, env, horizon, base_seed + r, shared_randomness, rounds) for p in policies for r in range(runs)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(_episode_task, tasks))
    else:
        outputs = [_episode_task(task) for task in tasks]

    results: dict[str, AggregateResult] = {}
    for n, (p, label) in enumerate(zip(policies, labels)):
        chunk = outputs[n * runs:(n + 1) * runs]
        table = np.vstack([c[0] for c in chunk])
        counts = np.vstack([c[1] for c in chunk])
        mean, hw = t_interval(table, confidence)
        results[label] = AggregateResult(label, rounds, mean, hw, runs, table[:, -1].copy(), counts)
        logger.info("%s: final regret %.1f +- %.1f", label, mean[-1], hw[-1])

    ref = next((label for p, label in zip(policies, labels) if p.kind == DELAYED_UCB1), None)
    if ref is not None:
        ref_final = results[ref].finals
        for res in results.values():
            if ref_final.mean() > 0:
                res.regret_percent = 100.0 * (res.finals.mean() / ref_final.mean())
                # delta method on the ratio of means, paired by seed
                ratio = res.finals.mean() / ref_final.mean()
                resid = (res.finals - ratio * ref_final) / ref_final.mean()
                if runs > 1:
                    _, hw = t_interval(resid, confidence)
                    res.regret_percent_half_width = float(100.0 * hw)
    return results
