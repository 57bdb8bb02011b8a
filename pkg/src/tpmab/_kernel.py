"""Compiled episode loop.

Mirrors :mod:`tpmab.policies` + :class:`tpmab.engine.DeliveryQueue` exactly
(same accumulation order, same index expressions); the test-suite checks that
both routes emit identical arm sequences.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

from .environments import draw_into
from .rng import new_stream, pull_key

K_UCB1 = 0
K_DELAYED = 1
K_FR = 2
K_EW = 3


@njit(cache=True)
def simulate(kind, eta, matched_log, empty_cap, rbar, horizon, tau,
             env_kind, a, b, cap, split, point_mass, pool, offsets,
             seed, salt):
    """Run one episode and return the 0-based arm pulled at each round."""
    K = rbar.shape[0]
    phi = tau // eta
    arms = np.empty(horizon, dtype=np.int64)

    pulls = np.zeros(K, dtype=np.int64)
    complete = np.zeros(K, dtype=np.int64)
    complete_sum = np.zeros(K)
    observed_sum = np.zeros(K)
    bucket_counts = np.zeros((K, eta), dtype=np.int64)
    bucket_sums = np.zeros((K, eta))

    # ring buffer of pending pulls, slot = round % tau
    ring_vals = np.zeros((tau, tau))
    ring_arm = np.zeros(tau, dtype=np.int64)
    ring_partial = np.zeros(tau)
    ring_bucket = np.zeros(tau)

    init = tau if kind == K_DELAYED else K
    no_buckets = np.zeros(0)

    for t in range(1, horizon + 1):
        # -- select ----------------------------------------------------
        if t <= init:
            if kind == K_DELAYED:
                arm = (t - 1) % K
            else:
                arm = t - 1
        else:
            if kind == K_UCB1 and not matched_log:
                lg = math.log(t)
            else:
                lg = math.log(t - 1)
            best = -np.inf
            arm = 0
            for i in range(K):
                if kind == K_UCB1:
                    n = pulls[i]
                    if n == 0:
                        u = np.inf
                    else:
                        mean = complete_sum[i] / n
                        u = mean + rbar[i] * math.sqrt(2.0 * lg / n)
                elif kind == K_DELAYED:
                    s = complete[i]
                    if s == 0:
                        u = np.inf
                    else:
                        mean = complete_sum[i] / s
                        u = mean + rbar[i] * math.sqrt(2.0 * lg / s)
                elif kind == K_FR:
                    n = pulls[i]
                    if n == 0:
                        u = np.inf
                    else:
                        mean = observed_sum[i] / n
                        bonus = rbar[i] * math.sqrt(2.0 * lg / (eta * n)) + phi * (eta + 1) * rbar[i] / (2.0 * n)
                        u = mean + bonus
                else:
                    u = 0.0
                    scale = rbar[i] / eta
                    for k in range(eta):
                        nk = bucket_counts[i, k]
                        if nk == 0:
                            if not empty_cap:
                                u = np.inf
                                break
                            u += scale
                        else:
                            u += bucket_sums[i, k] / nk + scale * math.sqrt(2.0 * lg / nk)
                if u > best:
                    best = u
                    arm = i
        arms[t - 1] = arm

        # -- pull --------------------------------------------------------
        slot = t % tau
        stream = new_stream(pull_key(seed, salt, t, arm))
        draw_into(ring_vals[slot], no_buckets, arm, env_kind, a, b, cap, split, point_mass, pool, offsets, stream)

        if kind == K_UCB1:
            cum = 0.0
            for j in range(tau):
                cum += ring_vals[slot, j]
            pulls[arm] += 1
            complete[arm] += 1
            complete_sum[arm] += cum
            observed_sum[arm] += cum
            continue

        ring_arm[slot] = arm
        ring_partial[slot] = 0.0
        ring_bucket[slot] = 0.0
        pulls[arm] += 1

        # -- deliver values revealed this round, oldest pull first --------
        h0 = t - tau + 1
        if h0 < 1:
            h0 = 1
        for h in range(h0, t + 1):
            sl = h % tau
            j = t - h + 1
            i = ring_arm[sl]
            v = ring_vals[sl, j - 1]
            ring_partial[sl] += v
            observed_sum[i] += v
            if kind == K_EW:
                ring_bucket[sl] += v
                if j % phi == 0:
                    k = j // phi - 1
                    bucket_counts[i, k] += 1
                    bucket_sums[i, k] += ring_bucket[sl]
                    ring_bucket[sl] = 0.0
            if j == tau:
                complete[i] += 1
                complete_sum[i] += ring_partial[sl]
    return arms
