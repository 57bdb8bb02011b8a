from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tpmab.core import RewardVector, SmoothnessSpec, aggregate, check_reward, cumulative_reward
from tpmab.environments import (
    EmptyPool,
    ReplayEnv,
    SyntheticEnv,
    UnknownScenario,
    scenario_library,
    scenario_names,
)
from tpmab.ingest import SessionPool, pool_spec
from tpmab.rng import Stream


def test_setting1_scenario():
    env = scenario_library("setting1")
    spec = env.spec
    assert (spec.num_arms, spec.tau_max, spec.alpha, spec.phi) == (10, 100, 20, 5)
    assert spec.max_reward == tuple(100.0 * (i + 1) for i in range(10))
    assert np.all(env.a == 1.0) and np.all(env.b == 1.0)
    np.testing.assert_allclose(env.true_means(), 50.0 * np.arange(1, 11))


def test_setting21_vectors():
    env = scenario_library("setting2.1-100-10")
    assert env.a[0].tolist() == [2, 4, 6, 8, 10, 10, 10, 10, 10, 10]
    assert env.b[0].tolist() == [10, 10, 10, 10, 10, 10, 8, 6, 4, 2]
    assert env.spec.max_reward[3] == 400.0


def test_setting22_swaps_setting21():
    early = scenario_library("setting2.1-200-100")
    late = scenario_library("setting2.2-200-100")
    np.testing.assert_array_equal(early.a, late.b)
    np.testing.assert_array_equal(early.b, late.a)


def test_setting4_scenario1():
    env = scenario_library("setting4-scenario1")
    assert env.a[0].tolist() == [8, 2, 8, 7, 1, 5, 6, 3, 3, 10]
    assert env.b[0].tolist() == [7, 2, 2, 2, 4, 4, 1, 7, 1, 2]
    assert (env.spec.tau_max, env.spec.alpha) == (100, 10)


def test_unknown_scenario():
    with pytest.raises(UnknownScenario):
        scenario_library("setting9")


def test_every_library_scenario_builds():
    for name in scenario_names():
        env = scenario_library(name)
        mu = env.true_means()
        assert np.all(mu > 0) and np.all(mu <= env.spec.rbar)


def test_setting1_draw_within_caps():
    env = scenario_library("setting1")
    for arm in range(10):
        v = env.draw(arm, Stream.for_pull(0, 1, arm))
        z = aggregate(v, env.spec).z_values
        assert np.all(z >= 0) and np.all(z <= 100 * (arm + 1) / 20)


def test_equal_split():
    env = scenario_library("setting1", split="equal")
    v, z = env.sample_buckets(3, 50, seed=4)
    np.testing.assert_allclose(v.reshape(50, 20, 5), np.repeat(z[:, :, None] / 5, 5, axis=2), rtol=1e-15)


def test_terminal_split():
    env = scenario_library("setting1", split="terminal")
    v, z = env.sample_buckets(3, 50, seed=4)
    blocks = v.reshape(50, 20, 5)
    assert np.all(blocks[:, :, :4] == 0.0)
    np.testing.assert_array_equal(blocks[:, :, 4], z)


@pytest.mark.parametrize("split", ["random-simplex", "equal", "terminal"])
def test_split_conserves_bucket_totals(split):
    env = scenario_library("setting2.3-100-10", split=split)
    v, z = env.sample_buckets(9, 500, seed=1)
    sums = v.reshape(500, 10, 10).sum(axis=2)
    np.testing.assert_allclose(sums, z, rtol=1e-12)


def test_point_mass_is_deterministic():
    spec = SmoothnessSpec(2, 6, 3, (30.0, 60.0))
    env = SyntheticEnv(spec, a=2.0, b=[[1.0], [3.0]], distribution="point")
    mu = env.true_means()
    np.testing.assert_allclose(mu, [20.0, 24.0])
    for seed in range(5):
        for arm in range(2):
            assert cumulative_reward(env.draw(arm, Stream.for_pull(seed, 1, arm))) == pytest.approx(mu[arm], rel=1e-12)


def test_single_arm_point_mass_mean():
    env = SyntheticEnv(SmoothnessSpec(1, 1, 1, (8.0,)), a=1.0, b=3.0, distribution="point")
    assert env.true_means().tolist() == [2.0]


def test_sample_mean_matches_true_means():
    env = scenario_library("setting2.1-100-10")
    mu = env.true_means()
    for arm in (0, 5, 9):
        totals = env.sample(arm, 100_000, seed=11).sum(axis=1)
        se = totals.std(ddof=1) / np.sqrt(totals.size)
        assert abs(totals.mean() - mu[arm]) < 3 * se


def test_identical_seeds_identical_draws():
    env = scenario_library("setting1")
    np.testing.assert_array_equal(env.sample(4, 100, seed=3), env.sample(4, 100, seed=3))
    assert not np.array_equal(env.sample(4, 100, seed=3), env.sample(4, 100, seed=4))


def test_draw_matches_sample():
    env = scenario_library("setting1")
    rows = env.sample(2, 3, seed=8)
    for r in range(3):
        np.testing.assert_array_equal(env.draw(2, Stream.for_pull(8, r + 1, 2)).values, rows[r])


def test_invalid_parameters():
    spec = SmoothnessSpec(2, 4, 2, (1.0, 1.0))
    with pytest.raises(ValueError):
        SyntheticEnv(spec, a=0.0, b=1.0)
    with pytest.raises(ValueError):
        SyntheticEnv(spec, a=1.0, b=1.0, split="middle")
    with pytest.raises(ValueError):
        SyntheticEnv(spec, a=np.ones(3), b=1.0)


def _pool(blocks):
    K = len(blocks)
    return SessionPool(pool_spec(K, 1), tuple(np.array(b, dtype=float) for b in blocks),
                       tuple(f"p{i}" for i in range(K)), tuple(tuple(f"s{j}" for j in range(len(b))) for b in blocks))


def test_replay_draws_pooled_vectors():
    pool = _pool([[[1, 1, 0, 0], [1, 0, 0, 0]], [[1, 1, 1, 1]]])
    env = ReplayEnv(pool)
    np.testing.assert_allclose(env.true_means(), [1.5, 4.0])
    seen = {tuple(env.draw(0, Stream.for_pull(s, 1, 0)).values) for s in range(50)}
    assert seen == {(1, 1, 0, 0), (1, 0, 0, 0)}
    assert env.draw(1, Stream.for_pull(0, 1, 1)).values.tolist() == [1, 1, 1, 1]


def test_replay_empty_arm():
    with pytest.raises(EmptyPool):
        ReplayEnv(_pool([[[1, 1, 0, 0]], np.zeros((0, 4))]))


@st.composite
def synthetic_envs(draw):
    K = draw(st.integers(1, 4))
    alpha = draw(st.integers(1, 6))
    phi = draw(st.integers(1, 5))
    rbar = draw(st.lists(st.floats(0.1, 1e3), min_size=K, max_size=K))
    shapes = st.lists(st.floats(0.05, 20.0), min_size=K * alpha, max_size=K * alpha)
    a = np.array(draw(shapes)).reshape(K, alpha)
    b = np.array(draw(shapes)).reshape(K, alpha)
    split = draw(st.sampled_from(["random-simplex", "equal", "terminal"]))
    return SyntheticEnv(SmoothnessSpec(K, alpha * phi, alpha, tuple(rbar)), a, b, split=split)


@settings(max_examples=60, deadline=None)
@given(synthetic_envs(), st.integers(0, 2**32))
def test_draws_are_alpha_smooth(env, seed):
    for arm in range(env.num_arms):
        v, z = env.sample_buckets(arm, 20, seed=seed)
        cap = env.spec.bucket_cap[arm]
        assert np.all(v >= 0)
        assert np.all(z <= cap * (1 + 1e-12))
        np.testing.assert_allclose(v.reshape(20, env.spec.alpha, env.spec.phi).sum(axis=2), z, rtol=1e-12, atol=1e-300)
        for row in v:
            check_reward(RewardVector(arm, 1, row), env.spec)
