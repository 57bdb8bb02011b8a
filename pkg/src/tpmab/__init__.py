"""Multi-armed bandits whose rewards are partitioned over the rounds after a pull."""
from __future__ import annotations

__version__ = "0.1.0"

from .analysis import (
    BoundInputs,
    baseline_upper_bounds,
    bound_table,
    ew_upper_bound,
    fr_upper_bound,
    kl_bernoulli,
    lower_bound_curve,
)
from .core import (
    AggregatedRewardVector,
    PullRecord,
    RewardVector,
    SmoothnessSpec,
    aggregate,
    check_reward,
    cumulative_reward,
    fictitious_cumulative,
    validate_spec,
)
from .engine import AggregateResult, DeliveryQueue, RegretTrajectory, replicate, run_episode
from .environments import ReplayEnv, SyntheticEnv, scenario_library, scenario_names
from .ingest import SessionPool, build_pool, parse_sessions, pool_stats
from .policies import PolicyConfig, make_policy

__all__ = [
    "AggregateResult",
    "AggregatedRewardVector",
    "BoundInputs",
    "DeliveryQueue",
    "PolicyConfig",
    "PullRecord",
    "RegretTrajectory",
    "ReplayEnv",
    "RewardVector",
    "SessionPool",
    "SmoothnessSpec",
    "SyntheticEnv",
    "aggregate",
    "baseline_upper_bounds",
    "bound_table",
    "build_pool",
    "check_reward",
    "cumulative_reward",
    "ew_upper_bound",
    "fictitious_cumulative",
    "fr_upper_bound",
    "kl_bernoulli",
    "lower_bound_curve",
    "make_policy",
    "parse_sessions",
    "pool_stats",
    "replicate",
    "run_episode",
    "scenario_library",
    "scenario_names",
    "validate_spec",
]
