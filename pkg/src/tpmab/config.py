"""TOML experiment configuration.

A config names either a library scenario, an inline synthetic environment or
a replay pool file, plus the policies to compare::

    schema = 1

    [experiment]
    scenario = "setting1"
    horizon = 100000
    runs = 50
    seed = 0

    [[policies]]
    name = "tp-ucb-fr"
    eta = 20

Unknown keys are rejected with their dotted path.
"""
from __future__ import annotations

import hashlib
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .core import TPMABError, validate_spec
from .environments import DISTRIBUTIONS, SPLITS, Environment, ReplayEnv, SyntheticEnv, scenario_library
from .ingest import read_pool
from .policies import DELAYED_UCB1, EMPTY_BUCKET_RULES, PolicyConfig, UnknownPolicy, policy_kind

SCHEMA_VERSION = 1


class ConfigError(TPMABError, ValueError):
    def __init__(self, path: str, message: str) -> None:
        super().__init__(f"{path}: {message}")
        self.path = path


_TOP_KEYS = {"schema", "experiment", "environment", "policies", "bounds"}
_EXPERIMENT_KEYS = {"scenario", "pool", "split", "horizon", "runs", "seed", "workers", "shared_randomness",
                    "checkpoints", "out"}
_ENV_KEYS = {"num_arms", "tau_max", "alpha", "max_reward", "a", "b", "split", "distribution", "name"}
_POLICY_KEYS = {"name", "eta", "matched_log", "empty_bucket"}
_BOUNDS_KEYS = {"t_min", "t_max", "per_decade", "horizons"}


def _check_keys(table: dict, allowed: set[str], path: str) -> None:
    for key in table:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}" if path else key, "unknown key")


def _get(table: dict, key: str, kind, path: str, default=None, required: bool = False):
    if key not in table:
        if required:
            raise ConfigError(f"{path}.{key}", "missing required key")
        return default
    value = table[key]
    ok = isinstance(value, kind) and not (kind is int and isinstance(value, bool))
    if not ok:
        raise ConfigError(f"{path}.{key}", f"expected {getattr(kind, '__name__', kind)}, got {type(value).__name__}")
    return value


@dataclass
class ExperimentConfig:
    environment: Environment
    policies: list[PolicyConfig]
    horizon: int
    runs: int = 50
    seed: int = 0
    workers: int = 1
    shared_randomness: bool = True
    checkpoints: np.ndarray | None = None
    out: str | None = None
    bounds: dict[str, Any] = field(default_factory=dict)
    source_sha256: str = ""

    def validate(self) -> None:
        spec = self.environment.spec
        floor = max(spec.num_arms, spec.tau_max)
        if self.horizon < floor:
            raise ConfigError("experiment.horizon", f"must be >= max(K, tau_max) = {floor}")
        if self.runs < 1:
            raise ConfigError("experiment.runs", "must be >= 1")
        if self.workers < 1:
            raise ConfigError("experiment.workers", "must be >= 1")
        if self.checkpoints is not None:
            c = self.checkpoints
            if c.size == 0 or c[0] < 1 or c[-1] > self.horizon or np.any(np.diff(c) <= 0):
                raise ConfigError("experiment.checkpoints", "must be increasing rounds within [1, horizon]")
        labels = [p.label(spec) for p in self.policies]
        if len(set(labels)) != len(labels):
            raise ConfigError("policies", f"duplicate policy labels {labels}")
        for i, p in enumerate(self.policies):
            eta = p.resolved_eta(spec)
            if spec.tau_max % eta:
                raise ConfigError(f"policies[{i}].eta", f"{eta} does not divide tau_max = {spec.tau_max}")

    @property
    def has_reference(self) -> bool:
        return any(p.kind == DELAYED_UCB1 for p in self.policies)


def _environment(doc: dict, base: Path) -> Environment:
    exp = doc.get("experiment", {})
    sources = [k for k in ("scenario", "pool") if k in exp] + (["environment"] if "environment" in doc else [])
    if len(sources) != 1:
        raise ConfigError("experiment", "give exactly one of experiment.scenario, experiment.pool or [environment]")
    split = _get(exp, "split", str, "experiment", "random-simplex")
    if split not in SPLITS:
        raise ConfigError("experiment.split", f"expected one of {SPLITS}")
    if "scenario" in exp:
        name = _get(exp, "scenario", str, "experiment")
        try:
            return scenario_library(name, split=split)
        except KeyError as exc:
            raise ConfigError("experiment.scenario", str(exc)) from None
    if "pool" in exp:
        path = Path(_get(exp, "pool", str, "experiment"))
        path = path if path.is_absolute() else base / path
        try:
            return ReplayEnv(read_pool(path), name=path.stem)
        except OSError as exc:
            raise ConfigError("experiment.pool", str(exc)) from None
    env = doc["environment"]
    _check_keys(env, _ENV_KEYS, "environment")
    try:
        spec = validate_spec(
            _get(env, "num_arms", int, "environment", required=True),
            _get(env, "tau_max", int, "environment", required=True),
            _get(env, "alpha", int, "environment", required=True),
            env.get("max_reward", 1.0),
        )
        dist = _get(env, "distribution", str, "environment", "beta")
        if dist not in DISTRIBUTIONS:
            raise ConfigError("environment.distribution", f"expected one of {DISTRIBUTIONS}")
        return SyntheticEnv(
            spec,
            np.asarray(env.get("a", 1.0), dtype=float),
            np.asarray(env.get("b", 1.0), dtype=float),
            split=_get(env, "split", str, "environment", split),
            distribution=dist,
            name=_get(env, "name", str, "environment", "inline"),
        )
    except ConfigError:
        raise
    except (TPMABError, ValueError) as exc:
        raise ConfigError("environment", str(exc)) from None


def _policies(doc: dict, required: bool) -> list[PolicyConfig]:
    entries = doc.get("policies")
    if entries is None and not required:
        return []
    if not isinstance(entries, list) or not entries:
        raise ConfigError("policies", "need at least one [[policies]] entry")
    out = []
    for i, entry in enumerate(entries):
        path = f"policies[{i}]"
        if not isinstance(entry, dict):
            raise ConfigError(path, "expected a table")
        _check_keys(entry, _POLICY_KEYS, path)
        name = _get(entry, "name", str, path, required=True)
        try:
            policy_kind(name)
        except UnknownPolicy as exc:
            raise ConfigError(f"{path}.name", str(exc)) from None
        eta = _get(entry, "eta", int, path)
        if eta is not None and eta < 1:
            raise ConfigError(f"{path}.eta", "must be >= 1")
        rule = _get(entry, "empty_bucket", str, path, "cap")
        if rule not in EMPTY_BUCKET_RULES:
            raise ConfigError(f"{path}.empty_bucket", f"expected one of {EMPTY_BUCKET_RULES}")
        out.append(PolicyConfig(name, eta, _get(entry, "matched_log", bool, path, False), rule))
    return out


def parse_config(text: str, base: Path | str = ".", require_policies: bool = True) -> ExperimentConfig:
    """Parse a config document; ``require_policies=False`` accepts bound-only configs."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("<file>", f"invalid TOML: {exc}") from None
    _check_keys(doc, _TOP_KEYS, "")
    schema = doc.get("schema")
    if schema != SCHEMA_VERSION:
        raise ConfigError("schema", f"expected schema = {SCHEMA_VERSION}, got {schema!r}")
    exp = doc.get("experiment", {})
    _check_keys(exp, _EXPERIMENT_KEYS, "experiment")
    bounds = doc.get("bounds", {})
    _check_keys(bounds, _BOUNDS_KEYS, "bounds")

    checkpoints = exp.get("checkpoints", "grid")
    if checkpoints == "grid":
        checkpoints = None
    elif isinstance(checkpoints, list) and all(isinstance(c, int) for c in checkpoints):
        checkpoints = np.asarray(checkpoints, dtype=np.int64)
    else:
        raise ConfigError("experiment.checkpoints", 'expected "grid" or a list of rounds')

    cfg = ExperimentConfig(
        environment=_environment(doc, Path(base)),
        policies=_policies(doc, require_policies),
        horizon=_get(exp, "horizon", int, "experiment", 100_000, required=require_policies),
        runs=_get(exp, "runs", int, "experiment", 50),
        seed=_get(exp, "seed", int, "experiment", 0),
        workers=_get(exp, "workers", int, "experiment", 1),
        shared_randomness=_get(exp, "shared_randomness", bool, "experiment", True),
        checkpoints=checkpoints,
        out=_get(exp, "out", str, "experiment"),
        bounds=dict(bounds),
        source_sha256=hashlib.sha256(text.encode()).hexdigest(),
    )
    cfg.validate()
    return cfg


def load_config(path: Path | str, require_policies: bool = True) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(str(path), str(exc)) from None
    return parse_config(text, base=path.parent, require_policies=require_policies)
