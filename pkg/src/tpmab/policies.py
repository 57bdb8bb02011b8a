"""Index policies for temporally-partitioned rewards.

Each policy is an incremental state machine with the same two-step protocol
per round ``t``::

    arm = policy.select(t)            # uses observations up to round t - 1
    policy.observe(deliveries, t)     # values revealed during round t

``deliveries`` is a list of ``(PullRecord, value)`` pairs produced by the
engine's :class:`~tpmab.engine.DeliveryQueue`, in increasing pull-round order.
For the clairvoyant :class:`UCB1` the queue hands over the full cumulative
reward in the pull round instead.

The arithmetic in :meth:`index` is written operation-for-operation like the
compiled episode kernel in :mod:`tpmab._kernel`, so both routes pick the same
arms on the same history.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import NonDivisorAlpha, PullRecord, SmoothnessSpec, TPMABError

UCB1 = "ucb1"
DELAYED_UCB1 = "delayed-ucb1"
TP_UCB_FR = "tp-ucb-fr"
TP_UCB_EW = "tp-ucb-ew"
KINDS = (UCB1, DELAYED_UCB1, TP_UCB_FR, TP_UCB_EW)
EMPTY_BUCKET_RULES = ("cap", "inf")

_DISPLAY = {UCB1: "UCB1", DELAYED_UCB1: "Delayed-UCB1", TP_UCB_FR: "TP-UCB-FR", TP_UCB_EW: "TP-UCB-EW"}


class DeliveryError(TPMABError, ValueError):
    pass


class DuplicateDelivery(DeliveryError):
    pass


class UnknownPull(DeliveryError):
    pass


class UnknownPolicy(TPMABError, ValueError):
    pass


def policy_kind(name: str) -> str:
    key = name.strip().lower().replace("_", "-").replace(" ", "-")
    aliases = {"d-ucb1": DELAYED_UCB1, "delayed": DELAYED_UCB1, "fr": TP_UCB_FR, "ew": TP_UCB_EW}
    key = aliases.get(key, key)
    if key not in KINDS:
        raise UnknownPolicy(f"unknown policy {name!r}; expected one of {[_DISPLAY[k] for k in KINDS]}")
    return key


@dataclass(frozen=True)
class IndexValue:
    arm: int
    mean_part: float
    bonus_part: float
    total: float


@dataclass
class PendingPull:
    """Book-keeping for a pull whose reward is still being revealed."""

    arm: int
    pull_round: int
    delivered: int = 0
    partial: float = 0.0
    bucket_partial: float = 0.0


@dataclass
class PolicyState:
    """Sufficient statistics of one policy.

    ``pulls`` and ``complete`` are the per-arm numbers of pulls made and of
    pulls whose reward is fully revealed. ``complete_sum`` holds the sum of
    complete cumulative rewards and ``observed_sum`` the sum of every value
    revealed so far (complete pulls plus revealed prefixes of pending ones).
    ``bucket_counts[i, k]`` / ``bucket_sums[i, k]`` track completed k-th
    buckets, with buckets defined by the policy's own smoothness ``eta``.
    """

    kind: str
    eta: int
    spec: SmoothnessSpec
    pulls: np.ndarray
    complete: np.ndarray
    complete_sum: np.ndarray
    observed_sum: np.ndarray
    bucket_counts: np.ndarray
    bucket_sums: np.ndarray
    pending: dict[int, PendingPull] = field(default_factory=dict)
    last_round: int = 0

    @classmethod
    def empty(cls, kind: str, spec: SmoothnessSpec, eta: int) -> "PolicyState":
        K = spec.num_arms
        return cls(
            kind=kind,
            eta=eta,
            spec=spec,
            pulls=np.zeros(K, dtype=np.int64),
            complete=np.zeros(K, dtype=np.int64),
            complete_sum=np.zeros(K),
            observed_sum=np.zeros(K),
            bucket_counts=np.zeros((K, eta), dtype=np.int64),
            bucket_sums=np.zeros((K, eta)),
        )


class Policy:
    """Shared machinery: schedule, argmax and delivery book-keeping."""

    kind: str = ""
    clairvoyant = False

    def __init__(self, spec: SmoothnessSpec, eta: int | None = None, matched_log: bool = False) -> None:
        eta = spec.alpha if eta is None else int(eta)
        if eta < 1 or spec.tau_max % eta:
            raise NonDivisorAlpha(eta, spec.tau_max)
        self.spec = spec
        self.eta = eta
        self.phi = spec.tau_max // eta
        self.matched_log = matched_log
        self.rbar = spec.max_reward
        self.state = PolicyState.empty(self.kind, spec, eta)

    @property
    def name(self) -> str:
        base = _DISPLAY[self.kind]
        return f"{base}({self.eta})" if self.kind in (TP_UCB_FR, TP_UCB_EW) else base

    def __repr__(self) -> str:
        return f"{type(self).__name__}(eta={self.eta}, matched_log={self.matched_log})"

    # -- selection ---------------------------------------------------------
    def init_rounds(self) -> int:
        return self.spec.num_arms

    def scheduled_arm(self, t: int) -> int:
        return t - 1

    def index(self, arm: int, t: int) -> IndexValue:
        raise NotImplementedError

    def indices(self, t: int) -> list[IndexValue]:
        return [self.index(i, t) for i in range(self.spec.num_arms)]

    def select(self, t: int) -> int:
        """Arm to pull at round ``t``; ties go to the lowest arm index."""
        if t < 1:
            raise ValueError(f"rounds start at 1, got {t}")
        if t <= self.init_rounds():
            return self.scheduled_arm(t)
        best, best_arm = -math.inf, 0
        for i in range(self.spec.num_arms):
            u = self.index(i, t).total
            if u > best:
                best, best_arm = u, i
        return best_arm

    def _log(self, t: float, shift: int = 1) -> float:
        arg = t - shift
        if arg < 1:
            raise ValueError(f"index undefined at round {t}")
        return math.log(arg)

    # -- observation -------------------------------------------------------
    def observe(self, deliveries, t: int) -> None:
        for record, value in deliveries:
            self._observe_one(record, float(value), t)

    def _observe_one(self, record: PullRecord, value: float, t: int) -> None:
        st = self.state
        j = t - record.pull_round + 1
        pend = st.pending.get(record.pull_round)
        if pend is None:
            if j != 1:
                raise UnknownPull(f"value {j} of unseen pull at round {record.pull_round}")
            if record.pull_round <= st.last_round:
                raise DuplicateDelivery(f"pull at round {record.pull_round} already registered")
            pend = PendingPull(record.arm, record.pull_round)
            st.pending[record.pull_round] = pend
            st.pulls[record.arm] += 1
            st.last_round = record.pull_round
        elif pend.arm != record.arm:
            raise UnknownPull(f"pull at round {record.pull_round} was made on arm {pend.arm}")
        if j != pend.delivered + 1 or j > self.spec.tau_max:
            raise DuplicateDelivery(
                f"value {j} of pull at round {record.pull_round} after {pend.delivered} deliveries"
            )
        pend.delivered = j
        self._absorb(pend, j, value)
        if j == self.spec.tau_max:
            st.complete[pend.arm] += 1
            st.complete_sum[pend.arm] += pend.partial
            del st.pending[record.pull_round]

    def _absorb(self, pend: PendingPull, j: int, value: float) -> None:
        pend.partial += value
        self.state.observed_sum[pend.arm] += value


class UCB1Policy(Policy):
    """Clairvoyant UCB1: the whole cumulative reward arrives at the pull round."""

    kind = UCB1
    clairvoyant = True

    def index(self, arm: int, t: int) -> IndexValue:
        st = self.state
        n = int(st.pulls[arm])
        if n == 0:
            return IndexValue(arm, math.nan, math.inf, math.inf)
        lg = self._log(t, 1 if self.matched_log else 0)
        mean = st.complete_sum[arm] / n
        bonus = self.rbar[arm] * math.sqrt(2.0 * lg / n)
        return IndexValue(arm, mean, bonus, mean + bonus)

    def _observe_one(self, record: PullRecord, value: float, t: int) -> None:
        st = self.state
        if record.pull_round != t:
            raise UnknownPull(f"clairvoyant delivery for round {record.pull_round} arrived at round {t}")
        if record.pull_round <= st.last_round:
            raise DuplicateDelivery(f"pull at round {record.pull_round} already observed")
        st.last_round = record.pull_round
        st.pulls[record.arm] += 1
        st.complete[record.arm] += 1
        st.complete_sum[record.arm] += value
        st.observed_sum[record.arm] += value


class DelayedUCB1Policy(Policy):
    """UCB1 fed only with complete cumulative rewards."""

    kind = DELAYED_UCB1

    def init_rounds(self) -> int:
        return self.spec.tau_max

    def scheduled_arm(self, t: int) -> int:
        return (t - 1) % self.spec.num_arms

    def index(self, arm: int, t: int) -> IndexValue:
        st = self.state
        s = int(st.complete[arm])
        if s == 0:
            return IndexValue(arm, math.nan, math.inf, math.inf)
        lg = self._log(t)
        mean = st.complete_sum[arm] / s
        bonus = self.rbar[arm] * math.sqrt(2.0 * lg / s)
        return IndexValue(arm, mean, bonus, mean + bonus)


class TPUCBFRPolicy(Policy):
    """UCB on fictitious cumulative rewards (unrevealed values count as zero)."""

    kind = TP_UCB_FR

    def index(self, arm: int, t: int) -> IndexValue:
        st = self.state
        n = int(st.pulls[arm])
        if n == 0:
            return IndexValue(arm, math.nan, math.inf, math.inf)
        lg = self._log(t)
        eta, rbar = self.eta, self.rbar[arm]
        mean = st.observed_sum[arm] / n
        bonus = rbar * math.sqrt(2.0 * lg / (eta * n)) + self.phi * (eta + 1) * rbar / (2.0 * n)
        return IndexValue(arm, mean, bonus, mean + bonus)


class TPUCBEWPolicy(Policy):
    """Sum of per-bucket UCBs; each bucket is estimated from completed buckets only.

    ``empty_bucket`` decides what a bucket with no completed sample adds to
    the index: ``"cap"`` adds its maximum ``R̄/eta`` (the default),
    ``"inf"`` makes the whole index infinite. Under ``"inf"`` every arm is
    tied at infinity until the first pull's last bucket completes, so the
    lowest-index arm is pulled for about ``tau_max`` rounds.
    """

    kind = TP_UCB_EW

    def _absorb(self, pend: PendingPull, j: int, value: float) -> None:
        super()._absorb(pend, j, value)
        pend.bucket_partial += value
        if j % self.phi == 0:
            k = j // self.phi - 1
            st = self.state
            st.bucket_counts[pend.arm, k] += 1
            st.bucket_sums[pend.arm, k] += pend.bucket_partial
            pend.bucket_partial = 0.0

    def __init__(self, spec: SmoothnessSpec, eta: int | None = None, matched_log: bool = False,
                 empty_bucket: str = "cap") -> None:
        super().__init__(spec, eta, matched_log)
        if empty_bucket not in EMPTY_BUCKET_RULES:
            raise ValueError(f"empty_bucket must be one of {EMPTY_BUCKET_RULES}, got {empty_bucket!r}")
        self.empty_bucket = empty_bucket

    def index(self, arm: int, t: int) -> IndexValue:
        st = self.state
        counts = st.bucket_counts[arm]
        if self.empty_bucket == "inf" and counts.min() == 0:
            return IndexValue(arm, math.nan, math.inf, math.inf)
        lg = self._log(t)
        scale = self.rbar[arm] / self.eta
        sums = st.bucket_sums[arm]
        total = mean = bonus = 0.0
        for k in range(self.eta):
            nk = int(counts[k])
            if nk == 0:
                # no sample yet: the bucket cap is the tightest optimistic value
                z, c = 0.0, scale
            else:
                z = sums[k] / nk
                c = scale * math.sqrt(2.0 * lg / nk)
            total += z + c
            mean += z
            bonus += c
        return IndexValue(arm, mean, bonus, total)


_CLASSES = {UCB1: UCB1Policy, DELAYED_UCB1: DelayedUCB1Policy, TP_UCB_FR: TPUCBFRPolicy, TP_UCB_EW: TPUCBEWPolicy}


@dataclass(frozen=True)
class PolicyConfig:
    """Name plus smoothness parameter of a policy, as written in a config file.

    ``eta`` defaults to the environment's ``alpha`` and is ignored by the two
    UCB1 baselines. ``matched_log`` makes UCB1 use ``ln(t - 1)`` like the
    other three policies. ``empty_bucket`` only applies to TP-UCB-EW (see
    :class:`TPUCBEWPolicy`).
    """

    name: str
    eta: int | None = None
    matched_log: bool = False
    empty_bucket: str = "cap"

    def __post_init__(self) -> None:
        if self.empty_bucket not in EMPTY_BUCKET_RULES:
            raise ValueError(f"empty_bucket must be one of {EMPTY_BUCKET_RULES}, got {self.empty_bucket!r}")

    @property
    def kind(self) -> str:
        return policy_kind(self.name)

    def resolved_eta(self, spec: SmoothnessSpec) -> int:
        if self.kind in (UCB1, DELAYED_UCB1):
            return spec.alpha
        return spec.alpha if self.eta is None else int(self.eta)

    def label(self, spec: SmoothnessSpec | None = None) -> str:
        base = _DISPLAY[self.kind]
        if self.kind in (UCB1, DELAYED_UCB1):
            return base
        if self.kind == TP_UCB_EW and self.empty_bucket == "inf":
            base += "-inf"
        if self.eta is None:
            return base if spec is None else f"{base}({spec.alpha})"
        return f"{base}({self.eta})"

    def build(self, spec: SmoothnessSpec) -> Policy:
        kwargs = {"empty_bucket": self.empty_bucket} if self.kind == TP_UCB_EW else {}
        return _CLASSES[self.kind](spec, eta=self.resolved_eta(spec), matched_log=self.matched_log, **kwargs)


def make_policy(name: str, spec: SmoothnessSpec, eta: int | None = None, matched_log: bool = False,
                empty_bucket: str = "cap") -> Policy:
    return PolicyConfig(name, eta, matched_log, empty_bucket).build(spec)
