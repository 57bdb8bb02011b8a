"""Closed-form regret curves: KL divergence, lower bounds and upper bounds.

All curves sum over suboptimal arms only. Arms tied with the best mean are
dropped; :meth:`BoundInputs.from_means` warns when that happens to an arm
other than the first optimal one.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import SpecError, TPMABError

_PI2_3 = math.pi ** 2 / 3.0


class DomainError(TPMABError, ValueError):
    pass


class TiedOptimumWarning(UserWarning):
    pass


def kl_bernoulli(p: float, q: float) -> float:
    """KL divergence between Bernoulli(p) and Bernoulli(q), with ``0 ln 0 = 0``."""
    if not (0.0 <= p <= 1.0) or not (0.0 <= q <= 1.0):
        raise DomainError(f"KL arguments must lie in [0, 1], got ({p}, {q})")
    if p == q:
        return 0.0
    if q in (0.0, 1.0):
        raise DomainError(f"KL({p}, {q}) is infinite")
    out = 0.0
    if p > 0.0:
        out += p * math.log(p / q)
    if p < 1.0:
        out += (1.0 - p) * math.log((1.0 - p) / (1.0 - q))
    return max(out, 0.0)


@dataclass(frozen=True)
class BoundInputs:
    """Instance quantities the bounds depend on, restricted to suboptimal arms.

    Attributes
    ----------
    gaps, means, rbar
        Per suboptimal arm: ``mu* - mu_i``, ``mu_i`` and ``R̄^i``.
    mu_star, rbar_max
        Best mean and the largest ``R̄`` over *all* arms.
    alpha, phi, tau_max
        Smoothness structure of the environment.
    """

    gaps: np.ndarray
    means: np.ndarray
    rbar: np.ndarray
    mu_star: float
    rbar_max: float
    alpha: int
    phi: int
    tau_max: int

    def __post_init__(self) -> None:
        if np.any(self.gaps <= 0):
            raise SpecError("bound inputs need strictly positive gaps")
        if self.alpha * self.phi != self.tau_max:
            raise SpecError(f"alpha*phi = {self.alpha * self.phi} differs from tau_max = {self.tau_max}")
        if not (0.0 < self.mu_star <= self.rbar_max):
            raise SpecError(f"need 0 < mu* <= R̄_max, got mu*={self.mu_star}, R̄_max={self.rbar_max}")

    @classmethod
    def from_means(cls, means, rbar, alpha: int, tau_max: int) -> "BoundInputs":
        means = np.asarray(means, dtype=float)
        rbar = np.broadcast_to(np.asarray(rbar, dtype=float), means.shape)
        mu_star = float(means.max())
        sub = means < mu_star
        ties = int((~sub).sum())
        if ties > 1:
            warnings.warn(f"{ties} arms share the optimal mean; tied arms are excluded from the sums",
                          TiedOptimumWarning, stacklevel=2)
        return cls(
            gaps=mu_star - means[sub],
            means=means[sub].copy(),
            rbar=np.array(rbar[sub]),
            mu_star=mu_star,
            rbar_max=float(rbar.max()),
            alpha=int(alpha),
            phi=int(tau_max) // int(alpha),
            tau_max=int(tau_max),
        )

    @classmethod
    def from_env(cls, env) -> "BoundInputs":
        spec = env.spec
        return cls.from_means(env.true_means(), spec.rbar, spec.alpha, spec.tau_max)

    def with_alpha(self, alpha: int) -> "BoundInputs":
        return BoundInputs(self.gaps, self.means, self.rbar, self.mu_star, self.rbar_max,
                           int(alpha), self.tau_max // int(alpha), self.tau_max)

    @property
    def beta(self) -> float:
        """``(mu*/R̄_max)(1 - mu*/R̄_max)``, the scale of the quadratic KL relaxation."""
        x = self.mu_star / self.rbar_max
        return x * (1.0 - x)

    @property
    def alpha_threshold(self) -> np.ndarray:
        """Per suboptimal arm, the ``alpha`` above which the FR leading factor beats the plain lower bound."""
        return 4.0 * self.rbar ** 2 / self.beta


def _as_horizons(T) -> np.ndarray:
    T = np.asarray(T, dtype=float)
    if np.any(T < 1):
        raise DomainError("horizons must be >= 1")
    return T


def lower_bound_coefficient(inputs: BoundInputs, with_smoothness: bool = True) -> float:
    """Asymptotic ``liminf R_T / ln T`` for uniformly efficient policies."""
    q = inputs.mu_star / inputs.rbar_max
    total = 0.0
    for gap, mu in zip(inputs.gaps, inputs.means):
        total += gap / kl_bernoulli(mu / inputs.rbar_max, q)
    return total / inputs.alpha if with_smoothness else total


def lower_bound_curve(inputs: BoundInputs, horizons, with_smoothness: bool = True) -> np.ndarray:
    """Asymptotic lower-bound coefficient times ``ln T`` on a horizon grid."""
    return lower_bound_coefficient(inputs, with_smoothness) * np.log(_as_horizons(horizons))


def _ucb_log_term(inputs: BoundInputs, lnT) -> np.ndarray:
    return np.multiply.outer(lnT, 8.0 * inputs.rbar ** 2 / inputs.gaps).sum(axis=-1)


def _tail_term(inputs: BoundInputs, factor: float):
    return factor * inputs.gaps.sum()


def fr_upper_bound(inputs: BoundInputs, T):
    """TP-UCB-FR pseudo-regret upper bound at horizon(s) ``T``.

    The leading term ``4R̄²lnT/(αΔ)(1 + sqrt(1 + c/lnT))`` is evaluated as
    ``4R̄²/(αΔ)(lnT + sqrt(lnT² + c lnT))`` so that ``T = 1`` is finite.
    """
    lnT = np.log(_as_horizons(T))
    a, phi = inputs.alpha, inputs.phi
    rbar, gaps = inputs.rbar, inputs.gaps
    c = a * (a + 1) * phi * gaps / (2.0 * rbar)
    L = np.expand_dims(lnT, -1)
    lead = (4.0 * rbar ** 2 / (a * gaps) * (L + np.sqrt(L * L + c * L))).sum(axis=-1)
    out = lead + (a + 1) * phi * rbar.sum() + _tail_term(inputs, 1.0 + _PI2_3)
    return out if np.ndim(out) else float(out)


def fr_dominant_term(inputs: BoundInputs, T):
    """``sum 8R̄² lnT / (αΔ)``, the large-T limit of the FR leading term."""
    lnT = np.log(_as_horizons(T))
    out = _ucb_log_term(inputs, lnT) / inputs.alpha
    return out if np.ndim(out) else float(out)


def ew_upper_bound(inputs: BoundInputs, T):
    """TP-UCB-EW pseudo-regret upper bound at horizon(s) ``T``."""
    lnT = np.log(_as_horizons(T))
    out = _ucb_log_term(inputs, lnT) + inputs.alpha * _tail_term(inputs, inputs.phi + _PI2_3)
    return out if np.ndim(out) else float(out)


def baseline_upper_bounds(inputs: BoundInputs, T):
    """UCB1 and Delayed-UCB1 upper bounds at horizon(s) ``T``, in that order."""
    lnT = np.log(_as_horizons(T))
    log_term = _ucb_log_term(inputs, lnT)
    ucb1 = log_term + _tail_term(inputs, 1.0 + _PI2_3)
    delayed = log_term + _tail_term(inputs, 1.0 + _PI2_3 + inputs.tau_max)
    if np.ndim(ucb1):
        return ucb1, delayed
    return float(ucb1), float(delayed)


BOUND_COLUMNS = ("T", "lower_plain", "lower_smooth", "ub_fr", "ub_ew", "ub_ucb1", "ub_delayed")


def bound_table(inputs: BoundInputs, horizons) -> dict[str, np.ndarray]:
    """All curves on one horizon grid, keyed by :data:`BOUND_COLUMNS`."""
    T = _as_horizons(horizons)
    ucb1, delayed = baseline_upper_bounds(inputs, T)
    return {
        "T": T,
        "lower_plain": lower_bound_curve(inputs, T, with_smoothness=False),
        "lower_smooth": lower_bound_curve(inputs, T, with_smoothness=True),
        "ub_fr": np.asarray(fr_upper_bound(inputs, T)),
        "ub_ew": np.asarray(ew_upper_bound(inputs, T)),
        "ub_ucb1": np.asarray(ucb1),
        "ub_delayed": np.asarray(delayed),
    }


def log_grid(t_min: int, t_max: int, per_decade: int = 10) -> np.ndarray:
    """Integer horizons spaced evenly in ``log10`` (duplicates removed)."""
    pts = np.logspace(math.log10(t_min), math.log10(t_max), int(per_decade * math.log10(t_max / t_min)) + 1)
    return np.unique(np.round(pts).astype(np.int64))
