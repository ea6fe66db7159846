"""Renyi-DP accounting for the subsampled Gaussian mechanism.

The per-order bounds follow the sampled Gaussian mechanism analysis
(Mironov, Talwar & Zhang, 2019) in the log-space form popularised by the
TensorFlow Privacy accountant: integer orders use the binomial expansion,
fractional orders the two-sided erfc series.

The bounds assume Poisson sampling at rate q = L/N. The trainer instead
shuffles and walks fixed-size lots, so the reported epsilon is the usual
approximation for that schedule rather than a proven bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import optimize, special

DEFAULT_DELTA = 1e-5
DEFAULT_CONVERSION = "improved"

#: Renyi orders: tenths on (1, 11) then the integers 12..64.
DEFAULT_ORDERS: tuple[float, ...] = tuple(
    [1.0 + x / 10.0 for x in range(1, 100)] + [float(a) for a in range(12, 65)]
)


class InfeasibleBudgetError(ValueError):
    """Raised when no noise multiplier in the search bracket meets the target."""

    def __init__(self, target, bracket, epsilons):
        self.target = target
        self.bracket = bracket
        self.epsilons = epsilons
        super().__init__(
            f"target epsilon {target:g} not attainable for sigma in "
            f"[{bracket[0]:g}, {bracket[1]:g}]; accounted epsilons at the "
            f"endpoints are {epsilons[0]:g} and {epsilons[1]:g}"
        )


@dataclass(frozen=True)
class PrivacyBudget:
    """Target (epsilon, delta) together with the sampling schedule.

    ``sample_rate`` is q = L/N and ``steps`` is T = epochs * ceil(N/L).
    """

    epsilon: float
    delta: float = DEFAULT_DELTA
    sample_rate: float = 1.0
    steps: int = 1

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if not 0.0 < self.sample_rate <= 1.0:
            raise ValueError(f"sample_rate must lie in (0, 1], got {self.sample_rate}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError(f"steps must be a positive integer, got {self.steps}")

    @classmethod
    def for_training(cls, epsilon, n_train, lot_size, epochs, delta=DEFAULT_DELTA):
        """Budget for ``epochs`` passes over ``n_train`` examples in lots of ``lot_size``."""
        return cls(
            epsilon=epsilon,
            delta=delta,
            sample_rate=min(1.0, lot_size / n_train),
            steps=steps_for(n_train, lot_size, epochs),
        )


def steps_for(n_train: int, lot_size: int, epochs: int) -> int:
    return int(epochs) * math.ceil(n_train / lot_size)


def _log_erfc(x):
    return np.log(2.0) + special.log_ndtr(-x * np.sqrt(2.0))


def _log_binom(n, k):
    return special.gammaln(n + 1) - special.gammaln(k + 1) - special.gammaln(n - k + 1)


def _log_a_int(q, sigma, alphas):
    """log A_alpha for integer orders via the binomial expansion."""
    alphas = np.asarray(alphas, dtype=float)[:, None]
    i = np.arange(alphas.max() + 1)[None, :]
    terms = (
        _log_binom(alphas, np.minimum(i, alphas))
        + i * np.log(q)
        + (alphas - i) * np.log1p(-q)
        + (i * i - i) / (2 * sigma**2)
    )
    terms = np.where(i <= alphas, terms, -np.inf)
    return special.logsumexp(terms, axis=1)


def _log_a_frac(q, sigma, alphas, n_terms=128):
    """log A_alpha for fractional orders via the two-sided erfc series.

    The terms carry the sign of binom(alpha, i), which alternates once i
    exceeds alpha. Each order's series is truncated at the first index where
    both halves drop below exp(-30).
    """
    alphas = np.asarray(alphas, dtype=float)[:, None]
    z0 = sigma**2 * np.log(1 / q - 1) + 0.5
    while True:
        i = np.arange(n_terms, dtype=float)[None, :]
        coef = special.binom(alphas, i)
        j = alphas - i
        with np.errstate(divide="ignore"):
            log_coef = np.log(np.abs(coef))
        log_t0 = log_coef + i * np.log(q) + j * np.log1p(-q)
        log_t1 = log_coef + j * np.log(q) + i * np.log1p(-q)
        log_e0 = np.log(0.5) + _log_erfc((i - z0) / (np.sqrt(2) * sigma))
        log_e1 = np.log(0.5) + _log_erfc((z0 - j) / (np.sqrt(2) * sigma))
        s0 = log_t0 + (i * i - i) / (2 * sigma**2) + log_e0
        s1 = log_t1 + (j * j - j) / (2 * sigma**2) + log_e1
        small = np.maximum(s0, s1) < -30
        if small.any(axis=1).all():
            break
        n_terms *= 2
    stop = np.argmax(small, axis=1)[:, None]
    keep = i <= stop
    sign = np.where(keep, np.sign(coef), 0.0)
    a0 = special.logsumexp(np.where(keep, s0, 0.0), b=sign, axis=1)
    a1 = special.logsumexp(np.where(keep, s1, 0.0), b=sign, axis=1)
    return np.logaddexp(a0, a1)


def _rdp_per_step(q, sigma, orders):
    if q == 0:
        return np.zeros_like(orders)
    if q == 1.0:
        return orders / (2 * sigma**2)
    out = np.empty_like(orders)
    finite = np.isfinite(orders)
    out[~finite] = np.inf
    is_int = finite & (orders == np.round(orders))
    frac = finite & ~is_int
    if is_int.any():
        out[is_int] = _log_a_int(q, sigma, orders[is_int]) / (orders[is_int] - 1)
    if frac.any():
        out[frac] = _log_a_frac(q, sigma, orders[frac]) / (orders[frac] - 1)
    return out


def rdp_of_subsampled_gaussian(sigma, sample_rate, steps, orders=DEFAULT_ORDERS):
    """Cumulative RDP of ``steps`` compositions of the sampled Gaussian mechanism.

    Returns an array aligned with ``orders``. A zero noise multiplier yields
    ``+inf`` at every order rather than raising.
    """
    orders = np.atleast_1d(np.asarray(orders, dtype=float))
    if np.any(orders <= 1):
        raise ValueError("Renyi orders must be > 1")
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    if not 0.0 <= sample_rate <= 1.0:
        raise ValueError(f"sample_rate must lie in [0, 1], got {sample_rate}")
    if sigma == 0:
        return np.full(orders.shape, np.inf)
    return _rdp_per_step(sample_rate, sigma, orders) * steps


def epsilon_from_rdp(rdp, orders, delta, conversion="classic"):
    """Convert RDP values into (epsilon, delta)-DP.

    ``conversion="classic"`` uses eps = min_a [RDP(a) + log(1/delta)/(a - 1)]
    (Mironov 2017). ``"improved"`` uses the tighter bound of Balle et al.
    (2020), eps = min_a [RDP(a) + log((a-1)/a) - (log delta + log a)/(a - 1)],
    which is what the Opacus RDP accountant reports.

    Returns ``(epsilon, best_order)``; ``(inf, nan)`` when every order is
    infinite.
    """
    rdp = np.atleast_1d(np.asarray(rdp, dtype=float))
    orders = np.atleast_1d(np.asarray(orders, dtype=float))
    if rdp.size == 0 or orders.size == 0:
        raise ValueError("rdp and orders must be non-empty")
    if rdp.shape != orders.shape:
        raise ValueError(f"rdp and orders are misaligned: {rdp.shape} vs {orders.shape}")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if conversion == "classic":
        eps = rdp + math.log(1.0 / delta) / (orders - 1)
    elif conversion == "improved":
        eps = (
            rdp
            + np.log((orders - 1) / orders)
            - (math.log(delta) + np.log(orders)) / (orders - 1)
        )
    else:
        raise ValueError(f"unknown conversion {conversion!r}")
    if np.all(np.isinf(eps)):
        return np.inf, np.nan
    idx = int(np.nanargmin(eps))
    return float(eps[idx]), float(orders[idx])


def compute_epsilon(
    sigma,
    sample_rate,
    steps,
    delta=DEFAULT_DELTA,
    orders=DEFAULT_ORDERS,
    conversion=DEFAULT_CONVERSION,
):
    """Epsilon spent after ``steps`` noisy steps."""
    rdp = rdp_of_subsampled_gaussian(sigma, sample_rate, steps, orders)
    return epsilon_from_rdp(rdp, orders, delta, conversion)[0]


def sigma_for_target_epsilon(
    budget: PrivacyBudget,
    orders: Sequence[float] = DEFAULT_ORDERS,
    conversion: str = DEFAULT_CONVERSION,
    bracket=(1e-3, 1e2),
    rtol=1e-4,
) -> float:
    """Smallest noise multiplier whose accounted epsilon does not exceed the target.

    Root-finds log(eps) - log(target) in log(sigma) with Brent's method to a
    relative sigma tolerance of ``rtol``, then steps up by ``rtol`` until the
    accounted epsilon sits at or just below the target.
    """
    def eps_at(s):
        return compute_epsilon(
            s, budget.sample_rate, budget.steps, budget.delta, orders, conversion
        )

    lo, hi = bracket
    eps_lo, eps_hi = eps_at(lo), eps_at(hi)
    if eps_hi > budget.epsilon or eps_lo <= budget.epsilon:
        # the eps(sigma) = target crossing lies outside the bracket
        raise InfeasibleBudgetError(budget.epsilon, (lo, hi), (eps_lo, eps_hi))

    log_target = math.log(budget.epsilon)
    log_sigma = optimize.brentq(
        lambda ls: math.log(eps_at(math.exp(ls))) - log_target,
        math.log(lo),
        math.log(hi),
        xtol=rtol / 4,
    )
    sigma = math.exp(log_sigma)
    while eps_at(sigma) > budget.epsilon:
        sigma *= 1 + rtol / 4
    return sigma
