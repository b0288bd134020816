"""Closed-form tail and length bounds for reversible-chain sample averages.

All logarithms are natural.  Probability bounds are returned as BoundValue so
that a value >= 1 is reported as vacuous instead of silently clamped;
experiments must distinguish "holds trivially" from "is informative".
"""

from __future__ import annotations

import math
from dataclasses import dataclass


class InfiniteRelaxationError(ValueError):
    """The bound degenerates when the relaxation time is infinite."""


@dataclass(frozen=True)
class BoundValue:
    """A non-negative bound; vacuous means it is >= 1 and carries no information."""

    value: float
    vacuous: bool

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("bound value must be non-negative")
        if self.vacuous != (self.value >= 1.0):
            raise ValueError("vacuous flag inconsistent with value")


def _bound(value: float) -> BoundValue:
    return BoundValue(value=value, vacuous=value >= 1.0)


def _require_finite(tau2: float) -> float:
    tau2 = float(tau2)
    if math.isinf(tau2):
        raise InfiniteRelaxationError("relaxation time is infinite; tail bound degenerates")
    if tau2 <= 0:
        raise ValueError("relaxation time must be positive")
    return tau2


def lezaud_one_sided(lam: float, m: int, tau2: float) -> BoundValue:
    """One-sided tail bound for an m-step stationary average:

        P(A_1 - gbar > lam) <= exp(1/(5 tau2) - lam^2 m / (12 tau2)).
    """
    tau2 = _require_finite(tau2)
    if lam <= 0:
        raise ValueError("lam must be positive")
    if m < 1:
        raise ValueError("m must be at least 1")
    return _bound(math.exp(1.0 / (5.0 * tau2) - lam * lam * m / (12.0 * tau2)))


def lezaud_two_sided(lam: float, m: int, tau2: float) -> BoundValue:
    """Two-sided version, 3 exp(-lam^2 m / (12 tau2)).

    The constant 3 absorbs the one-sided prefactor: tau2 >= 1/2 always, and
    2 e^{2/5} < 3.
    """
    tau2 = _require_finite(tau2)
    if lam <= 0:
        raise ValueError("lam must be positive")
    if m < 1:
        raise ValueError("m must be at least 1")
    return _bound(3.0 * math.exp(-lam * lam * m / (12.0 * tau2)))


def prop2_bound(n: int, m: int, tau2: float) -> BoundValue:
    """Bound on the probability that any trajectory average gets truncated:

        P(N_n > 0) <= 3 n (n+1) exp(-(m / (48 n tau2)) log^2 n).
    """
    tau2 = _require_finite(tau2)
    if n < 3:
        raise ValueError("n must be at least 3")
    if m < 1:
        raise ValueError("m must be at least 1")
    log_n = math.log(n)
    return _bound(3.0 * n * (n + 1) * math.exp(-(m / (48.0 * n * tau2)) * log_n * log_n))


def con3_bound(n: int) -> BoundValue:
    """Parameter-free budget-overshoot bound for the adaptive doubling procedure:

        3 n (n+1) exp(-log^2 n).

    Natural log, like everywhere else in this artifact: the d_alpha algebra in
    the interval construction forces it.  Note the value is vacuous for small n
    (e.g. about 2.86 at n = 8) and only becomes informative around n >= 27.
    """
    if n < 5:
        raise ValueError("n must be at least 5")
    log_n = math.log(n)
    return _bound(3.0 * n * (n + 1) * math.exp(-log_n * log_n))


def lower_bound_length(n: int, m: int, tau2: float) -> float:
    """Benchmark for the best achievable interval length, max(1/n, sqrt(tau2/(n m))).

    The 1/n term is the invisible mass a set of stationary probability 1/n can
    hide from n exact starts; the other term is the standard deviation of the
    overall average for the slowest observable (the second eigenfunction).
    """
    tau2 = _require_finite(tau2)
    if n < 1 or m < 1:
        raise ValueError("n and m must be at least 1")
    return max(1.0 / n, math.sqrt(tau2 / (n * m)))
