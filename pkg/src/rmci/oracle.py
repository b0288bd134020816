"""Brute-force ground truth on tiny chains.

The exact distribution of the m-step trajectory average A_1 (started from the
stationary law) is computed by depth-first enumeration of all s^m paths with
weight pi(x_0) * prod k(x_j, x_{j+1}) — no pruning, exactness first; the
s^m <= 10^7 guard keeps it feasible.  The exact stationary variance of A_1 is
computed independently through the spectral decomposition, so enumeration and
spectra cross-check each other, and both sit under the closed-form tail bounds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chain_core import ReversibleChain, spectral_decomposition, stationary_mean

ENUMERATION_LIMIT = 10**7
SUPPORT_BIN = 1e-12


class EnumerationTooLargeError(ValueError):
    """s^m exceeds the enumeration guard."""


@dataclass(frozen=True)
class ExactA1Distribution:
    """Exact law of the m-step trajectory average: sorted (value, probability) pairs."""

    support: tuple[tuple[float, float], ...]
    m: int
    chain_name: str

    def values(self) -> np.ndarray:
        return np.array([v for v, _ in self.support])

    def probabilities(self) -> np.ndarray:
        return np.array([p for _, p in self.support])

    def mean(self) -> float:
        return float(sum(v * p for v, p in self.support))

    def variance(self) -> float:
        mu = self.mean()
        return float(sum(p * (v - mu) ** 2 for v, p in self.support))

    def total_mass(self) -> float:
        return float(sum(p for _, p in self.support))

    def to_dict(self) -> dict:
        return {
            "chain_name": self.chain_name,
            "m": self.m,
            "support": [[v, p] for v, p in self.support],
            "mean": self.mean(),
            "variance": self.variance(),
        }


def exact_a1_distribution(chain: ReversibleChain, m: int, chain_name: str = "") -> ExactA1Distribution:
    """Enumerate every length-m path and aggregate the average's exact law.

    Support points within 1e-12 of each other are merged (their probability-
    weighted mean is kept, so the distribution's mean is preserved exactly);
    this recovers the exact-arithmetic collisions of the (1/m)-grid under
    floating point.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    s = chain.num_states
    if s**m > ENUMERATION_LIMIT:
        raise EnumerationTooLargeError(f"{s}^{m} paths exceed the {ENUMERATION_LIMIT} guard")
    kernel = chain.kernel.rows
    pi = chain.stationary.weights
    g = chain.observable

    mass_by_sum: dict[float, float] = {}

    def descend(state: int, depth: int, prob: float, g_sum: float) -> None:
        if depth == m:
            mass_by_sum[g_sum] = mass_by_sum.get(g_sum, 0.0) + prob
            return
        row = kernel[state]
        for nxt in range(s):
            p = row[nxt]
            if p == 0.0:
                continue
            descend(nxt, depth + 1, prob * p, g_sum + g[nxt])

    for x0 in range(s):
        if pi[x0] > 0.0:
            descend(x0, 1, float(pi[x0]), float(g[x0]))

    points = sorted((float(g_sum) / m, float(p)) for g_sum, p in mass_by_sum.items())
    merged: list[tuple[float, float]] = []
    for value, prob in points:
        if merged and value - merged[-1][0] <= SUPPORT_BIN:
            v0, p0 = merged[-1]
            total = p0 + prob
            merged[-1] = ((v0 * p0 + value * prob) / total, total)
        else:
            merged.append((value, prob))
    return ExactA1Distribution(support=tuple(merged), m=m, chain_name=chain_name)


def exact_tail(dist: ExactA1Distribution, gbar: float, lam: float) -> float:
    """Exact P(|A_1 - gbar| > lam), strict inequality."""
    return float(sum(p for v, p in dist.support if abs(v - gbar) > lam))


def _window_weight(lam: float, m: int) -> float:
    # m + 2 sum_{t=1}^{m-1} (m - t) lam^t; equals m^2 at lam = 1.
    total = float(m)
    power = 1.0
    for t in range(1, m):
        power *= lam
        total += 2.0 * (m - t) * power
    return total


def exact_variance_a1(chain: ReversibleChain, m: int) -> float:
    """Exact stationary variance of the m-step average, via the spectral form

        Var(A_1) = (1/m^2) sum_k c_k^2 * ( m + 2 sum_{t=1}^{m-1} (m-t) lambda_k^t ),

    where c_k is the coefficient of the centered observable on the k-th
    eigenfunction (orthonormal in the pi-weighted inner product).  Centering
    kills the constant-eigenfunction component, so reducible kernels (repeated
    eigenvalue 1) are handled too: frozen directions simply never decay and the
    identity kernel returns the plain stationary variance of the observable.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    values, vectors = spectral_decomposition(chain)
    pi = chain.stationary.weights
    centered = chain.observable - stationary_mean(chain)
    coefficients = vectors.T @ (np.sqrt(pi) * centered)
    total = 0.0
    for lam, c in zip(values, coefficients):
        if c == 0.0:
            continue
        total += (c * c) * _window_weight(float(lam), m)
    return total / (m * m)
