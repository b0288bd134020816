"""Single-guess confidence interval from two exact-start trajectory phases.

Given a guess tau_hat for the relaxation time, run two independent phases of n
trajectories, each of m states and each started from its own exact stationary
draw.  Phase 1 yields the pilot mean gbar_star.  Phase 2 yields per-trajectory
averages A_i, truncated back to gbar_star whenever |A_i - gbar_star| exceeds
log(n)/sqrt(r) with r = min(n, m/tau_hat).  The reported interval is

    a_tilde_bar +- ( sqrt(2/alpha) * err * log(n) + h(N, n; alpha/2) ),

where a_tilde_bar is the truncated mean, N the truncation count,
err = 1/sqrt(n r), and h the data-dependent penalty below.  Zero truncations
("good event") give the short interval whose length is a closed form of
(n, m, alpha, tau_hat) alone and is at most k_alpha * err * log(n).

Budget: 2n exact samples and 2mn paper steps (m per trajectory, counting the
initial state), i.e. 2n(m-1) transitions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chain_core import (
    ReversibleChain,
    SeededStream,
    exact_sample,
    simulate_trajectory,
    trajectory_average,
)

SHORT = "short"
LONG = "long"

# Stream path layout: (phase, role, index).  Phase 1 is the pilot, phase 2 the
# estimation phase; each exact draw and each trajectory owns its own stream.
ROLE_EXACT = 0
ROLE_CHAIN = 1


@dataclass(frozen=True)
class T1Config:
    """Parameters of a single-guess run; n >= 3 guarantees log(n) > 1."""

    n: int
    m: int
    alpha: float
    tau_hat: float
    root_seed: int

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("n must be at least 3")
        if self.m < 1:
            raise ValueError("m must be at least 1")
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("alpha must lie strictly inside (0, 1)")
        if self.tau_hat < 1.0:
            raise ValueError("tau_hat must be at least 1")
        if not (0 <= int(self.root_seed) < 2**64):
            raise ValueError("root_seed must be an unsigned 64-bit integer")

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "alpha": self.alpha,
            "tau_hat": self.tau_hat,
            "root_seed": self.root_seed,
        }


@dataclass(frozen=True)
class PhaseData:
    """One phase: the exact starts, per-trajectory averages, and their mean."""

    exact_starts: tuple[int, ...]
    averages: tuple[float, ...]
    phase_mean: float

    def to_dict(self) -> dict:
        return {
            "exact_starts": list(self.exact_starts),
            "averages": list(self.averages),
            "phase_mean": self.phase_mean,
        }


@dataclass(frozen=True)
class TruncationResult:
    """Truncated averages, the truncation count N, and the threshold used."""

    truncated_averages: tuple[float, ...]
    truncation_count: int
    good_event: bool
    threshold: float

    def to_dict(self) -> dict:
        return {
            "truncated_averages": list(self.truncated_averages),
            "truncation_count": self.truncation_count,
            "good_event": self.good_event,
            "threshold": self.threshold,
        }


@dataclass(frozen=True)
class T1Report:
    """Complete output of one run, raw and [0,1]-clipped interval included."""

    config: T1Config
    gbar_star: float
    a_tilde_bar: float
    phase1: PhaseData
    phase2: PhaseData
    truncation: TruncationResult
    interval_lo: float
    interval_hi: float
    interval_clipped_lo: float
    interval_clipped_hi: float
    classification: str
    exact_samples_used: int
    paper_steps_used: int
    transitions_used: int
    r_value: float
    err_value: float

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "gbar_star": self.gbar_star,
            "a_tilde_bar": self.a_tilde_bar,
            "phase1": self.phase1.to_dict(),
            "phase2": self.phase2.to_dict(),
            "truncation": self.truncation.to_dict(),
            "interval_lo": self.interval_lo,
            "interval_hi": self.interval_hi,
            "interval_clipped_lo": self.interval_clipped_lo,
            "interval_clipped_hi": self.interval_clipped_hi,
            "classification": self.classification,
            "exact_samples_used": self.exact_samples_used,
            "paper_steps_used": self.paper_steps_used,
            "transitions_used": self.transitions_used,
            "r_value": self.r_value,
            "err_value": self.err_value,
        }


def c_alpha(alpha: float) -> float:
    return 1.0 / math.sqrt(2.0 * alpha)


def d_alpha(alpha: float) -> float:
    return math.log(2.0 / alpha)


def k_alpha(alpha: float) -> float:
    """Length constant 2 (sqrt(2/alpha) + log(4/alpha))."""
    return 2.0 * (math.sqrt(2.0 / alpha) + math.log(4.0 / alpha))


def r_effective(n: int, m: int, tau_hat: float) -> float:
    """Effective sample size per trajectory batch: min(n, m / tau_hat)."""
    if n < 1 or m < 1:
        raise ValueError("n and m must be at least 1")
    if tau_hat < 1.0:
        raise ValueError("tau_hat must be at least 1")
    return min(float(n), m / tau_hat)


def err_term(n: int, r: float) -> float:
    """Scale of the truncated mean's standard deviation: 1/sqrt(n r)."""
    if n < 1 or r <= 0:
        raise ValueError("n must be >= 1 and r positive")
    return 1.0 / math.sqrt(n * r)


def truncation_threshold(n: int, r: float) -> float:
    return math.log(n) / math.sqrt(r)


def truncate_averages(averages, center: float, threshold: float) -> tuple[np.ndarray, int]:
    """Replace every average with |A - center| > threshold by the center itself.

    Ties |A - center| == threshold are kept.  Returns the truncated array and
    the count of replaced entries (counted by the threshold rule, not by value
    comparison, so an average equal to the center never counts).
    """
    a = np.asarray(averages, dtype=float)
    keep = np.abs(a - center) <= threshold
    return np.where(keep, a, center), int(np.count_nonzero(~keep))


def h_penalty(z: int, n: int, alpha: float) -> float:
    """Data-dependent slack added to the half-width:

        z/n + c_alpha/sqrt(n)   if z != 0,
        d_alpha/n               if z == 0,

    with c_alpha = 1/sqrt(2 alpha) and d_alpha = log(2/alpha) (natural log;
    the calibration (1 - d_alpha/n)^n <= alpha/2 forces it).
    """
    if not (0 <= z <= n):
        raise ValueError("z must lie in [0, n]")
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie strictly inside (0, 1)")
    if z == 0:
        return d_alpha(alpha) / n
    return z / n + c_alpha(alpha) / math.sqrt(n)


def target_length(n: int, m: int, alpha: float, tau_hat: float) -> float:
    """Length the short interval is guaranteed not to exceed: k_alpha err log n."""
    r = r_effective(n, m, tau_hat)
    return k_alpha(alpha) * err_term(n, r) * math.log(n)


def good_event_length(n: int, m: int, alpha: float, tau_hat: float) -> float:
    """Exact short-interval length, 2 (sqrt(2/alpha) err log n + d_{alpha/2}/n)."""
    r = r_effective(n, m, tau_hat)
    err = err_term(n, r)
    return 2.0 * (math.sqrt(2.0 / alpha) * err * math.log(n) + d_alpha(alpha / 2.0) / n)


def prop1_interval(a_tilde_bar: float, truncation_count: int, n: int, r: float,
                   alpha: float, b: float) -> tuple[float, float]:
    """Diagnostic interval with the concentration multiplier b left free:

        a_tilde_bar +- (b err log n + h(N, n; alpha)),

    which misses the target with probability at most 1/b^2 + alpha.  The
    production interval is the specialization alpha -> alpha/2, b = sqrt(2/alpha).
    """
    if b <= 0:
        raise ValueError("b must be positive")
    half = b * err_term(n, r) * math.log(n) + h_penalty(truncation_count, n, alpha)
    return a_tilde_bar - half, a_tilde_bar + half


def exact_stream(root_seed: int, phase: int, index: int) -> SeededStream:
    """Stream of the index-th exact draw of a phase (documented schedule)."""
    return SeededStream(root_seed, (phase, ROLE_EXACT, index))


def chain_stream(root_seed: int, phase: int, index: int) -> SeededStream:
    """Stream of the index-th trajectory of a phase (documented schedule)."""
    return SeededStream(root_seed, (phase, ROLE_CHAIN, index))


def _run_phase(chain: ReversibleChain, n: int, m: int, root_seed: int, phase: int) -> PhaseData:
    starts = tuple(
        exact_sample(chain.stationary, exact_stream(root_seed, phase, i)) for i in range(n)
    )
    averages = []
    for i, z in enumerate(starts):
        traj = simulate_trajectory(chain, z, m, chain_stream(root_seed, phase, i))
        averages.append(trajectory_average(chain, traj))
    return PhaseData(
        exact_starts=starts,
        averages=tuple(averages),
        phase_mean=float(np.mean(averages)),
    )


def run_t1(chain: ReversibleChain, config: T1Config) -> T1Report:
    """Execute the full two-phase procedure; pure function of (chain, config)."""
    n, m = config.n, config.m
    phase1 = _run_phase(chain, n, m, config.root_seed, phase=1)
    phase2 = _run_phase(chain, n, m, config.root_seed, phase=2)

    gbar_star = phase1.phase_mean
    r = r_effective(n, m, config.tau_hat)
    err = err_term(n, r)
    threshold = truncation_threshold(n, r)

    truncated, count = truncate_averages(phase2.averages, gbar_star, threshold)
    truncation = TruncationResult(
        truncated_averages=tuple(float(x) for x in truncated),
        truncation_count=count,
        good_event=count == 0,
        threshold=threshold,
    )

    a_tilde_bar = float(truncated.mean())
    half_width = (
        math.sqrt(2.0 / config.alpha) * err * math.log(n)
        + h_penalty(count, n, config.alpha / 2.0)
    )
    lo = a_tilde_bar - half_width
    hi = a_tilde_bar + half_width

    return T1Report(
        config=config,
        gbar_star=gbar_star,
        a_tilde_bar=a_tilde_bar,
        phase1=phase1,
        phase2=phase2,
        truncation=truncation,
        interval_lo=lo,
        interval_hi=hi,
        interval_clipped_lo=min(max(lo, 0.0), 1.0),
        interval_clipped_hi=max(min(hi, 1.0), 0.0),
        classification=SHORT if truncation.good_event else LONG,
        exact_samples_used=2 * n,
        paper_steps_used=2 * m * n,
        transitions_used=2 * (m - 1) * n,
        r_value=r,
        err_value=err,
    )
