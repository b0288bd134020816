"""Adaptive doubling procedure: grow the trajectory budget until truncation stops.

The 2n exact samples are drawn once.  Stage k extends every trajectory to
m_k = 2^k * round(n * tau_hat) states (prefix-sharing: stage k+1 continues the
same per-trajectory streams, so the total number of simulated states is
2 n m_T, not the sum over stages).  At every stage the pilot mean, the
truncation with threshold log(n)/sqrt(n), and the stage interval at level
alpha/(a+1) are recomputed from scratch on the extended trajectories.

T is the first stage with zero truncations (or a if none); the reported
interval is stage T's, M = 2^T tau_hat, and the chain-step budget is
2 n m_T = 2 n^2 M paper steps (exactly, when n*tau_hat is an integer).
Whenever T < a the interval length is at most k^a_alpha * log(n)/n with
k^a_alpha = 2 (sqrt(2(a+1)/alpha) + log(4(a+1)/alpha)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chain_core import ReversibleChain, SeededStream, _walk, exact_sample
from .estimator_t1 import chain_stream, exact_stream, h_penalty, truncate_averages

DEFAULT_MAX_PAPER_STEPS = 10**9


class BudgetOverflowError(ValueError):
    """The worst-case stage budget exceeds the configured hard cap."""


@dataclass(frozen=True)
class T2Config:
    """Parameters of an adaptive run; the largest stage uses 2^a * tau_hat."""

    n: int
    alpha: float
    tau_hat: float
    a: int
    root_seed: int
    max_paper_steps: int = DEFAULT_MAX_PAPER_STEPS

    def __post_init__(self):
        if self.n < 5:
            raise ValueError("n must be at least 5")
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("alpha must lie strictly inside (0, 1)")
        if self.tau_hat < 1.0:
            raise ValueError("tau_hat must be at least 1")
        if self.a < 0 or int(self.a) != self.a:
            raise ValueError("a must be a non-negative integer")
        if not (0 <= int(self.root_seed) < 2**64):
            raise ValueError("root_seed must be an unsigned 64-bit integer")
        if self.max_paper_steps < 1:
            raise ValueError("max_paper_steps must be positive")

    @property
    def tau_hat_max(self) -> float:
        return (2.0**self.a) * self.tau_hat

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "alpha": self.alpha,
            "tau_hat": self.tau_hat,
            "a": self.a,
            "root_seed": self.root_seed,
            "max_paper_steps": self.max_paper_steps,
        }


@dataclass(frozen=True)
class StageRecord:
    """One doubling stage: budget m_k, truncation count, stage interval."""

    k: int
    m_k: int
    truncation_count: int
    stage_interval_lo: float
    stage_interval_hi: float

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "m_k": self.m_k,
            "truncation_count": self.truncation_count,
            "stage_interval_lo": self.stage_interval_lo,
            "stage_interval_hi": self.stage_interval_hi,
        }


@dataclass(frozen=True)
class T2Report:
    """Full adaptive run: visited stages, stopping stage T, budget multiplier M."""

    config: T2Config
    stages: tuple[StageRecord, ...]
    T: int
    M: float
    interval_lo: float
    interval_hi: float
    length_bound_applicable: bool
    exact_samples_used: int
    paper_steps_used: int
    transitions_used: int

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "stages": [s.to_dict() for s in self.stages],
            "T": self.T,
            "M": self.M,
            "interval_lo": self.interval_lo,
            "interval_hi": self.interval_hi,
            "length_bound_applicable": self.length_bound_applicable,
            "exact_samples_used": self.exact_samples_used,
            "paper_steps_used": self.paper_steps_used,
            "transitions_used": self.transitions_used,
        }


def k_alpha_a(alpha: float, a: int) -> float:
    """Stage-adjusted length constant 2 (sqrt(2(a+1)/alpha) + log(4(a+1)/alpha))."""
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie strictly inside (0, 1)")
    if a < 0:
        raise ValueError("a must be non-negative")
    return 2.0 * (math.sqrt(2.0 * (a + 1) / alpha) + math.log(4.0 * (a + 1) / alpha))


class _Walker:
    """A trajectory under incremental extension; continues one stream across stages."""

    def __init__(self, chain: ReversibleChain, start: int, stream: SeededStream):
        if not (0 <= start < chain.num_states):
            raise ValueError(f"start state {start} out of range")
        self._cum_rows = chain._cum_rows
        self._g = chain.observable
        self._gen = stream.generator()
        self._state = start
        self._length = 1
        self._g_sum = float(self._g[start])

    def extend_to(self, length: int) -> None:
        if length < self._length:
            raise ValueError("trajectories only grow")
        if length == self._length:
            return
        uniforms = self._gen.random(length - self._length)
        states = _walk(self._cum_rows, self._state, uniforms)
        self._g_sum += float(self._g[states[1:]].sum())
        self._state = int(states[-1])
        self._length = length

    def average(self) -> float:
        return self._g_sum / self._length


def run_t2(chain: ReversibleChain, config: T2Config) -> T2Report:
    """Execute the adaptive procedure; pure function of (chain, config)."""
    n = config.n
    m0 = int(round(n * config.tau_hat))
    worst_case_steps = 2 * n * (m0 << config.a)
    if worst_case_steps > config.max_paper_steps:
        raise BudgetOverflowError(
            f"worst-case budget {worst_case_steps} paper steps exceeds cap {config.max_paper_steps}"
        )

    # Exact samples and per-trajectory streams are fixed once; stages only
    # lengthen the walks, so stage-k states are prefixes of stage-(k+1) states.
    starts1 = [exact_sample(chain.stationary, exact_stream(config.root_seed, 1, i)) for i in range(n)]
    starts2 = [exact_sample(chain.stationary, exact_stream(config.root_seed, 2, i)) for i in range(n)]
    pilots = [_Walker(chain, z, chain_stream(config.root_seed, 1, i)) for i, z in enumerate(starts1)]
    walkers = [_Walker(chain, z, chain_stream(config.root_seed, 2, i)) for i, z in enumerate(starts2)]

    stage_alpha = config.alpha / (config.a + 1)
    threshold = math.log(n) / math.sqrt(n)
    stages: list[StageRecord] = []
    stop_stage = config.a

    for k in range(config.a + 1):
        m_k = m0 << k
        for walker in pilots:
            walker.extend_to(m_k)
        for walker in walkers:
            walker.extend_to(m_k)
        gbar_star = float(np.mean([w.average() for w in pilots]))
        averages = np.array([w.average() for w in walkers])
        truncated, count = truncate_averages(averages, gbar_star, threshold)
        a_tilde_bar = float(truncated.mean())
        half_width = (
            math.sqrt(2.0 / stage_alpha) * math.log(n) / n
            + h_penalty(count, n, stage_alpha / 2.0)
        )
        stages.append(StageRecord(
            k=k,
            m_k=m_k,
            truncation_count=count,
            stage_interval_lo=a_tilde_bar - half_width,
            stage_interval_hi=a_tilde_bar + half_width,
        ))
        if count == 0:
            stop_stage = k
            break

    final = stages[-1]
    m_final = final.m_k
    return T2Report(
        config=config,
        stages=tuple(stages),
        T=stop_stage,
        M=(2.0**stop_stage) * config.tau_hat,
        interval_lo=final.stage_interval_lo,
        interval_hi=final.stage_interval_hi,
        length_bound_applicable=stop_stage < config.a,
        exact_samples_used=2 * n,
        paper_steps_used=2 * n * m_final,
        transitions_used=2 * n * (m_final - 1),
    )


def stage_csv_rows(report: T2Report) -> list[dict]:
    """Row-per-stage export for experiment aggregation."""
    return [s.to_dict() for s in report.stages]
