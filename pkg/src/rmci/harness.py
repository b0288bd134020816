"""Chain gallery, replicated coverage experiments, and bound-vs-empirics checks.

The gallery holds small, fully analyzable chains chosen to exercise the two
obstacles to sharp estimation: slow directions (second-eigenfunction
observables) and nearly disconnected low-mass sets.  Coverage experiments run
R independent replications of an estimator, each with its own 64-bit root seed
derived from the experiment seed by a fixed splitmix64 mixer, so any single
replication can be replayed in isolation and summaries are bit-identical under
replay at any worker count.
"""

from __future__ import annotations

import dataclasses
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .chain_core import (
    INFINITE,
    ReversibleChain,
    spectral_decomposition,
    spectral_summary,
    stationary_mean,
    validate_chain,
)
from .deviation_bounds import con3_bound, prop2_bound
from .estimator_t1 import (
    T1Config,
    d_alpha,
    err_term,
    k_alpha,
    r_effective,
    run_t1,
)
from .estimator_t2 import T2Config, k_alpha_a, run_t2

_MASK64 = (1 << 64) - 1
_GOLDEN_GAMMA = 0x9E3779B97F4A7C15

LENGTH_QUANTILE_LEVELS = (0.5, 0.9, 0.99, 1.0)
LENGTH_IDENTITY_RTOL = 1e-12


def hash64(seed: int, index: int) -> int:
    """Fixed 64-bit mixer (splitmix64 finalizer over seed + (index+1)*gamma)."""
    x = (seed + (index + 1) * _GOLDEN_GAMMA) & _MASK64
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & _MASK64
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & _MASK64
    x ^= x >> 31
    return x


@dataclass(frozen=True)
class SeedSchedule:
    """Replication j runs with root seed hash64(experiment_seed, j)."""

    experiment_seed: int

    def root_seed(self, replication: int) -> int:
        return hash64(self.experiment_seed, replication)

    def to_dict(self) -> dict:
        return {"experiment_seed": self.experiment_seed, "mixer": "splitmix64"}


# --------------------------------------------------------------------------
# Gallery
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GalleryEntry:
    name: str
    chain: ReversibleChain
    closed_form_tau2: float | None
    notes: str

    def to_dict(self) -> dict:
        tau2 = self.closed_form_tau2
        if tau2 is not None and math.isinf(tau2):
            tau2 = "INFINITE"
        return {
            "name": self.name,
            "num_states": self.chain.num_states,
            "closed_form_tau2": tau2,
            "notes": self.notes,
        }


def two_state(p: float, q: float, observable=(0.0, 1.0)) -> ReversibleChain:
    """Two states with crossing probabilities p and q; relaxation time 1/(p+q)."""
    if not (0 < p <= 1 and 0 < q <= 1):
        raise ValueError("p and q must lie in (0, 1]")
    kernel = [[1.0 - p, p], [q, 1.0 - q]]
    pi = [q / (p + q), p / (p + q)]
    return validate_chain(kernel, pi, observable)


def lazy_cycle(length: int, observable=None) -> ReversibleChain:
    """Lazy simple random walk on a cycle: hold 1/2, step +-1 with 1/4 each.

    Uniform stationary law; relaxation time 2/(1 - cos(2 pi / length)).
    """
    if length < 3:
        raise ValueError("cycle needs at least 3 states")
    kernel = np.zeros((length, length))
    for i in range(length):
        kernel[i, i] = 0.5
        kernel[i, (i + 1) % length] += 0.25
        kernel[i, (i - 1) % length] += 0.25
    pi = np.full(length, 1.0 / length)
    if observable is None:
        observable = np.arange(length) / (length - 1)
    return validate_chain(kernel, pi, observable)


def lazy_cycle_tau2(length: int) -> float:
    return 2.0 / (1.0 - math.cos(2.0 * math.pi / length))


def identity_chain(num_states: int, observable=None) -> ReversibleChain:
    """Frozen kernel (reversible for any law; here uniform); relaxation time INFINITE."""
    if num_states < 2:
        raise ValueError("need at least 2 states")
    if observable is None:
        observable = np.arange(num_states) / (num_states - 1)
    return validate_chain(np.eye(num_states), np.full(num_states, 1.0 / num_states), observable)


def two_islands(island_sizes: tuple[int, int], eps: float, mass_denominator: int,
                observable=None) -> ReversibleChain:
    """Two complete-graph-like blocks joined by rare crossings; island 2 has mass 1/n.

    Proposal: with probability 1-eps a uniform state of the own island
    (self included), with probability eps a uniform state of the other island.
    Cross moves carry the Metropolis-Hastings acceptance for the target law
    that is uniform within islands with island masses (1 - 1/n, 1/n), which
    yields detailed balance by construction: the island-1 -> island-2 move is
    accepted with probability 1/(n-1), the reverse always.
    """
    s1, s2 = island_sizes
    n = mass_denominator
    if s1 < 1 or s2 < 1:
        raise ValueError("islands must be non-empty")
    if not (0 < eps < 1):
        raise ValueError("eps must lie in (0, 1)")
    if n < 2:
        raise ValueError("mass denominator must be at least 2")
    total = s1 + s2
    pi = np.empty(total)
    pi[:s1] = (1.0 - 1.0 / n) / s1
    pi[s1:] = (1.0 / n) / s2
    accept_12 = 1.0 / (n - 1)

    kernel = np.zeros((total, total))
    kernel[:s1, :s1] = (1.0 - eps) / s1
    kernel[s1:, s1:] = (1.0 - eps) / s2
    kernel[:s1, s1:] = (eps / s2) * accept_12
    kernel[s1:, :s1] = eps / s1
    rejected = eps * (1.0 - accept_12)
    kernel[np.arange(s1), np.arange(s1)] += rejected

    if observable is None:
        observable = np.concatenate([np.zeros(s1), np.ones(s2)])
    return validate_chain(kernel, pi, observable)


def g2_observable(chain: ReversibleChain) -> tuple[np.ndarray, float, float]:
    """Second eigenfunction of the kernel, affinely rescaled into [0, 1].

    Returns (g, scale, offset) with g = (f2 - offset) / scale, so the original
    eigenfunction is recoverable and the rescaling is on record.  The sign is
    canonicalized (first nonzero component positive) for reproducibility.
    """
    _, vectors = spectral_decomposition(chain)
    f2 = vectors[:, 1] / np.sqrt(chain.stationary.weights)
    for x in f2:
        if abs(x) > 1e-12:
            if x < 0:
                f2 = -f2
            break
    offset = float(f2.min())
    scale = float(f2.max() - f2.min())
    if scale <= 0:
        raise ValueError("second eigenfunction is constant; cannot rescale")
    return (f2 - offset) / scale, scale, offset


def _g2_variant(name: str, base: ReversibleChain, tau2: float | None, base_notes: str) -> GalleryEntry:
    g, scale, offset = g2_observable(base)
    chain = validate_chain(base.kernel, base.stationary, g)
    notes = (
        f"{base_notes}; observable = second eigenfunction rescaled into [0,1] "
        f"(g = (f2 - {offset!r}) / {scale!r})"
    )
    return GalleryEntry(name=name, chain=chain, closed_form_tau2=tau2, notes=notes)


def gallery() -> list[GalleryEntry]:
    """Built-in chains: crossing pairs, lazy cycles, near-disconnected islands,
    slow-observable variants, and the frozen identity baseline."""
    entries = [
        GalleryEntry(
            name="two_state_0.5_0.5",
            chain=two_state(0.5, 0.5),
            closed_form_tau2=1.0,
            notes="two states, p = q = 0.5, g = (0, 1)",
        ),
        GalleryEntry(
            name="two_state_0.1_0.1",
            chain=two_state(0.1, 0.1),
            closed_form_tau2=5.0,
            notes="two states, p = q = 0.1, g = (0, 1)",
        ),
        GalleryEntry(
            name="lazy_cycle_4",
            chain=lazy_cycle(4),
            closed_form_tau2=lazy_cycle_tau2(4),
            notes="lazy walk on the 4-cycle, g = linear ramp",
        ),
        GalleryEntry(
            name="lazy_cycle_8",
            chain=lazy_cycle(8),
            closed_form_tau2=lazy_cycle_tau2(8),
            notes="lazy walk on the 8-cycle, g = linear ramp",
        ),
        GalleryEntry(
            name="lazy_cycle_16",
            chain=lazy_cycle(16),
            closed_form_tau2=lazy_cycle_tau2(16),
            notes="lazy walk on the 16-cycle, g = linear ramp",
        ),
        GalleryEntry(
            name="two_islands_4_2_n10",
            chain=two_islands((4, 2), eps=0.05, mass_denominator=10),
            closed_form_tau2=None,
            notes="near-disconnected islands (4+2 states, eps = 0.05), island mass 1/10, g = island indicator",
        ),
        _g2_variant(
            "g2_two_state_0.3_0.2",
            two_state(0.3, 0.2),
            tau2=2.0,
            base_notes="two states, p = 0.3, q = 0.2",
        ),
        _g2_variant(
            "g2_lazy_cycle_8",
            lazy_cycle(8),
            tau2=lazy_cycle_tau2(8),
            base_notes="lazy walk on the 8-cycle",
        ),
        GalleryEntry(
            name="identity_3",
            chain=identity_chain(3, observable=(0.0, 0.5, 1.0)),
            closed_form_tau2=INFINITE,
            notes="frozen kernel on 3 states; reducible, relaxation time INFINITE",
        ),
    ]
    return entries


def gallery_entry(name: str) -> GalleryEntry:
    for entry in gallery():
        if entry.name == name:
            return entry
    raise KeyError(f"no gallery chain named {name!r}")


# --------------------------------------------------------------------------
# Coverage experiments
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ReplicationRecord:
    """Per-replication facts kept for CSV export and aggregation."""

    index: int
    root_seed: int
    miss: bool
    truncation_count: int
    length: float
    T: int | None
    M: float | None
    length_identity_ok: bool | None
    length_bound_ok: bool | None
    budget_identity_ok: bool | None
    budget_exceeded: bool | None


@dataclass(frozen=True)
class BoundComparison:
    name: str
    empirical: float
    bound: float
    three_sigma: float
    satisfied: bool

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "empirical": self.empirical,
            "bound": self.bound,
            "three_sigma": self.three_sigma,
            "satisfied": self.satisfied,
        }


@dataclass(frozen=True)
class CoverageSummary:
    """Aggregated replication statistics plus every bound comparison."""

    estimator: str
    chain_name: str
    config: dict
    replications: int
    miss_count: int
    empirical_miss_rate: float
    trunc_positive_count: int
    length_quantiles: dict[str, float]
    bound_comparisons: tuple[BoundComparison, ...]
    seed_schedule: dict
    true_gbar: float
    records: tuple[ReplicationRecord, ...] = dataclasses.field(repr=False)

    def to_dict(self) -> dict:
        return {
            "estimator": self.estimator,
            "chain_name": self.chain_name,
            "config": self.config,
            "replications": self.replications,
            "miss_count": self.miss_count,
            "empirical_miss_rate": self.empirical_miss_rate,
            "trunc_positive_count": self.trunc_positive_count,
            "length_quantiles": self.length_quantiles,
            "bound_comparisons": [b.to_dict() for b in self.bound_comparisons],
            "seed_schedule": self.seed_schedule,
            "true_gbar": self.true_gbar,
        }

    def comparison(self, name: str) -> BoundComparison:
        for b in self.bound_comparisons:
            if b.name == name:
                return b
        raise KeyError(name)


def _replicate_t1(args) -> ReplicationRecord:
    chain, config, index, root_seed, gbar = args
    report = run_t1(chain, dataclasses.replace(config, root_seed=root_seed))
    length = report.interval_hi - report.interval_lo
    identity_ok = None
    bound_ok = None
    if report.truncation.good_event:
        n, m = config.n, config.m
        err = err_term(n, r_effective(n, m, config.tau_hat))
        expected = 2.0 * (
            math.sqrt(2.0 / config.alpha) * err * math.log(n) + d_alpha(config.alpha / 2.0) / n
        )
        identity_ok = abs(length - expected) <= LENGTH_IDENTITY_RTOL * expected
        bound_ok = length <= k_alpha(config.alpha) * err * math.log(n)
    return ReplicationRecord(
        index=index,
        root_seed=root_seed,
        miss=not (report.interval_lo <= gbar <= report.interval_hi),
        truncation_count=report.truncation.truncation_count,
        length=length,
        T=None,
        M=None,
        length_identity_ok=identity_ok,
        length_bound_ok=bound_ok,
        budget_identity_ok=None,
        budget_exceeded=None,
    )


def _replicate_t2(args) -> ReplicationRecord:
    chain, config, index, root_seed, gbar, tau2 = args
    report = run_t2(chain, dataclasses.replace(config, root_seed=root_seed))
    n = config.n
    length = report.interval_hi - report.interval_lo
    bound_ok = None
    if report.length_bound_applicable:
        bound_ok = length <= k_alpha_a(config.alpha, config.a) * math.log(n) / n
    budget_identity_ok = float(report.paper_steps_used) == 2.0 * n * n * report.M
    exceeded = None
    if not math.isinf(tau2):
        exceeded = report.M > 96.0 * max(tau2, config.tau_hat)
    return ReplicationRecord(
        index=index,
        root_seed=root_seed,
        miss=not (report.interval_lo <= gbar <= report.interval_hi),
        truncation_count=report.stages[-1].truncation_count,
        length=length,
        T=report.T,
        M=report.M,
        length_identity_ok=None,
        length_bound_ok=bound_ok,
        budget_identity_ok=budget_identity_ok,
        budget_exceeded=exceeded,
    )


def _worker_count(workers: int | None) -> int:
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("RMCI_THREADS", "")
    if env.strip():
        return max(1, int(env))
    return 1


def _map_ordered(fn, jobs, workers: int):
    if workers <= 1:
        return [fn(job) for job in jobs]
    chunk = max(1, len(jobs) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs, chunksize=chunk))


def _three_sigma(p_hat: float, r: int) -> float:
    return 3.0 * math.sqrt(p_hat * (1.0 - p_hat) / r)


def _length_quantiles(lengths: list[float]) -> dict[str, float]:
    ordered = sorted(lengths)
    r = len(ordered)
    out = {}
    for q in LENGTH_QUANTILE_LEVELS:
        idx = min(r - 1, max(0, math.ceil(q * r) - 1))
        out[str(q)] = ordered[idx]
    return out


def coverage_experiment(chain: ReversibleChain, estimator: str, base_config,
                        replications: int, schedule: SeedSchedule,
                        chain_name: str = "", workers: int | None = None) -> CoverageSummary:
    """Run R independent replications and compare every empirical rate to its bound.

    Misses are judged against the raw interval and the exact target
    sum_i pi_i g(i).  For the single-guess estimator the truncation-positive
    count is compared to the closed-form truncation bound; the deterministic
    short-interval length identity and the k_alpha length cap are checked in
    every good-event replication.  For the adaptive estimator the
    (T < a) length bound and the 2 n^2 M budget identity are checked per run
    and the budget-overshoot rate is compared to its parameter-free bound.
    Deterministic given the seed schedule, at any worker count.
    """
    if replications < 1:
        raise ValueError("need at least one replication")
    if estimator not in ("t1", "t2"):
        raise ValueError("estimator must be 't1' or 't2'")
    workers = _worker_count(workers)
    gbar = stationary_mean(chain)
    tau2 = spectral_summary(chain).relaxation_time

    if estimator == "t1":
        if not isinstance(base_config, T1Config):
            raise TypeError("t1 experiments need a T1Config")
        jobs = [
            (chain, base_config, j, schedule.root_seed(j), gbar)
            for j in range(replications)
        ]
        records = _map_ordered(_replicate_t1, jobs, workers)
    else:
        if not isinstance(base_config, T2Config):
            raise TypeError("t2 experiments need a T2Config")
        jobs = [
            (chain, base_config, j, schedule.root_seed(j), gbar, tau2)
            for j in range(replications)
        ]
        records = _map_ordered(_replicate_t2, jobs, workers)

    miss_count = sum(1 for rec in records if rec.miss)
    miss_rate = miss_count / replications

    comparisons = []
    alpha = base_config.alpha
    comparisons.append(BoundComparison(
        name="validity",
        empirical=miss_rate,
        bound=alpha,
        three_sigma=_three_sigma(alpha, replications),
        satisfied=miss_rate <= alpha + _three_sigma(alpha, replications),
    ))

    if estimator == "t1":
        trunc_positive = sum(1 for rec in records if rec.truncation_count > 0)
        p_hat = trunc_positive / replications
        if not math.isinf(tau2):
            bound = prop2_bound(base_config.n, base_config.m, tau2).value
            comparisons.append(BoundComparison(
                name="prop2_truncation",
                empirical=p_hat,
                bound=bound,
                three_sigma=_three_sigma(p_hat, replications),
                satisfied=p_hat <= bound + _three_sigma(p_hat, replications),
            ))
        good = [rec for rec in records if rec.truncation_count == 0]
        identity_violations = sum(1 for rec in good if rec.length_identity_ok is False)
        cap_violations = sum(1 for rec in good if rec.length_bound_ok is False)
        comparisons.append(BoundComparison(
            name="good_event_length_identity",
            empirical=identity_violations / replications,
            bound=0.0,
            three_sigma=0.0,
            satisfied=identity_violations == 0,
        ))
        comparisons.append(BoundComparison(
            name="good_event_length_cap",
            empirical=cap_violations / replications,
            bound=0.0,
            three_sigma=0.0,
            satisfied=cap_violations == 0,
        ))
    else:
        trunc_positive = sum(1 for rec in records if rec.truncation_count > 0)
        applicable = [rec for rec in records if rec.length_bound_ok is not None]
        con2_violations = sum(1 for rec in applicable if not rec.length_bound_ok)
        comparisons.append(BoundComparison(
            name="con2_length",
            empirical=con2_violations / replications,
            bound=0.0,
            three_sigma=0.0,
            satisfied=con2_violations == 0,
        ))
        budget_violations = sum(1 for rec in records if rec.budget_identity_ok is False)
        comparisons.append(BoundComparison(
            name="budget_identity",
            empirical=budget_violations / replications,
            bound=0.0,
            three_sigma=0.0,
            satisfied=budget_violations == 0,
        ))
        if not math.isinf(tau2):
            exceed = sum(1 for rec in records if rec.budget_exceeded)
            p_hat = exceed / replications
            bound = con3_bound(base_config.n).value
            comparisons.append(BoundComparison(
                name="con3_budget",
                empirical=p_hat,
                bound=bound,
                three_sigma=_three_sigma(p_hat, replications),
                satisfied=p_hat <= bound + _three_sigma(p_hat, replications),
            ))

    return CoverageSummary(
        estimator=estimator,
        chain_name=chain_name,
        config=base_config.to_dict(),
        replications=replications,
        miss_count=miss_count,
        empirical_miss_rate=miss_rate,
        trunc_positive_count=trunc_positive,
        length_quantiles=_length_quantiles([rec.length for rec in records]),
        bound_comparisons=tuple(comparisons),
        seed_schedule={**schedule.to_dict(), "replications": replications},
        true_gbar=gbar,
        records=tuple(records),
    )


def replication_csv_rows(summary: CoverageSummary) -> list[dict]:
    """Per-replication rows (miss flag, truncation count, length, T, M)."""
    rows = []
    for rec in summary.records:
        rows.append({
            "index": rec.index,
            "root_seed": rec.root_seed,
            "miss": int(rec.miss),
            "truncation_count": rec.truncation_count,
            "length": rec.length,
            "T": "" if rec.T is None else rec.T,
            "M": "" if rec.M is None else rec.M,
        })
    return rows


# --------------------------------------------------------------------------
# Near-disconnected bias demo
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class IslandBiasReport:
    """How much of the target mean an unvisited island of mass 1/n can hide."""

    island_mass: float
    full_mean: float
    visible_mean: float
    invisible_contribution: float
    within_bound: bool

    def to_dict(self) -> dict:
        return {
            "island_mass": self.island_mass,
            "full_mean": self.full_mean,
            "visible_mean": self.visible_mean,
            "invisible_contribution": self.invisible_contribution,
            "within_bound": self.within_bound,
        }


def near_disconnected_bias_demo(n: int, island_sizes: tuple[int, int] = (4, 2),
                                eps: float = 0.05, observable=None) -> IslandBiasReport:
    """Quantify the invisible contribution of the nearly disconnected island.

    Simulations that never enter the island estimate only the visible part
    sum_{i not in A} pi_i g(i); the difference is exactly the island's
    contribution to the mean, at most 1/n since g <= 1.
    """
    chain = two_islands(island_sizes, eps=eps, mass_denominator=n, observable=observable)
    s1 = island_sizes[0]
    pi = chain.stationary.weights
    g = chain.observable
    full = float(pi @ g)
    visible = float(pi[:s1] @ g[:s1])
    invisible = full - visible
    return IslandBiasReport(
        island_mass=float(pi[s1:].sum()),
        full_mean=full,
        visible_mean=visible,
        invisible_contribution=invisible,
        within_bound=invisible <= 1.0 / n + 1e-12,
    )
