"""Finite reversible Markov chains: validation, spectra, exact sampling, trajectories.

A chain is the triple (K, pi, g): a row-stochastic kernel K in detailed balance
with the fully supported stationary distribution pi, plus a bounded observable
g with values in [0, 1].  Detailed balance makes D^{1/2} K D^{-1/2} symmetric
(D = diag(pi)), so the spectrum of K is real and a deterministic symmetric
eigensolver yields the relaxation time 1/(1 - lambda_2).

Randomness is threaded through SeededStream values: a 64-bit root seed plus a
hierarchical substream path.  Identical (root_seed, stream_path) always yields
the identical uniform sequence, so every operation in this module is a pure
function of its arguments; callers may run any number of simulations
concurrently and get results independent of scheduling.

Tolerances are fixed artifact-wide:

* row sums and probability mass: 1e-12 absolute,
* detailed balance: 1e-12 relative per (i, j) pair,
* stationarity (pi K = pi): 1e-10 per coordinate,
* spectral checks (lambda_1 = 1, eigenvalue range): 1e-10.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

ROW_SUM_TOL = 1e-12
PROB_SUM_TOL = 1e-12
DETAILED_BALANCE_RTOL = 1e-12
STATIONARITY_TOL = 1e-10
SPECTRAL_TOL = 1e-10

#: Distinguished relaxation time of a reducible (or nearly reducible) kernel.
INFINITE = math.inf


class ChainValidationError(ValueError):
    """Base class for chain construction failures."""


class RowSumError(ChainValidationError):
    """A kernel row is not a probability vector."""


class DetailedBalanceError(ChainValidationError):
    """pi_i k_ij != pi_j k_ji for some pair of states."""


class StationarityError(ChainValidationError):
    """pi K != pi beyond tolerance (independent check on top of detailed balance)."""


class ObservableRangeError(ChainValidationError):
    """Some observable value lies outside [0, 1]."""


class DegenerateStationaryError(ChainValidationError):
    """Stationary distribution has a zero entry; symmetrization is undefined."""


def _as_readonly(values, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ProbabilityVector:
    """Non-negative weights summing to one (1e-12 absolute)."""

    weights: np.ndarray

    def __post_init__(self):
        w = _as_readonly(self.weights)
        if w.ndim != 1 or w.size == 0:
            raise ChainValidationError("probability vector must be 1-d and non-empty")
        if np.any(w < 0):
            raise ChainValidationError("probability vector has a negative entry")
        total = float(w.sum())
        if abs(total - 1.0) > PROB_SUM_TOL:
            raise ChainValidationError(f"probability mass {total!r} differs from 1 beyond {PROB_SUM_TOL}")
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return self.weights.size

    def cumulative(self) -> np.ndarray:
        """Cumulative sums; the inverse-CDF cell of state i is [c_{i-1}, c_i)."""
        return np.cumsum(self.weights)


@dataclass(frozen=True)
class TransitionKernel:
    """Row-stochastic matrix; entry (i, j) is the one-step probability i -> j."""

    rows: np.ndarray

    def __post_init__(self):
        k = _as_readonly(self.rows)
        if k.ndim != 2 or k.shape[0] != k.shape[1] or k.shape[0] == 0:
            raise RowSumError("kernel must be a non-empty square matrix")
        if np.any(k < 0) or np.any(k > 1):
            raise RowSumError("kernel entries must lie in [0, 1]")
        sums = k.sum(axis=1)
        bad = np.abs(sums - 1.0) > ROW_SUM_TOL
        if np.any(bad):
            i = int(np.argmax(bad))
            raise RowSumError(f"row {i} sums to {sums[i]!r}, off by more than {ROW_SUM_TOL}")
        object.__setattr__(self, "rows", k)

    @property
    def num_states(self) -> int:
        return self.rows.shape[0]


@dataclass(frozen=True)
class ReversibleChain:
    """Validated triple (kernel, stationary, observable); immutable and shareable.

    Construction enforces every invariant: stochastic rows, fully supported
    stationary distribution, detailed balance, stationarity, observable range.
    """

    kernel: TransitionKernel
    stationary: ProbabilityVector
    observable: np.ndarray
    _cum_rows: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        k = self.kernel.rows
        pi = self.stationary.weights
        g = _as_readonly(self.observable)
        s = k.shape[0]
        if len(pi) != s:
            raise ChainValidationError(f"stationary length {len(pi)} != {s} states")
        if g.ndim != 1 or g.size != s:
            raise ChainValidationError(f"observable length {g.size} != {s} states")
        if np.any(pi == 0.0):
            raise DegenerateStationaryError("stationary distribution must be fully supported")
        flow = pi[:, None] * k
        scale = np.maximum(np.maximum(flow, flow.T), 1e-300)
        gap = np.abs(flow - flow.T)
        if np.any(gap > DETAILED_BALANCE_RTOL * scale):
            i, j = np.unravel_index(int(np.argmax(gap / scale)), gap.shape)
            raise DetailedBalanceError(
                f"pi_{i} k_{i}{j} = {flow[i, j]!r} vs pi_{j} k_{j}{i} = {flow[j, i]!r}"
            )
        drift = np.abs(pi @ k - pi)
        if np.any(drift > STATIONARITY_TOL):
            i = int(np.argmax(drift))
            raise StationarityError(f"(pi K - pi)[{i}] = {drift[i]!r} exceeds {STATIONARITY_TOL}")
        if np.any(g < 0) or np.any(g > 1):
            raise ObservableRangeError("observable values must lie in [0, 1]")
        object.__setattr__(self, "observable", g)
        cum = np.ascontiguousarray(np.cumsum(k, axis=1))
        cum.setflags(write=False)
        object.__setattr__(self, "_cum_rows", cum)

    @property
    def num_states(self) -> int:
        return self.kernel.num_states


def validate_chain(kernel, stationary, observable) -> ReversibleChain:
    """Build a ReversibleChain from raw (or typed) pieces, checking every invariant."""
    if not isinstance(kernel, TransitionKernel):
        kernel = TransitionKernel(kernel)
    if not isinstance(stationary, ProbabilityVector):
        stationary = ProbabilityVector(stationary)
    return ReversibleChain(kernel, stationary, observable)


def stationary_mean(chain: ReversibleChain) -> float:
    """The target of estimation: sum_i pi_i g(i)."""
    return float(chain.stationary.weights @ chain.observable)


# --------------------------------------------------------------------------
# Spectral quantities
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SpectralSummary:
    """Eigenvalues of the kernel (descending) and the relaxation time 1/(1 - lambda_2)."""

    eigenvalues: np.ndarray
    lambda2: float
    relaxation_time: float

    def __post_init__(self):
        vals = _as_readonly(self.eigenvalues)
        if vals.size < 2:
            raise ChainValidationError("spectral summary needs at least two states")
        if abs(vals[0] - 1.0) > SPECTRAL_TOL:
            raise ChainValidationError(f"leading eigenvalue {vals[0]!r} differs from 1")
        if np.any(vals < -1.0 - SPECTRAL_TOL) or np.any(vals > 1.0 + SPECTRAL_TOL):
            raise ChainValidationError("eigenvalue outside [-1, 1] beyond tolerance")
        object.__setattr__(self, "eigenvalues", vals)


def symmetrized_kernel(chain: ReversibleChain) -> np.ndarray:
    """D^{1/2} K D^{-1/2} with D = diag(pi); symmetric whenever detailed balance holds."""
    pi = chain.stationary.weights
    root = np.sqrt(pi)
    return (root[:, None] * chain.kernel.rows) / root[None, :]


def spectral_decomposition(chain: ReversibleChain) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (descending) and orthonormal eigenvectors of the symmetrized kernel.

    Column k of the returned matrix is the symmetrized-basis eigenvector for
    eigenvalue k; dividing it entrywise by sqrt(pi) gives the kernel's own
    eigenfunction, orthonormal in the pi-weighted inner product.
    """
    if np.any(chain.stationary.weights == 0.0):
        raise DegenerateStationaryError("stationary distribution must be fully supported")
    sym = symmetrized_kernel(chain)
    sym = 0.5 * (sym + sym.T)
    vals, vecs = np.linalg.eigh(sym)
    return vals[::-1].copy(), vecs[:, ::-1].copy()


def spectral_summary(chain: ReversibleChain) -> SpectralSummary:
    """Eigenvalues of K via the symmetrization, plus the relaxation time.

    The relaxation time is INFINITE when lambda_2 >= 1 - 1e-10 (reducible or
    nearly reducible kernel).
    """
    vals, _ = spectral_decomposition(chain)
    lam2 = float(vals[1])
    if lam2 >= 1.0 - SPECTRAL_TOL:
        relax = INFINITE
    else:
        relax = 1.0 / (1.0 - lam2)
    return SpectralSummary(eigenvalues=vals, lambda2=lam2, relaxation_time=relax)


# --------------------------------------------------------------------------
# Seeded streams and sampling
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SeededStream:
    """Hierarchical substream identifier: (root_seed, stream_path).

    Equal values always produce the identical uniform sequence (PCG64 keyed by
    numpy's SeedSequence with the path as spawn key), on every run and every
    thread count.  Streams are values, not stateful generators: an operation
    consuming k uniforms always consumes the first k of the stream's sequence.
    """

    root_seed: int
    stream_path: tuple[int, ...] = ()

    def __post_init__(self):
        if not (0 <= int(self.root_seed) < 2**64):
            raise ChainValidationError("root_seed must be an unsigned 64-bit integer")
        path = tuple(int(p) for p in self.stream_path)
        if any(p < 0 for p in path):
            raise ChainValidationError("stream path components must be non-negative")
        object.__setattr__(self, "root_seed", int(self.root_seed))
        object.__setattr__(self, "stream_path", path)

    def child(self, *indices: int) -> "SeededStream":
        return SeededStream(self.root_seed, self.stream_path + tuple(indices))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.root_seed, spawn_key=self.stream_path)
        return np.random.Generator(np.random.PCG64(seq))


def index_from_uniform(cumulative: np.ndarray, u: float) -> int:
    """Inverse-CDF cell lookup: smallest i with u < c_i, clamped to the last state.

    Partitions [0, 1) into consecutive cells of exactly the prescribed masses;
    zero-mass states get empty cells and are never returned.
    """
    s = cumulative.shape[0]
    return min(int(np.searchsorted(cumulative, u, side="right")), s - 1)


def exact_sample(stationary: ProbabilityVector, stream: SeededStream) -> int:
    """Draw one state exactly from the distribution, consuming one uniform."""
    u = float(stream.generator().random())
    return index_from_uniform(stationary.cumulative(), u)


@njit(cache=True)
def _walk(cum_rows, start, uniforms):  # pragma: no cover - exercised via wrapper
    m = uniforms.shape[0] + 1
    s = cum_rows.shape[1]
    out = np.empty(m, np.int64)
    out[0] = start
    cur = start
    for t in range(m - 1):
        u = uniforms[t]
        row = cum_rows[cur]
        j = 0
        while j < s - 1 and u >= row[j]:
            j += 1
        cur = j
        out[t + 1] = cur
    return out


def simulate_trajectory(chain: ReversibleChain, start: int, steps: int,
                        stream: SeededStream) -> np.ndarray:
    """Simulate X_0 = start, then steps-1 transitions by inverse CDF over kernel rows.

    Returns the array of `steps` visited states.  One uniform is consumed per
    transition, in stream order, so for a fixed stream the length-m trajectory
    is a prefix of the length-m' trajectory whenever m <= m'.  A trajectory of
    length m counts as m "paper steps" and m - 1 transitions.
    """
    if steps < 1:
        raise ChainValidationError("trajectory needs at least one state")
    if not (0 <= start < chain.num_states):
        raise ChainValidationError(f"start state {start} out of range")
    uniforms = stream.generator().random(steps - 1)
    return _walk(chain._cum_rows, start, uniforms)


def trajectory_average(chain: ReversibleChain, trajectory) -> float:
    """Arithmetic mean of the observable over the visited states."""
    states = np.asarray(trajectory, dtype=np.int64)
    if states.size == 0:
        raise ChainValidationError("trajectory must be non-empty")
    return float(chain.observable[states].mean())


# --------------------------------------------------------------------------
# Chain definition files (shared by the CLI and the gallery exporter)
# --------------------------------------------------------------------------

def chain_to_dict(chain: ReversibleChain, name: str) -> dict:
    return {
        "name": name,
        "kernel": [[float(x) for x in row] for row in chain.kernel.rows],
        "stationary": [float(x) for x in chain.stationary.weights],
        "observable": [float(x) for x in chain.observable],
    }


def chain_from_dict(payload: dict) -> tuple[ReversibleChain, str]:
    for key in ("kernel", "stationary", "observable"):
        if key not in payload:
            raise ChainValidationError(f"chain definition is missing field {key!r}")
    chain = validate_chain(payload["kernel"], payload["stationary"], payload["observable"])
    return chain, str(payload.get("name", ""))


def load_chain_file(path) -> tuple[ReversibleChain, str]:
    with open(Path(path), "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    return chain_from_dict(payload)


def save_chain_file(chain: ReversibleChain, name: str, path) -> None:
    with open(Path(path), "w", encoding="utf-8") as fh:
        json.dump(chain_to_dict(chain, name), fh, indent=2)
        fh.write("\n")
