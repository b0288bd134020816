import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rmci.chain_core import (
    INFINITE,
    DegenerateStationaryError,
    DetailedBalanceError,
    ObservableRangeError,
    ProbabilityVector,
    RowSumError,
    SeededStream,
    StationarityError,
    ChainValidationError,
    chain_to_dict,
    exact_sample,
    index_from_uniform,
    load_chain_file,
    save_chain_file,
    simulate_trajectory,
    spectral_summary,
    stationary_mean,
    symmetrized_kernel,
    trajectory_average,
    validate_chain,
)

from conftest import reversible_chains


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def test_identity_kernel_valid_for_any_stationary():
    chain = validate_chain(np.eye(3), [1 / 3, 1 / 3, 1 / 3], [0.0, 0.5, 1.0])
    assert chain.num_states == 3
    chain = validate_chain(np.eye(3), [0.2, 0.3, 0.5], [0.0, 0.5, 1.0])
    assert stationary_mean(chain) == pytest.approx(0.3 * 0.5 + 0.5 * 1.0)


def test_symmetric_two_state_valid():
    # detailed balance by hand: 0.5 * 0.5 == 0.5 * 0.5
    chain = validate_chain([[0.5, 0.5], [0.5, 0.5]], [0.5, 0.5], [0.0, 1.0])
    assert stationary_mean(chain) == 0.5


def test_detailed_balance_error():
    # 0.3 * 0.5 != 0.7 * 0.5
    with pytest.raises(DetailedBalanceError):
        validate_chain([[0.5, 0.5], [0.5, 0.5]], [0.3, 0.7], [0.0, 1.0])


def test_row_sum_errors():
    with pytest.raises(RowSumError):
        validate_chain([[0.5, 0.6], [0.5, 0.5]], [0.5, 0.5], [0.0, 1.0])
    with pytest.raises(RowSumError):
        validate_chain([[1.2, -0.2], [0.5, 0.5]], [0.5, 0.5], [0.0, 1.0])
    with pytest.raises(RowSumError):
        validate_chain([[0.5, 0.5, 0.0], [0.5, 0.5, 0.0]], [0.5, 0.5], [0.0, 1.0])


def test_observable_range_error():
    with pytest.raises(ObservableRangeError):
        validate_chain([[0.5, 0.5], [0.5, 0.5]], [0.5, 0.5], [0.0, 1.5])
    with pytest.raises(ObservableRangeError):
        validate_chain([[0.5, 0.5], [0.5, 0.5]], [0.5, 0.5], [-0.1, 1.0])


def test_degenerate_stationary_rejected():
    with pytest.raises(DegenerateStationaryError):
        validate_chain(np.eye(2), [1.0, 0.0], [0.0, 1.0])


def test_error_hierarchy():
    # detailed balance is checked before the redundant stationarity guard
    for err in (RowSumError, DetailedBalanceError, StationarityError,
                ObservableRangeError, DegenerateStationaryError):
        assert issubclass(err, ChainValidationError)


def test_probability_vector_invariants():
    with pytest.raises(ChainValidationError):
        ProbabilityVector(np.array([0.5, 0.5001]))
    with pytest.raises(ChainValidationError):
        ProbabilityVector(np.array([-0.1, 1.1]))
    pv = ProbabilityVector(np.array([0.2, 0.3, 0.5]))
    assert pv.cumulative() == pytest.approx([0.2, 0.5, 1.0])


def test_shape_mismatch_rejected():
    with pytest.raises(ChainValidationError):
        validate_chain([[0.5, 0.5], [0.5, 0.5]], [1 / 3, 1 / 3, 1 / 3], [0, 1])
    with pytest.raises(ChainValidationError):
        validate_chain([[0.5, 0.5], [0.5, 0.5]], [0.5, 0.5], [0, 0.5, 1])


@given(reversible_chains())
@settings(max_examples=40, deadline=None)
def test_random_reversible_chains_validate_and_symmetrize(chain):
    sym = symmetrized_kernel(chain)
    assert np.all(np.abs(sym - sym.T) <= 1e-12)


# ---------------------------------------------------------------------------
# spectra
# ---------------------------------------------------------------------------

def test_two_state_spectrum_half():
    chain = validate_chain([[0.5, 0.5], [0.5, 0.5]], [0.5, 0.5], [0.0, 1.0])
    summary = spectral_summary(chain)
    # closed form: lambda2 = 1 - p - q
    assert summary.eigenvalues == pytest.approx([1.0, 0.0], abs=1e-12)
    assert summary.relaxation_time == pytest.approx(1.0, abs=1e-10)


def test_two_state_spectrum_slow():
    chain = validate_chain([[0.9, 0.1], [0.1, 0.9]], [0.5, 0.5], [0.0, 1.0])
    summary = spectral_summary(chain)
    assert summary.lambda2 == pytest.approx(0.8, abs=1e-10)
    assert summary.relaxation_time == pytest.approx(5.0, abs=1e-9)


def test_identity_spectrum_infinite(identity_two):
    summary = spectral_summary(identity_two)
    assert summary.lambda2 == pytest.approx(1.0, abs=1e-10)
    assert summary.relaxation_time == INFINITE


@given(reversible_chains())
@settings(max_examples=40, deadline=None)
def test_spectrum_range_and_leading_eigenvalue(chain):
    summary = spectral_summary(chain)
    vals = summary.eigenvalues
    assert abs(vals[0] - 1.0) <= 1e-10
    assert np.all(vals >= -1.0 - 1e-10)
    assert np.all(np.diff(vals) <= 1e-15)  # sorted descending


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def test_exact_sample_degenerate():
    pv = ProbabilityVector(np.array([1.0, 0.0, 0.0]))
    for seed in (0, 1, 12345):
        assert exact_sample(pv, SeededStream(seed)) == 0


def test_inverse_cdf_partition_matches_masses():
    pv = ProbabilityVector(np.array([0.2, 0.0, 0.3, 0.5]))
    cum = pv.cumulative()
    # cell widths are exactly the prescribed masses
    widths = np.diff(np.concatenate([[0.0], cum]))
    assert widths == pytest.approx(pv.weights, abs=0)
    # edges: a cell is [c_{i-1}, c_i); zero-mass states own empty cells
    assert index_from_uniform(cum, 0.0) == 0
    assert index_from_uniform(cum, 0.2 - 1e-12) == 0
    assert index_from_uniform(cum, 0.2) == 2  # state 1 has mass zero
    assert index_from_uniform(cum, 0.5) == 3
    assert index_from_uniform(cum, 1.0 - 1e-12) == 3


def test_exact_sample_frequencies():
    pv = ProbabilityVector(np.array([0.5, 0.5]))
    root = SeededStream(2024, (0,))
    draws = 100_000
    ones = sum(exact_sample(pv, root.child(i)) for i in range(draws))
    # binomial band: 3 sigma ~ 0.0047, test at +-0.01
    assert abs(ones / draws - 0.5) < 0.01


def test_exact_sample_chi_square_three_states():
    pv = ProbabilityVector(np.array([0.2, 0.3, 0.5]))
    root = SeededStream(77, (1,))
    draws = 100_000
    counts = np.zeros(3)
    for i in range(draws):
        counts[exact_sample(pv, root.child(i))] += 1
    expected = pv.weights * draws
    stat = float(((counts - expected) ** 2 / expected).sum())
    assert stat < 13.8155  # 0.999 quantile of chi-square with 2 dof


def test_trajectory_identity_absorbing(identity_two):
    traj = simulate_trajectory(identity_two, 1, 5, SeededStream(5))
    assert traj.tolist() == [1, 1, 1, 1, 1]


def test_trajectory_single_state(two_state_half):
    traj = simulate_trajectory(two_state_half, 1, 1, SeededStream(5))
    assert traj.tolist() == [1]


def test_trajectory_one_step_frequencies(two_state_half):
    root = SeededStream(99, (2,))
    draws = 100_000
    ones = 0
    for i in range(draws):
        ones += int(simulate_trajectory(two_state_half, 0, 2, root.child(i))[1])
    assert abs(ones / draws - 0.5) < 0.01


def test_trajectory_determinism_and_stream_isolation(two_state_half):
    a = simulate_trajectory(two_state_half, 0, 50, SeededStream(7, (1, 2)))
    b = simulate_trajectory(two_state_half, 0, 50, SeededStream(7, (1, 2)))
    c = simulate_trajectory(two_state_half, 0, 50, SeededStream(7, (1, 3)))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


@given(seed=st.integers(min_value=0, max_value=2**64 - 1),
       short=st.integers(min_value=1, max_value=30),
       extra=st.integers(min_value=0, max_value=30))
@settings(max_examples=40, deadline=None)
def test_trajectory_prefix_property(two_state_half, seed, short, extra):
    stream = SeededStream(seed, (0,))
    a = simulate_trajectory(two_state_half, 0, short, stream)
    b = simulate_trajectory(two_state_half, 0, short + extra, stream)
    assert np.array_equal(a, b[:short])


@given(chain=reversible_chains(max_states=4),
       seed=st.integers(min_value=0, max_value=2**32),
       steps=st.integers(min_value=1, max_value=40))
@settings(max_examples=40, deadline=None)
def test_stepping_kernel_matches_searchsorted_reference(chain, seed, steps):
    stream = SeededStream(seed, (3,))
    traj = simulate_trajectory(chain, 0, steps, stream)
    uniforms = stream.generator().random(steps - 1)
    cum = np.cumsum(chain.kernel.rows, axis=1)
    state = 0
    reference = [0]
    for u in uniforms:
        state = index_from_uniform(cum[state], u)
        reference.append(state)
    assert traj.tolist() == reference


def test_trajectory_average_examples(two_state_half):
    assert trajectory_average(two_state_half, [0, 1, 0, 1]) == 0.5
    constant = validate_chain([[0.5, 0.5], [0.5, 0.5]], [0.5, 0.5], [0.7, 0.7])
    assert trajectory_average(constant, [0, 1, 1]) == pytest.approx(0.7)
    three = validate_chain(np.eye(3), [1 / 3, 1 / 3, 1 / 3], [0.0, 0.5, 1.0])
    assert trajectory_average(three, [2, 2, 1]) == pytest.approx(5 / 6)


def test_seeded_stream_validation():
    with pytest.raises(ChainValidationError):
        SeededStream(-1)
    with pytest.raises(ChainValidationError):
        SeededStream(2**64)
    with pytest.raises(ChainValidationError):
        SeededStream(0, (-1,))
    assert SeededStream(3, (1,)).child(2).stream_path == (1, 2)


# ---------------------------------------------------------------------------
# chain definition files
# ---------------------------------------------------------------------------

def test_chain_file_round_trip(tmp_path, two_state_half):
    path = tmp_path / "chain.json"
    save_chain_file(two_state_half, "pair", path)
    loaded, name = load_chain_file(path)
    assert name == "pair"
    assert np.array_equal(loaded.kernel.rows, two_state_half.kernel.rows)
    assert np.array_equal(loaded.stationary.weights, two_state_half.stationary.weights)
    assert np.array_equal(loaded.observable, two_state_half.observable)
    payload = json.loads(path.read_text())
    assert set(payload) == {"name", "kernel", "stationary", "observable"}


def test_chain_dict_missing_field(two_state_half):
    payload = chain_to_dict(two_state_half, "pair")
    del payload["stationary"]
    from rmci.chain_core import chain_from_dict
    with pytest.raises(ChainValidationError):
        chain_from_dict(payload)
