import numpy as np
import pytest
from hypothesis import strategies as st

from rmci.chain_core import ReversibleChain, validate_chain


@pytest.fixture(scope="session")
def two_state_half() -> ReversibleChain:
    return validate_chain([[0.5, 0.5], [0.5, 0.5]], [0.5, 0.5], [0.0, 1.0])


@pytest.fixture(scope="session")
def identity_two() -> ReversibleChain:
    return validate_chain(np.eye(2), [0.5, 0.5], [0.0, 1.0])


@st.composite
def reversible_chains(draw, max_states: int = 5):
    """Random walk on a weighted graph: reversible by construction."""
    s = draw(st.integers(min_value=2, max_value=max_states))
    weights = np.array(
        draw(
            st.lists(
                st.lists(st.floats(min_value=0.05, max_value=1.0), min_size=s, max_size=s),
                min_size=s,
                max_size=s,
            )
        )
    )
    sym = weights + weights.T
    row_sums = sym.sum(axis=1)
    kernel = sym / row_sums[:, None]
    pi = row_sums / row_sums.sum()
    g = np.array(draw(st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=s, max_size=s)))
    return validate_chain(kernel, pi, g)
