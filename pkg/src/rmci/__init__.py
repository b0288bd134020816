"""Always-valid confidence intervals for stationary means of reversible chains,
built from a few exact samples and many chain steps, with an exact-enumeration
oracle and a coverage harness that checks every bound empirically."""

__version__ = "0.1.0"

from .chain_core import (
    INFINITE,
    ChainValidationError,
    DegenerateStationaryError,
    DetailedBalanceError,
    ObservableRangeError,
    ProbabilityVector,
    ReversibleChain,
    RowSumError,
    SeededStream,
    SpectralSummary,
    StationarityError,
    TransitionKernel,
    exact_sample,
    simulate_trajectory,
    spectral_summary,
    stationary_mean,
    trajectory_average,
    validate_chain,
)
from .deviation_bounds import (
    BoundValue,
    InfiniteRelaxationError,
    con3_bound,
    lezaud_one_sided,
    lezaud_two_sided,
    lower_bound_length,
    prop2_bound,
)
from .estimator_t1 import T1Config, T1Report, h_penalty, k_alpha, run_t1, target_length
from .estimator_t2 import BudgetOverflowError, T2Config, T2Report, k_alpha_a, run_t2
from .harness import (
    CoverageSummary,
    GalleryEntry,
    SeedSchedule,
    coverage_experiment,
    gallery,
    gallery_entry,
    near_disconnected_bias_demo,
)
from .oracle import (
    EnumerationTooLargeError,
    ExactA1Distribution,
    exact_a1_distribution,
    exact_tail,
    exact_variance_a1,
)
