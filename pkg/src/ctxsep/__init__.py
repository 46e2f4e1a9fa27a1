"""Contextually supervised source separation.

Split an observed aggregate signal into sources, each tied to its own
context features through a loss and a regularizer, with the sources
constrained to sum to the aggregate.
"""

from .closedform import BlockDesign, least_squares_theta, ls_sources, reconstruct_sources, rmse
from .core import (
    AggregateSignal,
    FeatureBlock,
    Norm,
    SeparationProblem,
    SeparationResult,
    SourceModelSpec,
    build_problem,
    objective_value,
)
from .errors import (
    CtxSepError,
    DeltaOutOfRange,
    DimensionMismatch,
    DomainError,
    EmptyProblem,
    IndivisibleWindow,
    InfeasibleProblem,
    NegativeUsage,
    NonFinite,
    NonHourly,
    NonMonotoneTimestamps,
    NoOverlap,
    NumericalBreakdown,
    ParseError,
    SingularDesign,
)
from .linops import BlockSum, Diff, Identity, SmoothingBand, hour_features, parse_operator, rbf_features
from .solver import SolverConfig, canonicalize, separate, solve
from .synth import DisaggConfig, RecoveryConfig, gen_disagg, gen_recovery, make_rng
from .theory import (
    expected_sq_error,
    lambert_w_m1,
    rho,
    rmse_bound,
    tail_bound,
    theory_report,
    tight_rmse_bound,
)

__version__ = "0.1.0"
