"""Optimal randomized tests under convex expectations on finite spaces."""

from .errors import (
    ContractViolationError,
    DimensionError,
    GridBudgetError,
    IndeterminateError,
    InfeasibleProblemError,
    InternalConsistencyError,
    InvalidInputError,
    NpConvexError,
    SaddleFailureError,
    UnverifiedError,
)
from .risk import (
    ConvexExpectation,
    Entropic,
    FinitelyGenerated,
    Linear,
    PenaltyConfig,
    WorstCase,
    certify_axioms,
    certify_representation,
    evaluate,
    penalty,
    penalty_numeric,
)
from .solver import (
    NpSolution,
    ProblemSpec,
    SolverConfig,
    TestFunction,
    construct_threshold_test,
    find_p_star,
    find_q_star,
    inner_sup_box_linear,
    refine_alpha_star,
    solve,
    solve_primal,
    support_function,
    verify_threshold_form,
)
from .space import (
    DensityVector,
    FiniteProbSpace,
    Partition,
    RandomVariable,
    expectation,
    kl_divergence,
    likelihood_ratio_partition,
)

__version__ = "0.1.0"
