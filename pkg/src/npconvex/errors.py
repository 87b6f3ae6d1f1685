"""Exception hierarchy shared by the solver, oracle and CLI."""


class NpConvexError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(NpConvexError, ValueError):
    """Operands live on different finite spaces or have the wrong length."""


class InvalidInputError(NpConvexError, ValueError):
    """A constructor invariant was violated (negative weight, bad penalty, ...)."""


class InfeasibleProblemError(NpConvexError):
    """rho1(k1) > alpha: not even the smallest test meets the level."""


class UnverifiedError(NpConvexError):
    """A certified stage could not close its optimality gap.

    Carries both bounds so callers can still report them.
    """

    def __init__(self, message, lower_bound=None, upper_bound=None, result=None):
        super().__init__(message)
        self.lower_bound = lower_bound
        self.upper_bound = upper_bound
        self.result = result


class SaddleFailureError(UnverifiedError):
    """Duality gap of a least-favorable search exceeded its tolerance."""


class IndeterminateError(NpConvexError):
    """Numeric penalty search neither converged nor showed divergence."""

    def __init__(self, message, best_lower_bound):
        super().__init__(message)
        self.best_lower_bound = best_lower_bound


class ContractViolationError(NpConvexError):
    """A stage received inputs that an upstream stage should never produce."""


class InternalConsistencyError(NpConvexError):
    """A solved bundle failed its own invariants."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class GridBudgetError(NpConvexError):
    """Brute-force enumeration would exceed the evaluation budget."""

    def __init__(self, message, required, budget):
        super().__init__(message)
        self.required = required
        self.budget = budget
