"""Exception hierarchy shared by all solver components."""


class PrimalDecError(Exception):
    """Base class for every error raised by this package."""


class ProblemFileError(PrimalDecError):
    """A problem file could not be parsed."""


class InvalidProblemError(PrimalDecError):
    """A problem violates its structural invariants."""

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(str(v) for v in self.violations)
        super().__init__(f"invalid problem: {lines}")


class LinAlgError(PrimalDecError):
    """Base class for factorization failures."""


class DefinitenessError(LinAlgError):
    """A Cholesky factorization met a non-positive pivot."""

    def __init__(self, pivot, message=None):
        self.pivot = pivot
        super().__init__(message or f"matrix is not positive definite (pivot {pivot})")


class SingularMatrixError(LinAlgError):
    """A pivot fell below the singularity threshold."""

    def __init__(self, pivot, value, threshold):
        self.pivot = pivot
        self.value = value
        self.threshold = threshold
        super().__init__(
            f"matrix is numerically singular: pivot {pivot} has magnitude "
            f"{value:.3e} < {threshold:.3e}"
        )


class NonConvergenceError(PrimalDecError):
    """An iterative solver hit its iteration cap."""

    def __init__(self, message, best_residual=float("nan"), iterations=0):
        self.best_residual = best_residual
        self.iterations = iterations
        super().__init__(f"{message} (best residual {best_residual:.3e} after {iterations} iterations)")


class NumericalError(PrimalDecError):
    """A structured factorization failed inside a solver."""

    def __init__(self, block, message):
        self.block = block
        super().__init__(f"{block}: {message}")


class StalePointError(PrimalDecError):
    """Sensitivities were requested at a point that is not tight enough."""


class InfeasibleError(PrimalDecError):
    """A constraint set admits no feasible point."""


class LineSearchError(PrimalDecError):
    """Backtracking exhausted its budget without satisfying Armijo."""

    def __init__(self, history):
        self.history = list(history)
        super().__init__(f"line search failed after {len(self.history)} trials")
