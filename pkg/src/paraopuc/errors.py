"""Exception hierarchy shared by every module."""


class OpucError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(OpucError, ValueError):
    """An argument lies outside the domain of the operation."""


class ConfigError(DomainError):
    """Malformed experiment configuration."""


class NumericalError(OpucError, ArithmeticError):
    """Base class for numerical failures (solver, conditioning, convergence)."""


class SolverError(NumericalError):
    """The spectrum solver could not certify a complete set of zeros."""

    def __init__(self, message, trial=None):
        super().__init__(message if trial is None else f"trial {trial}: {message}")
        self.trial = trial


class SingularEvaluationError(NumericalError):
    """A quantity that is almost surely nonzero vanished at the evaluation point."""


class NearSingularError(NumericalError):
    """LU factorization met a pivot below the near-singular threshold."""

    def __init__(self, z, pivot):
        super().__init__(f"near-singular pivot |u|={pivot:.3e} at z={z!r}")
        self.z = z
        self.pivot = pivot


class ConvergenceError(NumericalError):
    """An iterative method did not converge within its iteration budget."""


class DiagnosticsError(NumericalError):
    """A Monte Carlo run rejected too many samples to be trusted."""
