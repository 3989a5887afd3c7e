"""Random paraorthogonal polynomials on the unit circle: zeros, CMV matrices
and Monte Carlo checks of their local spectral statistics."""

from paraopuc.core import (
    ParaModel,
    RngStream,
    VerblunskySequence,
    rotate_model,
    sample_para_model,
    uniform_disk,
)
from paraopuc.errors import (
    ConfigError,
    ConvergenceError,
    DiagnosticsError,
    DomainError,
    NearSingularError,
    NumericalError,
    OpucError,
    SingularEvaluationError,
    SolverError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ConvergenceError",
    "DiagnosticsError",
    "DomainError",
    "NearSingularError",
    "NumericalError",
    "OpucError",
    "ParaModel",
    "RngStream",
    "SingularEvaluationError",
    "SolverError",
    "VerblunskySequence",
    "__version__",
    "rotate_model",
    "sample_para_model",
    "uniform_disk",
]
