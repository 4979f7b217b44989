"""lyaplab: Lyapunov exponents of a random-coupling diffusion, its
small-coupling asymptotics, the McCoy-Wu disorder functional and Monte
Carlo estimators for the corresponding random matrix products."""

from .errors import LyapLabError, NumericalError, ValidationError
from .specfun import DEFAULT_POLICY, EXTENDED_POLICY, PrecisionPolicy

__version__ = "0.1.0"

__all__ = [
    "LyapLabError", "NumericalError", "ValidationError", "PrecisionPolicy",
    "DEFAULT_POLICY", "EXTENDED_POLICY", "__version__",
]
