"""Modified SO(2N) ensembles for the central values and lowest zeros of
quadratic twists of elliptic curve L-functions."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    DataGapError,
    DataValidationError,
    DomainError,
    NumericalError,
    TwistRMTError,
)
from .rmt import RngStream, haar_batch, haar_sample, matrix_dimension  # noqa: F401
