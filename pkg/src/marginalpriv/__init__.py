"""Private release of one-way marginals and fingerprinting-code tracing experiments."""

from ._kernels import BACKEND
from .core import (
    AccuracyParams,
    Database,
    GroupPrivacyParams,
    MarginalVector,
    PrivacyParams,
    compute_marginals,
    group_privacy,
    l1_error,
    linf_error,
    sample_complexity_bounds,
)
from .errors import (
    DimensionError,
    DomainError,
    FormatError,
    MarginalPrivError,
    ParameterError,
    SequenceError,
)

__version__ = "0.1.0"
