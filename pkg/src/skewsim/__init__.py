"""skewsim: simulation and verification toolkit for the skew Brownian motion
and one-dimensional diffusions with discontinuous coefficients."""

from .core import (
    CoefficientError,
    ParameterError,
    PiecewiseDiffusion,
    RngStream,
    SampledPath,
    SignedAtomicMeasure,
    SkewParameter,
    brownian_coefficients,
    make_skew,
    sbm_coefficients,
    validate_piecewise,
)

__all__ = [
    "CoefficientError",
    "ParameterError",
    "PiecewiseDiffusion",
    "RngStream",
    "SampledPath",
    "SignedAtomicMeasure",
    "SkewParameter",
    "brownian_coefficients",
    "make_skew",
    "sbm_coefficients",
    "validate_piecewise",
]

__version__ = "0.1.0"
