"""Numerical toolkit for Schroedinger equations with rough, self-affine dispersion."""

from .errors import FdlError, NumericalFailure, ValidationError
from .io import __version__
from .selfaffine import DEFAULT_PATTERN, SelfAffineCurve, SelfAffinePattern, build, identity_pattern, validate_pattern

__all__ = [
    "DEFAULT_PATTERN",
    "FdlError",
    "NumericalFailure",
    "SelfAffineCurve",
    "SelfAffinePattern",
    "ValidationError",
    "__version__",
    "build",
    "identity_pattern",
    "validate_pattern",
]
