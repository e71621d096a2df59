"""Numerical toolkit for (a, k)-regularized resolvent families.

Kernels and their convolution algebra, one- and two-variable convolution
quadrature, Laplace-transform identity checks, Mittag-Leffler functions,
families built from finite generators, their extension to longer
intervals, and checkers for the associated functional equations.
"""

from .errors import HypothesisError, ResolventKitError
from .families import Generator, SampledFamily, make_family, volterra_residual
from .kernels import Grid, parse_kernel
from .report import ResidualReport
from .special import ml, ml_eval

__version__ = "0.1.0"

__all__ = [
    "Generator",
    "Grid",
    "HypothesisError",
    "ResidualReport",
    "ResolventKitError",
    "SampledFamily",
    "make_family",
    "ml",
    "ml_eval",
    "parse_kernel",
    "volterra_residual",
]
