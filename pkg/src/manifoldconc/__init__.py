"""Intrinsic calculus on Stiefel and Grassmann manifolds and Monte Carlo
verification of higher-order concentration bounds under Haar measure."""
from . import (bounds, experiments, functionals, grassmann, matcalc, matio, montecarlo,
               smooth, stiefel)
from .errors import DimensionError, ManifoldError, ValidityError

__version__ = "0.1.0"

__all__ = ["bounds", "experiments", "functionals", "grassmann", "matcalc", "matio",
           "montecarlo", "smooth", "stiefel", "DimensionError", "ManifoldError",
           "ValidityError", "__version__"]
