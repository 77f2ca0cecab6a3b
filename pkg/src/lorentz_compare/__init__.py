"""Numerical checks of Lorentzian comparison theorems and curvature estimates
for spacelike hypersurfaces in space forms."""

from .comparison_ode import CurvatureProfile, f_c, f_c_inverse, riccati_compare, riccati_solve, slope, solve_h, sturm_verify
from .errors import LorentzCompareError, NumericalError, PreconditionError
from .spacetime import CoordinateMetric, SpaceForm, model_from_json

__version__ = "0.1.0"

__all__ = [
    "CurvatureProfile",
    "CoordinateMetric",
    "LorentzCompareError",
    "NumericalError",
    "PreconditionError",
    "SpaceForm",
    "f_c",
    "f_c_inverse",
    "model_from_json",
    "riccati_compare",
    "riccati_solve",
    "slope",
    "solve_h",
    "sturm_verify",
]
