"""Extended factor analysis fitted by reduced Gauss-Newton."""

from .baselines import alternating_ls_step, fit_alternating
from .errors import DimensionMismatch, IllConditioned, NotHermitian, RankDeficient
from .model import (
    FactorModel,
    NoiseMask,
    ParameterVector,
    SampleCovariance,
    check_identifiability,
    cost,
    degrees_of_freedom,
    enforce_constraint,
    gradient,
    gradient_norm,
    residual,
    sample_covariance,
)
from .reduced import ConvergenceTrace, DescentDirection, SolverConfig, Status, fit, gn_step

__all__ = [
    "ConvergenceTrace",
    "DescentDirection",
    "DimensionMismatch",
    "FactorModel",
    "IllConditioned",
    "NoiseMask",
    "NotHermitian",
    "ParameterVector",
    "RankDeficient",
    "SampleCovariance",
    "SolverConfig",
    "Status",
    "alternating_ls_step",
    "check_identifiability",
    "cost",
    "degrees_of_freedom",
    "enforce_constraint",
    "fit",
    "fit_alternating",
    "gn_step",
    "gradient",
    "gradient_norm",
    "residual",
    "sample_covariance",
]
