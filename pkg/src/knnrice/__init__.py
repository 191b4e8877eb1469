"""Parameter estimation for the Lognormal-Rician scintillation channel.

kNN density estimates built from synthetic samples stand in for the
Bessel-function integral of the exact density, giving a cheap approximate
log-likelihood that a genetic algorithm or finite-difference ascent can
maximise.
"""

from .channel import (
    InvalidParameterError,
    QuadratureConfig,
    QuadratureError,
    SampleSet,
    ShapingParams,
    cdf_reference,
    pdf_reference,
    sample,
)
from .knn import DegenerateSampleError, DensityEstimate, cdf_at, density_at, estimate
from .gof import KsResult, KSweepRow, k_sweep, ks_critical, ks_statistic
from .likelihood import EmptyOverlapError, LlfConfig, LlfValue, llf_mean, llf_once
from .optimize import Bounds, FitConfig, FitError, FitResult, fit, initial_estimates
from .bench import MseReport, campaign, mse

__all__ = [
    "Bounds",
    "DegenerateSampleError",
    "DensityEstimate",
    "EmptyOverlapError",
    "FitConfig",
    "FitError",
    "FitResult",
    "InvalidParameterError",
    "KSweepRow",
    "KsResult",
    "LlfConfig",
    "LlfValue",
    "MseReport",
    "QuadratureConfig",
    "QuadratureError",
    "SampleSet",
    "ShapingParams",
    "campaign",
    "cdf_at",
    "cdf_reference",
    "density_at",
    "estimate",
    "fit",
    "initial_estimates",
    "k_sweep",
    "ks_critical",
    "ks_statistic",
    "llf_mean",
    "llf_once",
    "mse",
    "pdf_reference",
    "sample",
]
__version__ = "0.1.0"
