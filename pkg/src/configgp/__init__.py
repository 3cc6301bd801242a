"""Conglomerate multi-fidelity Gaussian-process emulation.

Emulators for simulators whose accuracy is set by several fidelity
parameters, predicting the exact-solution limit ``t -> 0``.
"""

from .design import Design, crossed_array, map_ranges, maximin_lhd, maxpro, maxpro_criterion
from .errors import BasisError, ConfigGPError, EstimationError, SingularCovarianceError, StructuralError
from .gp import (
    BasisKind,
    BasisSpec,
    CovMatrixFactorization,
    Dataset,
    GaussianProcess,
    PredictiveDistribution,
    cholesky_factor,
    default_basis,
    log_likelihood,
    predict,
)
from .inference import (
    MleOptions,
    MleResult,
    PosteriorChain,
    PriorSpec,
    Schedule,
    fit_mle,
    gelman_rubin,
    init_alpha,
    posterior_predict,
    run_mwg,
)
from .kernels import EmulatorKind, KernelParams, composite_kernel, kernel1_t, kernel2_t, twy_t
from .testbed import currin, grid_interpolate, park, simulate

__version__ = "0.1.0"

__all__ = [
    "BasisError",
    "BasisKind",
    "BasisSpec",
    "ConfigGPError",
    "CovMatrixFactorization",
    "Dataset",
    "Design",
    "EmulatorKind",
    "EstimationError",
    "GaussianProcess",
    "KernelParams",
    "MleOptions",
    "MleResult",
    "PosteriorChain",
    "PredictiveDistribution",
    "PriorSpec",
    "Schedule",
    "SingularCovarianceError",
    "StructuralError",
    "cholesky_factor",
    "composite_kernel",
    "crossed_array",
    "currin",
    "default_basis",
    "fit_mle",
    "gelman_rubin",
    "grid_interpolate",
    "init_alpha",
    "kernel1_t",
    "kernel2_t",
    "log_likelihood",
    "map_ranges",
    "maximin_lhd",
    "maxpro",
    "maxpro_criterion",
    "park",
    "posterior_predict",
    "predict",
    "run_mwg",
    "simulate",
    "twy_t",
]
