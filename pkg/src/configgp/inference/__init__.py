"""Hyperparameter inference: maximum likelihood and Metropolis-within-Gibbs."""

from .mcmc import (
    PSRF,
    PosteriorChain,
    PosteriorPrediction,
    PriorSpec,
    Schedule,
    gelman_rubin,
    gelman_rubin_all,
    hpd_interval,
    posterior_predict,
    run_mwg,
)
from .mle import AlphaInit, MleOptions, MleResult, central_gradient, fit_mle, init_alpha, initial_params

__all__ = [
    "AlphaInit",
    "MleOptions",
    "MleResult",
    "PSRF",
    "PosteriorChain",
    "PosteriorPrediction",
    "PriorSpec",
    "Schedule",
    "central_gradient",
    "fit_mle",
    "gelman_rubin",
    "gelman_rubin_all",
    "hpd_interval",
    "init_alpha",
    "initial_params",
    "posterior_predict",
    "run_mwg",
]
