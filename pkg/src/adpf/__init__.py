"""Disturbance-adapted particle filtering for nonlinear state-space models.

The package bundles three example models, four likelihood evaluators
(Kalman, SIR, an adapted two-stage filter, and an unscented comparator),
a random-walk Metropolis sampler that wraps any of them, and a benchmark
command line under `adpf-bench`.
"""

__version__ = "0.1.0"

from .adapt import LaplaceMixtureAdapter, LMConfig
from .core import ParameterVector, RandomStream, StateSpaceModel
from .filters import (
    FilterTrace,
    LikelihoodEstimate,
    LinearGaussianModel,
    UnscentedConfig,
    adpf_filter,
    cupf1_filter,
    filtered_expectation,
    kalman_filter,
    sir_filter,
    unscented_moments,
)
from .models import MODEL_NAMES, build_model
from .pmcmc import (
    AdaptConfig,
    BetaPrior,
    ChainRecord,
    GammaPrior,
    PriorSpec,
    TruncatedNormalPrior,
    adaptive_rwmh,
    chain_inefficiencies,
    computing_time,
    default_prior,
    inefficiency,
    kalman_ml_init,
    make_pmmh_target,
    posterior_mean_mcse,
    prior_spec_from_dict,
    run_filter,
)

__all__ = [
    "AdaptConfig",
    "BetaPrior",
    "ChainRecord",
    "FilterTrace",
    "GammaPrior",
    "LaplaceMixtureAdapter",
    "LikelihoodEstimate",
    "LinearGaussianModel",
    "LMConfig",
    "MODEL_NAMES",
    "ParameterVector",
    "PriorSpec",
    "RandomStream",
    "StateSpaceModel",
    "TruncatedNormalPrior",
    "UnscentedConfig",
    "adaptive_rwmh",
    "adpf_filter",
    "build_model",
    "chain_inefficiencies",
    "computing_time",
    "cupf1_filter",
    "default_prior",
    "filtered_expectation",
    "inefficiency",
    "kalman_filter",
    "kalman_ml_init",
    "make_pmmh_target",
    "posterior_mean_mcse",
    "prior_spec_from_dict",
    "run_filter",
    "sir_filter",
    "unscented_moments",
    "__version__",
]
