"""Exact and subsampling Metropolis-Hastings kernels with grid-exact diagnostics."""
from .errors import (
    ApproxMCMCError,
    BudgetExceededError,
    ConfigError,
    FitError,
    InfeasibleError,
    MultiplicityError,
    NotMixedError,
    NumericOverflowError,
    ParameterError,
    UnsupportedModelError,
)
from .model import (
    BoundedGaussian,
    DataSet,
    GaussianConjugate,
    IndicatorInterval,
    Proposal,
    Square,
    SquareClipped,
    closed_form_posterior,
    log_posterior,
    tempered_posterior,
)
from .kernels import (
    Austerity,
    FullMH,
    InfiniteResample,
    SubsampleNarrow,
    SubsampleWide,
    WideMH,
    mcmc_estimate,
    run_chain,
)

__version__ = "0.1.0"

__all__ = [
    "ApproxMCMCError",
    "BudgetExceededError",
    "ConfigError",
    "FitError",
    "InfeasibleError",
    "MultiplicityError",
    "NotMixedError",
    "NumericOverflowError",
    "ParameterError",
    "UnsupportedModelError",
    "BoundedGaussian",
    "DataSet",
    "GaussianConjugate",
    "IndicatorInterval",
    "Proposal",
    "Square",
    "SquareClipped",
    "closed_form_posterior",
    "log_posterior",
    "tempered_posterior",
    "Austerity",
    "FullMH",
    "InfiniteResample",
    "SubsampleNarrow",
    "SubsampleWide",
    "WideMH",
    "mcmc_estimate",
    "run_chain",
]
