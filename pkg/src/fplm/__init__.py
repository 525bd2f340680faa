"""Semiparametric scalar-on-function regression with Bayesian bandwidths.

Fits the functional partial linear model (a linear functional term plus
a nonparametric kernel term), estimates the smoothing bandwidth and the
kernel error-density bandwidth jointly by adaptive random-walk
Metropolis, selects between curve semi-metrics by marginal likelihood,
and produces nonparametric pointwise prediction intervals.
"""

from .bayes import (
    BayesianFnpRegressor,
    BayesianFplmRegressor,
    FnpSamplerModel,
    FplmSamplerModel,
    InverseGammaPrior,
    McmcChain,
    McmcConfig,
    PosteriorSummary,
    chib_marginal_likelihood,
    diagnostics,
    posterior_error_density,
    run_sampler,
    select_semimetric,
)
from .datasets import TecatorDataset, load_tecator, parse_tecator
from .error_density import (
    GlobalKernelDensity,
    LocalizedKernelDensity,
    PredictionInterval,
    density_at,
    prediction_interval,
)
from .estimators import (
    FnpFit,
    FplmFit,
    fit_fnp,
    fit_fplm,
    fit_fpcr,
    nw_weights,
    predict_fnp,
    predict_fplm,
    predict_fpcr,
)
from .functional import (
    BSplineRep,
    FpcaResult,
    FunctionalSample,
    Grid,
    derivative,
    fit_bsplines,
    fpca,
    inner_product,
)
from .semimetrics import SemiMetricSpec, distance_matrix, train_semimetric
from .simulation import (
    MetricReport,
    StudyArm,
    bootstrap_study,
    run_replication_study,
    simulate_rough,
    simulate_smooth,
)

__version__ = "0.1.0"

__all__ = [
    "Grid",
    "FunctionalSample",
    "BSplineRep",
    "FpcaResult",
    "fit_bsplines",
    "derivative",
    "fpca",
    "inner_product",
    "SemiMetricSpec",
    "train_semimetric",
    "distance_matrix",
    "FplmFit",
    "FnpFit",
    "fit_fplm",
    "predict_fplm",
    "fit_fnp",
    "predict_fnp",
    "fit_fpcr",
    "predict_fpcr",
    "nw_weights",
    "GlobalKernelDensity",
    "LocalizedKernelDensity",
    "PredictionInterval",
    "density_at",
    "prediction_interval",
    "InverseGammaPrior",
    "McmcConfig",
    "McmcChain",
    "PosteriorSummary",
    "run_sampler",
    "diagnostics",
    "chib_marginal_likelihood",
    "select_semimetric",
    "posterior_error_density",
    "FplmSamplerModel",
    "FnpSamplerModel",
    "BayesianFplmRegressor",
    "BayesianFnpRegressor",
    "TecatorDataset",
    "parse_tecator",
    "load_tecator",
    "StudyArm",
    "MetricReport",
    "run_replication_study",
    "bootstrap_study",
    "simulate_smooth",
    "simulate_rough",
    "__version__",
]
