"""cvbias: a simulation laboratory for cross-validation bias on time series.

Simulates data-generating processes with known conditional means and
errors, decomposes the CV MSE exactly against that truth, and estimates
the bias cross-term E[(1/T) sum_i mu_cv_i * eps_i] by Monte Carlo — per
index, pooled, across sample sizes, and across CV schemes (leave-one-out,
h-block, k-fold, expanding window).
"""
from ._backend import backend_name
from .cv import (
    AseReport,
    CvDecomposition,
    CvResiduals,
    CvScheme,
    ase,
    cv_mse,
    cv_residuals,
    decompose_cv_mse,
    select,
)
from .dgp import (
    DgpSpec,
    ErrorSpec,
    MeanSpec,
    SimulatedPath,
    sample_error_process,
    simulate,
)
from .estimators import (
    FitResult,
    ModelSpec,
    leverages,
    loo_fit_downdate,
    loo_fit_refit,
    loo_mu,
    ols_fit,
)
from .exceptions import (
    ConfigError,
    CvbiasError,
    InternalConsistencyError,
    LeverageError,
    NumericalError,
    ReliabilityError,
    SingularityError,
    SizeError,
    StationarityError,
)
from .mc import (
    CellReport,
    Estimate,
    McConfig,
    McReport,
    SelectionCell,
    mc_bias_estimate,
    mc_bias_variance,
    mc_mase,
    mc_selection,
    run_mc,
)

__version__ = "0.1.0"

__all__ = [
    "AseReport",
    "CellReport",
    "ConfigError",
    "CvDecomposition",
    "CvResiduals",
    "CvScheme",
    "CvbiasError",
    "DgpSpec",
    "ErrorSpec",
    "Estimate",
    "FitResult",
    "InternalConsistencyError",
    "LeverageError",
    "McConfig",
    "McReport",
    "MeanSpec",
    "ModelSpec",
    "NumericalError",
    "ReliabilityError",
    "SelectionCell",
    "SimulatedPath",
    "SingularityError",
    "SizeError",
    "StationarityError",
    "ase",
    "backend_name",
    "cv_mse",
    "cv_residuals",
    "decompose_cv_mse",
    "leverages",
    "loo_fit_downdate",
    "loo_fit_refit",
    "loo_mu",
    "mc_bias_estimate",
    "mc_bias_variance",
    "mc_mase",
    "mc_selection",
    "ols_fit",
    "run_mc",
    "sample_error_process",
    "select",
    "simulate",
    "__version__",
]
