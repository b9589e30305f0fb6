"""Local Cox-surrogate explanations for survival models."""

from .core import (Kind, PredictionMatrix, StepFunction, SurvivalDataset, TimeGrid, as_cumulative,
                   c_index, chf_to_sf, distinct_times, interpolate_to_grid, nelson_aalen,
                   sf_to_chf)
from .cox import CoxModel, fit_cox, predict_chf
from .errors import (AdapterError, DataError, FitError, SolverError, SurvLimeError,
                     UsageError)
from .explainer import (Explanation, ExplainerConfig, MonteCarloExplanation, SurvLimeExplainer,
                        explain_instance, montecarlo_explanation)
from .plots import PlotSpec, plot_montecarlo_weights, plot_weights
from .simulate import RandomSurvivalConfig, RandomSurvivalData, random_survival_data

__version__ = "0.1.0"

__all__ = [
    "AdapterError", "CoxModel", "DataError", "Explanation", "ExplainerConfig", "FitError",
    "Kind", "MonteCarloExplanation", "PlotSpec", "PredictionMatrix", "RandomSurvivalConfig",
    "RandomSurvivalData", "SolverError", "StepFunction", "SurvLimeError", "SurvLimeExplainer",
    "SurvivalDataset", "TimeGrid", "UsageError", "as_cumulative", "c_index", "chf_to_sf",
    "distinct_times", "explain_instance", "fit_cox", "interpolate_to_grid",
    "montecarlo_explanation", "nelson_aalen", "plot_montecarlo_weights", "plot_weights",
    "predict_chf", "random_survival_data", "sf_to_chf",
]
