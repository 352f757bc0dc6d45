"""Reference estimators: MSN nearest neighbours and Bayesian linear inversion."""
from .annealing import AnnealingResult, SaSchedule, loo_knn_objective, sa_select_predictors
from .bayes import BayesLinearModel, BayesPrediction, McmcSettings, bayes_linear_fit, bayes_linear_predict
from .msn import KnnModel, MsnProjection, knn_fit, knn_predict, msn_fit

__all__ = [
    "AnnealingResult", "SaSchedule", "loo_knn_objective", "sa_select_predictors",
    "BayesLinearModel", "BayesPrediction", "McmcSettings", "bayes_linear_fit",
    "bayes_linear_predict", "KnnModel", "MsnProjection", "knn_fit", "knn_predict",
    "msn_fit",
]
