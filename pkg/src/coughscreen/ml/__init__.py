"""Classical classifiers, model selection and evaluation metrics."""

from .gbt import GradientBoostedTrees, build_tree, train_gbt
from .linear import LogisticRegression, logistic_loss_and_grad, train_logistic_regression
from .metrics import Metrics, evaluate, metrics_from_confusion, metrics_from_predictions, write_metrics_report
from .scaler import StandardScaler
from .selection import (
    DEFAULT_GRIDS,
    FAMILIES,
    CvResult,
    FittedModel,
    FoldError,
    GridSearchResult,
    fit_model,
    grid_search_cv,
    stratified_kfold,
)
from .svm import SVM, dual_objective, kernel_matrix, smo_solve, train_svm_smo

__all__ = [
    "DEFAULT_GRIDS", "FAMILIES", "CvResult", "FittedModel", "FoldError", "GradientBoostedTrees",
    "GridSearchResult", "LogisticRegression", "Metrics", "SVM", "StandardScaler", "build_tree",
    "dual_objective", "evaluate", "fit_model", "grid_search_cv", "kernel_matrix",
    "logistic_loss_and_grad", "metrics_from_confusion", "metrics_from_predictions", "smo_solve",
    "stratified_kfold", "train_gbt", "train_logistic_regression", "train_svm_smo",
    "write_metrics_report",
]
