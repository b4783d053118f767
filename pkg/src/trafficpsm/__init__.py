"""Propensity-score matching for before/after traffic-treatment evaluation."""

__version__ = "0.1.0"

from .boosting import BoostedTreeClassifier, BoostParams, Mode, predict_proba, train
from .dataset import StudyConfig, StudyTable, control_subset, covariate_matrix, load_study, load_study_configs
from .matching import Method, atet, balance_test, check_common_support, estimate_scores, match_nearest
from .pipeline import (
    EvaluationConfig,
    EvaluationResult,
    ScenarioSpec,
    compare_methods,
    evaluate,
    generate_synthetic,
    naive_difference,
)
from .probit import ProbitClassifier, fit_probit, predict_probit

__all__ = [
    "__version__",
    "BoostedTreeClassifier",
    "BoostParams",
    "Mode",
    "train",
    "predict_proba",
    "ProbitClassifier",
    "fit_probit",
    "predict_probit",
    "StudyConfig",
    "StudyTable",
    "load_study",
    "load_study_configs",
    "control_subset",
    "covariate_matrix",
    "Method",
    "estimate_scores",
    "check_common_support",
    "match_nearest",
    "balance_test",
    "atet",
    "EvaluationConfig",
    "EvaluationResult",
    "ScenarioSpec",
    "evaluate",
    "compare_methods",
    "generate_synthetic",
    "naive_difference",
]
