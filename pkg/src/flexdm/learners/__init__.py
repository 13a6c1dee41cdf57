"""Native classifiers standing in for their WEKA namesakes."""

from .catalog import default_registry
from .part import build_decision_list
from .registry import (
    LearnerError,
    LearnerFactory,
    LearnerOption,
    LearnerRegistry,
    Model,
    fit,
    predict,
)
from .tree import (
    PruningParams,
    build_pruned_tree,
    normal_quantile,
    pessimistic_error_upper_bound,
)

__all__ = [
    "LearnerError",
    "LearnerFactory",
    "LearnerOption",
    "LearnerRegistry",
    "Model",
    "PruningParams",
    "build_decision_list",
    "build_pruned_tree",
    "default_registry",
    "fit",
    "normal_quantile",
    "pessimistic_error_upper_bound",
    "predict",
]
