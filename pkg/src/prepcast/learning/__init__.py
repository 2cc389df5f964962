from .features import FEATURE_DIM, FEATURE_NAMES, featurize, featurize_transfer, training_matrix
from .forest import ForestModel, ForestParams, fit_forest, train_forest
from .linear import LinearModel, fit_linear, train_linear
from .registry import (
    GENERIC,
    AgentRegistry,
    Prediction,
    load_registry,
    predict,
    save_registry,
    train_registry,
)
from .tree import RegressionTree, TreeParams, train_tree

__all__ = [
    "FEATURE_DIM", "FEATURE_NAMES", "featurize", "featurize_transfer", "training_matrix",
    "ForestModel", "ForestParams", "fit_forest", "train_forest",
    "LinearModel", "fit_linear", "train_linear",
    "GENERIC", "AgentRegistry", "Prediction", "load_registry", "predict", "save_registry", "train_registry",
    "RegressionTree", "TreeParams", "train_tree",
]
