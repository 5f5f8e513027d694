"""Tree ensembles: boosted regressors for the vector field, classifiers for evaluation."""

from latentforest.trees._backend import BACKEND
from latentforest.trees.boosting import (
    GbtClassifier,
    GbtClassifierParams,
    GbtParams,
    GbtRegressor,
    fit_gbt_classifier,
    fit_gbt_regressor,
    predict_gbt,
)
from latentforest.trees.forest import ForestParams, RandomForestClassifier, fit_random_forest
from latentforest.trees.tree import Binner, RegressionTree, TreeParams, grow_tree, pack

__all__ = [
    "BACKEND",
    "Binner",
    "ForestParams",
    "GbtClassifier",
    "GbtClassifierParams",
    "GbtParams",
    "GbtRegressor",
    "RandomForestClassifier",
    "RegressionTree",
    "TreeParams",
    "fit_gbt_classifier",
    "fit_gbt_regressor",
    "fit_random_forest",
    "grow_tree",
    "pack",
    "predict_gbt",
]
