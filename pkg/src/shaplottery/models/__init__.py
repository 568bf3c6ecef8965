"""Seeded trainers for the three hypothesis classes plus prediction interfaces."""

from .base import (
    ModelConfig,
    TrainedModel,
    config_digest,
    margin,
    model_from_json,
    model_to_json,
    predict_label,
    predict_proba,
    train_model,
)
from .linear import LinearModel, train_logistic, train_ridge
from .mlp import MlpModel, train_mlp
from .tree import TrainingError, TreeEnsemble, TreeNode, predict_tree, train_cart, train_gbt, train_random_forest

__all__ = [
    "LinearModel",
    "MlpModel",
    "ModelConfig",
    "TrainedModel",
    "TrainingError",
    "TreeEnsemble",
    "TreeNode",
    "config_digest",
    "margin",
    "model_from_json",
    "model_to_json",
    "predict_label",
    "predict_proba",
    "predict_tree",
    "train_cart",
    "train_gbt",
    "train_logistic",
    "train_mlp",
    "train_model",
    "train_random_forest",
    "train_ridge",
]
