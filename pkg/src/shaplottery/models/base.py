"""Shared model surface: prediction dispatch, config digests, serialization,
and the roster-config layer used by experiments and the CLI."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from ..data import Dataset
from .linear import LinearModel, train_logistic, train_ridge
from .mlp import MlpModel, train_mlp
from .tree import TreeEnsemble, TreeNode, TrainingError, _sigmoid, train_cart, train_gbt, train_random_forest

TrainedModel = Union[LinearModel, TreeEnsemble, MlpModel]

PROB_CLIP = 1e-12


def config_digest(kind: str, params: dict, seed: int) -> str:
    """Stable short digest of a trainer configuration."""
    payload = json.dumps({"kind": kind, "params": params, "seed": seed}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:12]


def margin(model: TrainedModel, x: np.ndarray) -> np.ndarray:
    """Pre-link score: log-odds for logistic/GBT/MLP, mean leaf value for
    bagging trees, w.x + b for ridge.  Accepts one row or a matrix."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    out = model.margin(x)
    return float(out[0]) if single else out


def predict_proba(model: TrainedModel, x: np.ndarray):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    m = model.margin(x)
    if isinstance(model, TreeEnsemble) and model.aggregation == "mean":
        p = np.clip(m, 0.0, 1.0)
    else:
        p = _sigmoid(m)
    return float(p[0]) if single else p


def predict_label(model: TrainedModel, x: np.ndarray):
    p = predict_proba(model, x)
    if np.isscalar(p):
        return int(p >= 0.5)
    return (p >= 0.5).astype(int)


def model_to_json(model: TrainedModel) -> str:
    """Self-describing text serialization; reals keep full repr precision."""
    if isinstance(model, LinearModel):
        payload = {
            "class_tag": "linear",
            "seed": model.seed,
            "config_digest": model.config_digest,
            "weights": model.weights.tolist(),
            "bias": model.bias,
            "train_feature_means": model.train_feature_means.tolist(),
            "converged": model.converged,
        }
    elif isinstance(model, TreeEnsemble):
        payload = {
            "class_tag": "tree",
            "seed": model.seed,
            "config_digest": model.config_digest,
            "base_score": model.base_score,
            "aggregation": model.aggregation,
            "trees": [t.to_dict() for t in model.trees],
        }
    elif isinstance(model, MlpModel):
        payload = {
            "class_tag": "neural",
            "seed": model.seed,
            "config_digest": model.config_digest,
            "activation": model.activation,
            "w1": model.w1.tolist(),
            "b1": model.b1.tolist(),
            "w2": model.w2.tolist(),
            "b2": model.b2,
        }
    else:
        raise TypeError(f"unknown model type {type(model)!r}")
    return json.dumps(payload, sort_keys=True)


def model_from_json(text: str) -> TrainedModel:
    obj = json.loads(text)
    tag = obj.get("class_tag")
    if tag == "linear":
        return LinearModel(
            weights=np.array(obj["weights"], float),
            bias=float(obj["bias"]),
            train_feature_means=np.array(obj["train_feature_means"], float),
            seed=int(obj["seed"]),
            config_digest=obj["config_digest"],
            converged=bool(obj["converged"]),
        )
    if tag == "tree":
        return TreeEnsemble(
            trees=[TreeNode.from_dict(t) for t in obj["trees"]],
            base_score=float(obj["base_score"]),
            aggregation=obj["aggregation"],
            seed=int(obj["seed"]),
            config_digest=obj["config_digest"],
        )
    if tag == "neural":
        return MlpModel(
            w1=np.array(obj["w1"], float),
            b1=np.array(obj["b1"], float),
            w2=np.array(obj["w2"], float),
            b2=float(obj["b2"]),
            seed=int(obj["seed"]),
            config_digest=obj["config_digest"],
            activation=obj["activation"],
        )
    raise TrainingError(f"unknown class tag {tag!r} in serialized model")


@dataclass(frozen=True)
class ModelConfig:
    """Named trainer configuration for roster assembly."""

    name: str
    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    @property
    def class_tag(self) -> str:
        if self.kind in ("gbt", "forest", "cart"):
            return "tree"
        if self.kind in ("logistic", "ridge"):
            return "linear"
        if self.kind == "mlp":
            return "neural"
        raise TrainingError(f"unknown model kind {self.kind!r}")


_TRAINERS = {
    "gbt": train_gbt,
    "forest": train_random_forest,
    "cart": train_cart,
    "logistic": train_logistic,
    "ridge": train_ridge,
    "mlp": train_mlp,
}


def train_model(config: ModelConfig, train: Dataset) -> TrainedModel:
    trainer = _TRAINERS.get(config.kind)
    if trainer is None:
        raise TrainingError(f"unknown model kind {config.kind!r}")
    return trainer(train, seed=config.seed, **config.params)
