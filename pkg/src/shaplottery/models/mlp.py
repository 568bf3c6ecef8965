"""Single-hidden-layer rectifier network trained by full-batch gradient descent."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..data import Dataset
from .tree import TrainingError, _sigmoid


@dataclass
class MlpModel:
    """relu(x W1^T + b1) w2 + b2 scorer (logit output)."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float
    seed: int
    config_digest: str
    activation: str = "relu"
    class_tag: str = field(default="neural", init=False)

    def __post_init__(self):
        self.w1 = np.asarray(self.w1, dtype=float)
        self.b1 = np.asarray(self.b1, dtype=float)
        self.w2 = np.asarray(self.w2, dtype=float)
        if self.w1.shape[0] != self.b1.shape[0] or self.w1.shape[0] != self.w2.shape[0]:
            raise TrainingError("layer dimensions do not compose")
        finite = (
            np.all(np.isfinite(self.w1))
            and np.all(np.isfinite(self.b1))
            and np.all(np.isfinite(self.w2))
            and np.isfinite(self.b2)
        )
        if not finite:
            raise TrainingError("mlp parameters must be finite")

    def margin(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        hidden = np.maximum(X @ self.w1.T + self.b1, 0.0)
        return hidden @ self.w2 + self.b2


def train_mlp(
    train: Dataset,
    hidden_width: int = 16,
    epochs: int = 300,
    step_size: float = 0.5,
    seed: int = 0,
) -> MlpModel:
    """Seeded Gaussian init, full-batch gradient descent on mean logistic loss."""
    if hidden_width < 1:
        raise TrainingError("hidden_width must be >= 1")
    if epochs < 0:
        raise TrainingError("epochs must be >= 0")
    from .base import config_digest

    rng = np.random.default_rng(seed)
    d = train.d
    w1 = rng.normal(0.0, 1.0 / np.sqrt(d), size=(hidden_width, d))
    b1 = np.zeros(hidden_width)
    w2 = rng.normal(0.0, 1.0 / np.sqrt(hidden_width), size=hidden_width)
    b2 = 0.0

    X = train.features
    y = train.labels.astype(float)
    n = train.n
    for _ in range(epochs):
        pre = X @ w1.T + b1
        hidden = np.maximum(pre, 0.0)
        z = hidden @ w2 + b2
        p = _sigmoid(z)
        err = (p - y) / n
        grad_w2 = hidden.T @ err
        grad_b2 = float(err.sum())
        back = np.outer(err, w2) * (pre > 0.0)
        grad_w1 = back.T @ X
        grad_b1 = back.sum(axis=0)
        w1 -= step_size * grad_w1
        b1 -= step_size * grad_b1
        w2 -= step_size * grad_w2
        b2 -= step_size * grad_b2
        if not (np.all(np.isfinite(w1)) and np.all(np.isfinite(w2)) and np.isfinite(b2)):
            raise TrainingError("mlp training diverged (non-finite parameters)")
    digest = config_digest(
        "mlp", {"hidden_width": hidden_width, "epochs": epochs, "step_size": step_size}, seed
    )
    return MlpModel(w1=w1, b1=b1, w2=w2, b2=b2, seed=seed, config_digest=digest)
