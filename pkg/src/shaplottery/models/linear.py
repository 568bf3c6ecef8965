"""Linear-model trainers: regularized logistic regression and ridge classification."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..data import Dataset
from .tree import TrainingError


@dataclass
class LinearModel:
    """w.x + b scorer with the training feature means it was fitted against."""

    weights: np.ndarray
    bias: float
    train_feature_means: np.ndarray
    seed: int
    config_digest: str
    converged: bool = True
    class_tag: str = field(default="linear", init=False)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.train_feature_means = np.asarray(self.train_feature_means, dtype=float)
        if not (np.all(np.isfinite(self.weights)) and np.isfinite(self.bias)):
            raise TrainingError("linear model parameters must be finite")

    def margin(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return X @ self.weights + self.bias


def _logistic_objective(X, t, w, b, l2):
    """Mean logistic loss on +-1 targets plus l2/(2n) * ||w||^2 (bias unpenalized)."""
    n = X.shape[0]
    z = t * (X @ w + b)
    loss = float(np.mean(np.logaddexp(0.0, -z))) + 0.5 * l2 * float(w @ w) / n
    s = 1.0 / (1.0 + np.exp(np.clip(z, -500, 500)))
    grad_w = -(X.T @ (t * s)) / n + l2 * w / n
    grad_b = -float(np.mean(t * s))
    return loss, grad_w, grad_b


def train_logistic(
    train: Dataset,
    l2: float = 1.0,
    seed: int = 0,
    max_iter: int = 5000,
    tol: float = 1e-8,
) -> LinearModel:
    """Full-batch gradient descent with backtracking line search.

    Deterministic: starts from zero parameters, so the seed only tags the
    model.  Stops when the gradient max-norm falls below tol; otherwise the
    converged flag records the shortfall.
    """
    if l2 < 0:
        raise TrainingError("l2 must be >= 0")
    if train.is_degenerate:
        raise TrainingError("training labels contain a single class")
    from .base import config_digest

    X = train.features
    t = 2.0 * train.labels - 1.0
    w = np.zeros(train.d)
    b = 0.0
    step = 1.0
    loss, grad_w, grad_b = _logistic_objective(X, t, w, b, l2)
    converged = False
    for _ in range(max_iter):
        gnorm2 = float(grad_w @ grad_w) + grad_b * grad_b
        if max(np.max(np.abs(grad_w)), abs(grad_b)) <= tol:
            converged = True
            break
        step = min(step * 2.0, 1e8)
        while True:
            w_new = w - step * grad_w
            b_new = b - step * grad_b
            loss_new, gw_new, gb_new = _logistic_objective(X, t, w_new, b_new, l2)
            if np.isfinite(loss_new) and loss_new <= loss - 0.5 * step * gnorm2:
                break
            step *= 0.5
            if step < 1e-16:
                raise TrainingError("line search collapsed; non-finite or pathological loss")
        w, b, loss, grad_w, grad_b = w_new, b_new, loss_new, gw_new, gb_new
    if not np.isfinite(loss):
        raise TrainingError("non-finite logistic loss")
    digest = config_digest("logistic", {"l2": l2, "max_iter": max_iter, "tol": tol}, seed)
    return LinearModel(
        weights=w,
        bias=b,
        train_feature_means=train.features.mean(axis=0),
        seed=seed,
        config_digest=digest,
        converged=converged,
    )


def train_ridge(train: Dataset, lam: float = 1.0, seed: int = 0) -> LinearModel:
    """Closed-form squared-loss fit on +-1 targets; bias unpenalized."""
    if lam <= 0:
        raise TrainingError("lambda must be > 0")
    if train.is_degenerate:
        raise TrainingError("training labels contain a single class")
    from .base import config_digest

    X = train.features
    t = 2.0 * train.labels - 1.0
    A = np.hstack([X, np.ones((train.n, 1))])
    gram = A.T @ A
    reg = lam * np.eye(train.d + 1)
    reg[-1, -1] = 0.0
    theta = np.linalg.solve(gram + reg, A.T @ t)
    digest = config_digest("ridge", {"lambda": lam}, seed)
    return LinearModel(
        weights=theta[:-1],
        bias=float(theta[-1]),
        train_feature_means=train.features.mean(axis=0),
        seed=seed,
        config_digest=digest,
    )
