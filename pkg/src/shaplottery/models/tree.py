"""Decision-tree and tree-ensemble trainers.

One grower serves all tree models: CART and random forests use
variance-reduction splits on 0/1 labels (equivalent argmax to gini for
binary targets), gradient boosting uses Newton gain on logistic-loss
gradients.  Split ties break deterministically on (lowest feature index,
lowest threshold).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..data import Dataset

PROB_CLIP = 1e-12


class TrainingError(ValueError):
    """Raised when trainer inputs or numerics are pathological."""


@dataclass
class TreeNode:
    """Internal node (split_feature set) or leaf (value set); cover counts rows."""

    cover: int
    value: float | None = None
    split_feature: int | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.split_feature is None

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"cover": self.cover, "value": self.value}
        return {
            "cover": self.cover,
            "split_feature": self.split_feature,
            "threshold": self.threshold,
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }

    @staticmethod
    def from_dict(obj: dict) -> "TreeNode":
        if "split_feature" not in obj:
            return TreeNode(cover=int(obj["cover"]), value=float(obj["value"]))
        return TreeNode(
            cover=int(obj["cover"]),
            split_feature=int(obj["split_feature"]),
            threshold=float(obj["threshold"]),
            left=TreeNode.from_dict(obj["left"]),
            right=TreeNode.from_dict(obj["right"]),
        )


@dataclass
class TreeEnsemble:
    """Additive (boosting) or averaging (bagging) collection of trees.

    margin(x) = base_score + sum of tree outputs   (aggregation == "sum")
              = mean of tree outputs               (aggregation == "mean")
    """

    trees: list[TreeNode]
    base_score: float
    aggregation: str
    seed: int
    config_digest: str
    class_tag: str = field(default="tree", init=False)

    def __post_init__(self):
        if not self.trees:
            raise TrainingError("ensemble must contain at least one tree")
        if self.aggregation not in ("sum", "mean"):
            raise TrainingError(f"unknown aggregation {self.aggregation!r}")

    def margin(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.zeros(X.shape[0])
        for tree in self.trees:
            out += predict_tree(tree, X)
        if self.aggregation == "mean":
            return out / len(self.trees)
        return out + self.base_score


def predict_tree(root: TreeNode, X: np.ndarray) -> np.ndarray:
    """Evaluate one tree on an (m, d) matrix; left branch is feature <= threshold."""
    out = np.empty(X.shape[0])

    def descend(node: TreeNode, idx: np.ndarray) -> None:
        if node.is_leaf:
            out[idx] = node.value
            return
        go_left = X[idx, node.split_feature] <= node.threshold
        descend(node.left, idx[go_left])
        descend(node.right, idx[~go_left])

    descend(root, np.arange(X.shape[0]))
    return out


def _best_split_variance(X, y, rows, candidates, min_leaf):
    """Best SSE-reduction split over candidate features; None when nothing improves.

    Returns (gain, feature, threshold, left_rows, right_rows).  First
    candidate feature and lowest threshold win ties (strict > comparison on
    gain, ascending scan order).
    """
    n = rows.size
    y_node = y[rows]
    total = y_node.sum()
    sse_parent = float(np.sum(y_node * y_node) - total * total / n)
    best = None
    for f in candidates:
        xs = X[rows, f]
        order = np.argsort(xs, kind="stable")
        xs_sorted = xs[order]
        ys_sorted = y_node[order]
        csum = np.cumsum(ys_sorted)
        csq = np.cumsum(ys_sorted * ys_sorted)
        k = np.arange(1, n)
        valid = xs_sorted[:-1] < xs_sorted[1:]
        if min_leaf > 1:
            valid &= (k >= min_leaf) & (n - k >= min_leaf)
        if not valid.any():
            continue
        sse_l = csq[:-1] - csum[:-1] ** 2 / k
        rest_sum = total - csum[:-1]
        rest_sq = csq[-1] - csq[:-1]
        sse_r = rest_sq - rest_sum**2 / (n - k)
        gain = np.where(valid, sse_parent - (sse_l + sse_r), -np.inf)
        pos = int(np.argmax(gain))
        if gain[pos] > 0 and (best is None or gain[pos] > best[0]):
            thr = 0.5 * (xs_sorted[pos] + xs_sorted[pos + 1])
            best = (float(gain[pos]), f, float(thr), rows[order[: pos + 1]], rows[order[pos + 1 :]])
    return best


def _grow_variance_tree(X, y, rows, depth, max_depth, min_leaf, rng, n_candidates):
    node_value = float(np.mean(y[rows]))
    n = rows.size
    pure = np.all(y[rows] == y[rows[0]])
    if depth >= max_depth or n < 2 * min_leaf or pure:
        return TreeNode(cover=n, value=node_value)
    d = X.shape[1]
    if n_candidates >= d:
        candidates = range(d)
    else:
        candidates = np.sort(rng.choice(d, size=n_candidates, replace=False))
    found = _best_split_variance(X, y, rows, candidates, min_leaf)
    if found is None:
        return TreeNode(cover=n, value=node_value)
    _, f, thr, left_rows, right_rows = found
    left = _grow_variance_tree(X, y, left_rows, depth + 1, max_depth, min_leaf, rng, n_candidates)
    right = _grow_variance_tree(X, y, right_rows, depth + 1, max_depth, min_leaf, rng, n_candidates)
    return TreeNode(cover=n, split_feature=f, threshold=thr, left=left, right=right)


def train_cart(train: Dataset, max_depth: int = 8, min_leaf: int = 2, seed: int = 0) -> TreeEnsemble:
    """Single greedy variance-reduction tree with mean aggregation."""
    if max_depth < 1:
        raise TrainingError("max_depth must be >= 1")
    if min_leaf < 1:
        raise TrainingError("min_leaf must be >= 1")
    from .base import config_digest

    y = train.labels.astype(float)
    rows = np.arange(train.n)
    root = _grow_variance_tree(
        train.features, y, rows, 0, max_depth, min_leaf, None, train.d
    )
    digest = config_digest("cart", {"max_depth": max_depth, "min_leaf": min_leaf}, seed)
    return TreeEnsemble(trees=[root], base_score=0.0, aggregation="mean", seed=seed, config_digest=digest)


def train_random_forest(
    train: Dataset,
    n_trees: int = 100,
    max_depth: int = 8,
    feature_subsample: float = 1.0,
    seed: int = 0,
    bootstrap: bool = True,
    min_leaf: int = 1,
) -> TreeEnsemble:
    """Bagged variance-reduction trees: seeded bootstrap rows plus per-split
    feature subsampling, mean aggregation."""
    if n_trees < 1:
        raise TrainingError("n_trees must be >= 1")
    if not 0.0 < feature_subsample <= 1.0:
        raise TrainingError("feature_subsample must be in (0,1]")
    from .base import config_digest

    y = train.labels.astype(float)
    n, d = train.n, train.d
    n_candidates = max(1, int(round(feature_subsample * d)))
    trees = []
    for t in range(n_trees):
        rng = np.random.default_rng([seed, t])
        rows = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
        rows = np.sort(rows)
        root = _grow_variance_tree(
            train.features, y, rows, 0, max_depth, 1 if bootstrap else min_leaf, rng, n_candidates
        )
        trees.append(root)
    digest = config_digest(
        "forest",
        {
            "n_trees": n_trees,
            "max_depth": max_depth,
            "feature_subsample": feature_subsample,
            "bootstrap": bootstrap,
        },
        seed,
    )
    return TreeEnsemble(trees=trees, base_score=0.0, aggregation="mean", seed=seed, config_digest=digest)


def _best_split_newton(X, g, h, rows, l2_leaf):
    """Best Newton-gain split: gain = [GL^2/(HL+l2) + GR^2/(HR+l2) - G^2/(H+l2)] / 2."""
    n = rows.size
    g_node, h_node = g[rows], h[rows]
    G, H = g_node.sum(), h_node.sum()
    parent_score = G * G / (H + l2_leaf)
    best = None
    for f in range(X.shape[1]):
        xs = X[rows, f]
        order = np.argsort(xs, kind="stable")
        xs_sorted = xs[order]
        gl = np.cumsum(g_node[order])[:-1]
        hl = np.cumsum(h_node[order])[:-1]
        valid = xs_sorted[:-1] < xs_sorted[1:]
        if not valid.any():
            continue
        gr, hr = G - gl, H - hl
        gain = np.where(
            valid,
            0.5 * (gl * gl / (hl + l2_leaf) + gr * gr / (hr + l2_leaf) - parent_score),
            -np.inf,
        )
        pos = int(np.argmax(gain))
        if gain[pos] > 0 and (best is None or gain[pos] > best[0]):
            thr = 0.5 * (xs_sorted[pos] + xs_sorted[pos + 1])
            best = (float(gain[pos]), f, float(thr), rows[order[: pos + 1]], rows[order[pos + 1 :]])
    return best


def _grow_newton_tree(X, g, h, rows, depth, max_depth, learning_rate, l2_leaf):
    n = rows.size
    if depth < max_depth and n >= 2:
        found = _best_split_newton(X, g, h, rows, l2_leaf)
        if found is not None:
            _, f, thr, left_rows, right_rows = found
            left = _grow_newton_tree(X, g, h, left_rows, depth + 1, max_depth, learning_rate, l2_leaf)
            right = _grow_newton_tree(X, g, h, right_rows, depth + 1, max_depth, learning_rate, l2_leaf)
            return TreeNode(cover=n, split_feature=f, threshold=thr, left=left, right=right)
    value = -learning_rate * g[rows].sum() / (h[rows].sum() + l2_leaf)
    return TreeNode(cover=n, value=float(value))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def train_gbt(
    train: Dataset,
    n_rounds: int = 100,
    depth: int = 3,
    learning_rate: float = 0.1,
    l2_leaf: float = 1.0,
    row_subsample: float = 1.0,
    seed: int = 0,
) -> TreeEnsemble:
    """Newton-boosted regression trees on logistic loss, sum aggregation.

    base_score is the training log-odds.  With row_subsample == 1.0 no
    random draws happen at all, so the result is identical for every seed.
    """
    if n_rounds < 1:
        raise TrainingError("n_rounds must be >= 1")
    if not 0.0 < row_subsample <= 1.0:
        raise TrainingError("row_subsample must be in (0,1]")
    if l2_leaf < 0:
        raise TrainingError("l2_leaf must be >= 0")
    from .base import config_digest

    X = train.features
    y = train.labels.astype(float)
    n = train.n
    p_bar = float(np.clip(np.mean(y), PROB_CLIP, 1.0 - PROB_CLIP))
    base_score = math.log(p_bar / (1.0 - p_bar))
    margins = np.full(n, base_score)
    rng = np.random.default_rng(seed) if row_subsample < 1.0 else None
    trees = []
    for _ in range(n_rounds):
        p = _sigmoid(margins)
        g = p - y
        h = p * (1.0 - p)
        if rng is not None:
            rows = np.sort(rng.choice(n, size=max(1, int(math.floor(row_subsample * n))), replace=False))
        else:
            rows = np.arange(n)
        root = _grow_newton_tree(X, g, h, rows, 0, depth, learning_rate, l2_leaf)
        margins += predict_tree(root, X)
        trees.append(root)
    if not np.all(np.isfinite(margins)):
        raise TrainingError("non-finite boosting margins; check inputs")
    digest = config_digest(
        "gbt",
        {
            "n_rounds": n_rounds,
            "depth": depth,
            "learning_rate": learning_rate,
            "l2_leaf": l2_leaf,
            "row_subsample": row_subsample,
        },
        seed,
    )
    return TreeEnsemble(trees=trees, base_score=base_score, aggregation="sum", seed=seed, config_digest=digest)
