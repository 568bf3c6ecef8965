"""Shapley attribution engines.

Four routes to the same quantity:

* ``linear_shap``   -- closed form for linear scorers, exact.
* ``tree_shap``     -- exact Shapley values of the cover-weighted
  path-dependent value function, polynomial time per tree.
* ``kernel_shap``   -- sampled kernel-weighted constrained regression for
  arbitrary scorers, deterministic given the seed.
* ``exact_shapley`` -- brute-force coalition enumeration (d <= 12), the
  testing oracle the fast engines are checked against.

All engines attribute the margin (pre-link score) by default; rank-based
comparison downstream is unaffected by the monotone link within a model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable

import numpy as np

from .data import Dataset
from .models import TrainedModel, TreeEnsemble, margin, predict_proba
from .models.linear import LinearModel
from .models.tree import TreeNode

MAX_EXACT_DIM = 12


class AttributionError(ValueError):
    """Raised on contract violations in the attribution engines."""


@dataclass(frozen=True)
class AttributionVector:
    """Per-instance, per-model Shapley attribution on the margin scale."""

    phi: np.ndarray
    model_id: str
    instance_id: int | str
    baseline: float
    explained_value: float
    scale_tag: str = "margin"

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float)
        if not np.all(np.isfinite(phi)):
            raise AttributionError("attribution values must be finite")
        if not (math.isfinite(self.baseline) and math.isfinite(self.explained_value)):
            raise AttributionError("baseline and explained value must be finite")
        object.__setattr__(self, "phi", phi)

    @property
    def d(self) -> int:
        return self.phi.shape[0]


@dataclass(frozen=True)
class BackgroundSet:
    """Reference sample for interventional value functions.

    feature_means are the full-source means; rows may be a seeded subsample.
    """

    feature_means: np.ndarray
    rows: np.ndarray
    source: str = ""

    def __post_init__(self):
        rows = np.atleast_2d(np.asarray(self.rows, dtype=float))
        means = np.asarray(self.feature_means, dtype=float)
        if rows.shape[0] < 1 or rows.shape[1] != means.shape[0]:
            raise AttributionError("background rows must be (m, d) with m >= 1 matching means")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "feature_means", means)

    @staticmethod
    def from_dataset(ds: Dataset, max_rows: int | None = 100, seed: int = 0) -> "BackgroundSet":
        rows = ds.features
        if max_rows is not None and ds.n > max_rows:
            rng = np.random.default_rng(seed)
            idx = np.sort(rng.choice(ds.n, size=max_rows, replace=False))
            rows = ds.features[idx]
        return BackgroundSet(feature_means=ds.features.mean(axis=0), rows=rows, source=ds.id)


def model_margin_fn(model: TrainedModel, scale: str = "margin") -> Callable[[np.ndarray], np.ndarray]:
    """Batch scoring closure for kernel_shap; scale is "margin" or "proba"."""
    if scale == "margin":
        return lambda X: np.asarray(margin(model, np.atleast_2d(X)), dtype=float)
    if scale == "proba":
        return lambda X: np.asarray(predict_proba(model, np.atleast_2d(X)), dtype=float)
    raise AttributionError(f"unknown attribution scale {scale!r}")


# ---------------------------------------------------------------------------
# Brute-force oracle
# ---------------------------------------------------------------------------

def exact_shapley(
    value_fn: Callable[[tuple[int, ...]], float],
    d: int,
    model_id: str = "exact",
    instance_id: int | str = 0,
) -> AttributionVector:
    """phi_j = sum_S |S|!(d-|S|-1)!/d! [v(S+{j}) - v(S)] by full enumeration."""
    if d < 1:
        raise AttributionError("d must be >= 1")
    if d > MAX_EXACT_DIM:
        raise AttributionError(f"exact enumeration refused for d={d} > {MAX_EXACT_DIM}")
    n_masks = 1 << d
    values = np.empty(n_masks)
    for mask in range(n_masks):
        coalition = tuple(j for j in range(d) if mask >> j & 1)
        values[mask] = float(value_fn(coalition))
    fact = [math.factorial(k) for k in range(d + 1)]
    weights = [fact[s] * fact[d - s - 1] / fact[d] for s in range(d)]
    phi = np.zeros(d)
    for mask in range(n_masks):
        size = bin(mask).count("1")
        for j in range(d):
            if mask >> j & 1:
                continue
            phi[j] += weights[size] * (values[mask | (1 << j)] - values[mask])
    return AttributionVector(
        phi=phi,
        model_id=model_id,
        instance_id=instance_id,
        baseline=float(values[0]),
        explained_value=float(values[n_masks - 1]),
    )


# ---------------------------------------------------------------------------
# Linear closed form
# ---------------------------------------------------------------------------

def linear_shap(model: LinearModel, x: np.ndarray, model_id: str = "linear", instance_id: int | str = 0) -> AttributionVector:
    """phi_j = w_j (x_j - mean_j); baseline is the margin at the feature means."""
    x = np.asarray(x, dtype=float)
    if x.shape != model.weights.shape:
        raise AttributionError(f"dimension mismatch: x has {x.shape}, model {model.weights.shape}")
    phi = model.weights * (x - model.train_feature_means)
    baseline = float(model.weights @ model.train_feature_means + model.bias)
    explained = float(model.weights @ x + model.bias)
    return AttributionVector(phi=phi, model_id=model_id, instance_id=instance_id, baseline=baseline, explained_value=explained)


def linear_shap_matrix(model: LinearModel, X: np.ndarray) -> tuple[np.ndarray, float]:
    """Batch form of linear_shap: ((m, d) attributions, baseline)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    phi = model.weights[None, :] * (X - model.train_feature_means[None, :])
    baseline = float(model.weights @ model.train_feature_means + model.bias)
    return phi, baseline


# ---------------------------------------------------------------------------
# Tree engine
# ---------------------------------------------------------------------------

@lru_cache(maxsize=64)
def _shapley_weights(u: int) -> np.ndarray:
    """Coalition weights t!(u-1-t)!/u! for a u-player game, t = 0..u-1."""
    fact = [math.factorial(k) for k in range(u + 1)]
    return np.array([fact[t] * fact[u - 1 - t] / fact[u] for t in range(u)])


def _leaf_table(root: TreeNode) -> list[tuple[float, list[int], list[float], list[list[tuple[float, bool]]]]]:
    """Flatten a tree into per-leaf product games.

    Each entry is (leaf value, unique path features, per-feature products of
    cover fractions, per-feature split conditions (threshold, want_left)).
    """
    leaves = []

    def walk(node: TreeNode, feats: list[int], fracs: dict[int, float], conds: dict[int, list]):
        if node.is_leaf:
            leaves.append(
                (
                    float(node.value),
                    list(feats),
                    [fracs[f] for f in feats],
                    [list(conds[f]) for f in feats],
                )
            )
            return
        if node.cover <= 0 or node.left.cover <= 0 or node.right.cover <= 0:
            raise AttributionError("malformed tree: non-positive cover")
        f = node.split_feature
        new = f not in fracs
        if new:
            feats.append(f)
            fracs[f] = 1.0
            conds[f] = []
        for child, want_left in ((node.left, True), (node.right, False)):
            frac = child.cover / node.cover
            fracs_f, conds_f = fracs[f], list(conds[f])
            fracs[f] = fracs_f * frac
            conds[f] = conds_f + [(node.threshold, want_left)]
            walk(child, feats, fracs, conds)
            fracs[f] = fracs_f
            conds[f] = conds_f
        if new:
            feats.pop()
            del fracs[f]
            del conds[f]

    walk(root, [], {}, {})
    return leaves


def _tree_shap_single_tree(root: TreeNode, X: np.ndarray, phi: np.ndarray) -> float:
    """Accumulate one tree's Shapley values into phi (m, d); returns the
    tree's baseline (path-weighted expectation of the empty coalition)."""
    m = X.shape[0]
    baseline = 0.0
    for value, feats, zfracs, conds in _leaf_table(root):
        u = len(feats)
        zprod = float(np.prod(zfracs)) if u else 1.0
        baseline += value * zprod
        if u == 0:
            continue
        ones = np.empty((m, u))
        for i, cond_list in enumerate(conds):
            ok = np.ones(m, dtype=bool)
            for thr, want_left in cond_list:
                ok &= (X[:, feats[i]] <= thr) == want_left
            ones[:, i] = ok
        # polynomial prod_i (a_i * z + b_i); coefficient matrix C: (m, u+1)
        C = np.zeros((m, u + 1))
        C[:, 0] = 1.0
        for i in range(u):
            a = ones[:, i : i + 1]
            b = zfracs[i]
            C[:, 1 : i + 2] = b * C[:, 1 : i + 2] + a * C[:, 0 : i + 1]
            C[:, 0] *= b
        weights = _shapley_weights(u)
        for j in range(u):
            a = ones[:, j]
            b = zfracs[j]
            # divide C by (a*z + b): synthetic division where a == 1,
            # constant division where a == 0 (top coefficient is 0 there)
            qd = np.empty((m, u))
            qd[:, u - 1] = C[:, u]
            for k in range(u - 1, 0, -1):
                qd[:, k - 1] = C[:, k] - b * qd[:, k]
            q = np.where(a[:, None] > 0.5, qd, C[:, :u] / b)
            phi[:, feats[j]] += value * (a - b) * (q @ weights)
    return baseline


def tree_shap_matrix(ensemble: TreeEnsemble, X: np.ndarray) -> tuple[np.ndarray, float]:
    """Exact Shapley values of the path-dependent value function for a batch.

    Returns ((m, d) attributions, scalar baseline).  Linearity over trees:
    sum aggregation adds per-tree games, mean aggregation averages them.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    m, d = X.shape
    phi = np.zeros((m, d))
    baseline = 0.0
    for tree in ensemble.trees:
        baseline += _tree_shap_single_tree(tree, X, phi)
    if ensemble.aggregation == "mean":
        phi /= len(ensemble.trees)
        baseline /= len(ensemble.trees)
    else:
        baseline += ensemble.base_score
    return phi, float(baseline)


def tree_shap(ensemble: TreeEnsemble, x: np.ndarray, model_id: str = "tree", instance_id: int | str = 0) -> AttributionVector:
    x = np.asarray(x, dtype=float)
    phi, baseline = tree_shap_matrix(ensemble, x[None, :])
    explained = float(ensemble.margin(x[None, :])[0])
    return AttributionVector(
        phi=phi[0], model_id=model_id, instance_id=instance_id, baseline=baseline, explained_value=explained
    )


def path_dependent_value(ensemble: TreeEnsemble, x: np.ndarray, coalition: Iterable[int]) -> float:
    """Cover-weighted path-dependent value function (the game tree_shap solves).

    Features in the coalition follow x; features outside it average over
    children by cover.  Kept simple on purpose: this is the reference
    definition used by the brute-force oracle.
    """
    S = frozenset(coalition)
    x = np.asarray(x, dtype=float)

    def walk(node: TreeNode) -> float:
        if node.is_leaf:
            return node.value
        if node.split_feature in S:
            follow = node.left if x[node.split_feature] <= node.threshold else node.right
            return walk(follow)
        wl = node.left.cover / node.cover
        wr = node.right.cover / node.cover
        return wl * walk(node.left) + wr * walk(node.right)

    total = sum(walk(t) for t in ensemble.trees)
    if ensemble.aggregation == "mean":
        return total / len(ensemble.trees)
    return total + ensemble.base_score


# ---------------------------------------------------------------------------
# Interventional value function and KernelSHAP
# ---------------------------------------------------------------------------

def value_interventional(
    model: TrainedModel, x: np.ndarray, coalition: Iterable[int], background: BackgroundSet
) -> float:
    """Mean margin over background rows with coalition coordinates pinned to x."""
    x = np.asarray(x, dtype=float)
    rows = background.rows.copy()
    idx = sorted(set(coalition))
    if idx:
        if max(idx) >= x.shape[0] or min(idx) < 0:
            raise AttributionError("coalition index out of range")
        rows[:, idx] = x[idx]
    return float(np.mean(margin(model, rows)))


def _kernel_weight(d: int, s: int) -> float:
    return (d - 1) / (math.comb(d, s) * s * (d - s))


def _masked_values(margin_fn, Z: np.ndarray, x: np.ndarray, rows: np.ndarray, chunk: int = 64) -> np.ndarray:
    """v(z) = mean over background rows of margin(z*x + (1-z)*row), per coalition."""
    K = Z.shape[0]
    mbg = rows.shape[0]
    out = np.empty(K)
    for start in range(0, K, chunk):
        zs = Z[start : start + chunk]
        masked = np.where(zs[:, None, :] > 0.5, x[None, None, :], rows[None, :, :])
        flat = masked.reshape(-1, x.shape[0])
        vals = np.asarray(margin_fn(flat), dtype=float).reshape(zs.shape[0], mbg)
        out[start : start + chunk] = vals.mean(axis=1)
    return out


def kernel_shap(
    margin_fn: Callable[[np.ndarray], np.ndarray],
    x: np.ndarray,
    background: BackgroundSet,
    n_samples: int = 1000,
    ridge_reg: float = 1e-6,
    seed: int = 0,
    model_id: str = "kernel",
    instance_id: int | str = 0,
) -> AttributionVector:
    """Shapley-kernel weighted constrained regression over seeded coalitions.

    Enumerates every coalition when 2^d fits the sample budget, otherwise
    samples coalition sizes from the kernel distribution and pairs each draw
    with its complement.  Efficiency holds exactly by construction: the last
    coefficient is eliminated against the constraint sum(phi) = f(x) - E[f].
    """
    x = np.asarray(x, dtype=float)
    d = x.shape[0]
    if n_samples < d + 2:
        raise AttributionError(f"n_samples must be >= d + 2 = {d + 2}")
    if ridge_reg < 0:
        raise AttributionError("ridge_reg must be >= 0")
    rows = background.rows
    v_empty = float(np.mean(margin_fn(rows)))
    v_full = float(np.asarray(margin_fn(x[None, :]))[0])

    if d == 1:
        phi = np.array([v_full - v_empty])
        return AttributionVector(phi=phi, model_id=model_id, instance_id=instance_id, baseline=v_empty, explained_value=v_full)

    if (1 << d) <= n_samples:
        masks = np.arange(1, (1 << d) - 1)
        Z = (masks[:, None] >> np.arange(d)[None, :]) & 1
        sizes = Z.sum(axis=1)
        weights = np.array([_kernel_weight(d, int(s)) for s in sizes])
    else:
        rng = np.random.default_rng(seed)
        size_support = np.arange(1, d)
        size_probs = (d - 1) / (size_support * (d - size_support))
        size_probs = size_probs / size_probs.sum()
        n_pairs = (n_samples - 2) // 2
        drawn_sizes = rng.choice(size_support, size=n_pairs, p=size_probs)
        Z = np.zeros((2 * n_pairs, d))
        for i, s in enumerate(drawn_sizes):
            members = rng.choice(d, size=int(s), replace=False)
            Z[2 * i, members] = 1.0
            Z[2 * i + 1] = 1.0 - Z[2 * i]
        weights = np.ones(Z.shape[0])

    y = _masked_values(margin_fn, Z, x, rows)
    efficiency = v_full - v_empty
    # weighted least squares with the efficiency equality as a KKT constraint;
    # the bordered system is symmetric under feature permutation, so the ridge
    # term cannot break the symmetry axiom
    wz = Z * weights[:, None]
    gram = wz.T @ Z + ridge_reg * np.eye(d)
    rhs = wz.T @ (y - v_empty)
    system = np.zeros((d + 1, d + 1))
    system[:d, :d] = gram
    system[:d, d] = 1.0
    system[d, :d] = 1.0
    full_rhs = np.append(rhs, efficiency)
    try:
        solution = np.linalg.solve(system, full_rhs)
    except np.linalg.LinAlgError as exc:
        raise AttributionError(
            "singular kernel regression system; raise n_samples or ridge_reg"
        ) from exc
    phi = solution[:d]
    return AttributionVector(phi=phi, model_id=model_id, instance_id=instance_id, baseline=v_empty, explained_value=v_full)
