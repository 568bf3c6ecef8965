"""Dataset ingestion, seeded splitting, and synthetic interaction DGPs.

All operations are pure functions of their inputs.  Shuffling and sampling
use ``numpy.random.default_rng`` (PCG64); the seed fully determines the
result, so splits and synthetic draws replicate across runs.
"""

from __future__ import annotations

import math
import os
import re
import tempfile
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEFAULT_CACHE_ENV = "LOTTERY_CACHE_DIR"


class DataError(ValueError):
    """Raised when ingestion or generation inputs violate the contract."""


class FetchError(RuntimeError):
    """Raised when a remote fetch fails and no cache entry exists."""


@dataclass(frozen=True)
class Dataset:
    """Tabular feature matrix with binary labels.

    features : (n, d) float array, all finite
    labels   : (n,) int array with values in {0, 1}
    feature_names : d unique column names
    """

    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...]
    id: str

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=float)
        labs = np.asarray(self.labels, dtype=int)
        if feats.ndim != 2 or feats.shape[0] < 1 or feats.shape[1] < 1:
            raise DataError(f"features must be a non-empty 2-d matrix, got shape {feats.shape}")
        if not np.all(np.isfinite(feats)):
            bad = np.argwhere(~np.isfinite(feats))[0]
            raise DataError(f"non-finite feature value at row {bad[0]}, column {bad[1]}")
        if labs.shape != (feats.shape[0],):
            raise DataError("labels length must match feature rows")
        if not np.all((labs == 0) | (labs == 1)):
            raise DataError("labels must be 0/1")
        if len(self.feature_names) != feats.shape[1]:
            raise DataError("feature_names length must equal feature columns")
        if len(set(self.feature_names)) != len(self.feature_names):
            raise DataError("feature_names must be pairwise distinct")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labs)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def is_degenerate(self) -> bool:
        """True when only one class is present."""
        return len(np.unique(self.labels)) < 2

    def subset(self, indices: np.ndarray, tag: str) -> "Dataset":
        idx = np.asarray(indices, dtype=int)
        return Dataset(self.features[idx], self.labels[idx], self.feature_names, f"{self.id}:{tag}")


@dataclass(frozen=True)
class SplitSpec:
    """Seeded train/test partition request."""

    seed: int
    train_fraction: float = 0.8

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise DataError(f"train_fraction must be in (0,1), got {self.train_fraction}")


@dataclass(frozen=True)
class SyntheticSpec:
    """Additive-plus-pairwise-interaction data generating process.

    score(x) = sum_j beta_j x_j + sum_{i<j} alpha_ij x_i x_j + eps,
    eps ~ N(0, noise_sd^2); label = 1 iff score > 0.
    """

    d: int
    beta: tuple[float, ...]
    alpha: dict[tuple[int, int], float] = field(default_factory=dict)
    noise_sd: float = 0.0
    label_rule: str = "sign"

    def __post_init__(self):
        if self.d < 1:
            raise DataError("d must be >= 1")
        if len(self.beta) != self.d:
            raise DataError(f"beta must have length d={self.d}")
        if self.noise_sd < 0:
            raise DataError("noise_sd must be >= 0")
        if self.label_rule != "sign":
            raise DataError("only the threshold-at-zero label rule is supported")
        canon = {}
        for (i, j), a in self.alpha.items():
            if i == j:
                raise DataError(f"interaction key ({i},{j}) must have i != j")
            if not (0 <= i < self.d and 0 <= j < self.d):
                raise DataError(f"interaction key ({i},{j}) out of range for d={self.d}")
            key = (min(i, j), max(i, j))
            if key in canon:
                raise DataError(f"duplicate interaction key {key}")
            canon[key] = float(a)
        object.__setattr__(self, "alpha", canon)
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))

    @property
    def interaction_density(self) -> float:
        """Sum of absolute interaction coefficients."""
        return float(sum(abs(a) for a in self.alpha.values()))

    def scaled_alpha(self, scale: float) -> "SyntheticSpec":
        """Copy of this spec with every interaction coefficient scaled."""
        return SyntheticSpec(
            d=self.d,
            beta=self.beta,
            alpha={k: v * scale for k, v in self.alpha.items()},
            noise_sd=self.noise_sd,
        )


def load_csv(path: str | Path, label_column: str) -> Dataset:
    """Read a comma-delimited, headered CSV into a Dataset.

    Features are all non-label columns in header order; labels must be
    numeric 0/1.  Any non-numeric or non-finite cell is a hard error.
    """
    import csv

    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"empty file: {path}") from None
        header = [h.strip() for h in header]
        if label_column not in header:
            raise DataError(f"label column {label_column!r} not in header {header}")
        label_idx = header.index(label_column)
        feature_names = tuple(h for i, h in enumerate(header) if i != label_idx)
        rows, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"row {lineno} has {len(row)} cells, expected {len(header)}")
            vals = []
            for i, cell in enumerate(row):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(
                        f"non-numeric cell {cell!r} at row {lineno}, column {header[i]!r}"
                    ) from None
                if not math.isfinite(v):
                    raise DataError(f"non-numeric cell {cell!r} at row {lineno}, column {header[i]!r}")
                vals.append(v)
            lab = vals.pop(label_idx)
            if lab not in (0.0, 1.0):
                raise DataError(f"label {lab!r} at row {lineno} is not 0/1")
            rows.append(vals)
            labels.append(int(lab))
    if not rows:
        raise DataError(f"empty file: {path}")
    if len(set(labels)) < 2:
        raise DataError("fewer than 2 distinct labels")
    return Dataset(np.array(rows, float), np.array(labels, int), feature_names, path.stem)


def split(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Disjoint seeded partition with sizes (floor(n*f), n - floor(n*f))."""
    n_train = int(math.floor(ds.n * spec.train_fraction))
    if not 1 <= n_train <= ds.n - 1:
        raise DataError(
            f"train_fraction {spec.train_fraction} yields empty partition for n={ds.n}"
        )
    rng = np.random.default_rng(spec.seed)
    perm = rng.permutation(ds.n)
    train_idx = np.sort(perm[:n_train])
    test_idx = np.sort(perm[n_train:])
    return ds.subset(train_idx, "train"), ds.subset(test_idx, "test")


def generate_synthetic(spec: SyntheticSpec, n: int, seed: int, id: str | None = None) -> Dataset:
    """Draw n rows of i.i.d. standard-normal features and threshold the score."""
    if n < 1:
        raise DataError("n must be >= 1")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, spec.d))
    score = X @ np.asarray(spec.beta)
    for (i, j), a in sorted(spec.alpha.items()):
        score = score + a * X[:, i] * X[:, j]
    if spec.noise_sd > 0:
        score = score + spec.noise_sd * rng.standard_normal(n)
    labels = (score > 0).astype(int)
    names = tuple(f"x{j + 1}" for j in range(spec.d))
    ds_id = id if id is not None else f"synth-d{spec.d}-n{n}-seed{seed}"
    return Dataset(X, labels, names, ds_id)


def _safe_name(dataset_id: str) -> str:
    name = re.sub(r"[^A-Za-z0-9._-]", "_", dataset_id)
    return name or "dataset"


def default_cache_dir() -> Path:
    env = os.environ.get(DEFAULT_CACHE_ENV)
    if env:
        return Path(env)
    return Path.home() / ".cache" / "shaplottery"


def fetch_remote(
    url_template: str,
    dataset_id: str,
    cache_dir: str | Path | None = None,
    timeout: float = 30.0,
) -> Path:
    """Fetch ``url_template.format(id=dataset_id)`` into the cache, or reuse it.

    A cache hit skips the network entirely.  Writes go to a temp file and
    are published with an atomic rename, so concurrent fetchers of the same
    id never observe a partial file.
    """
    cache = Path(cache_dir) if cache_dir is not None else default_cache_dir()
    cache.mkdir(parents=True, exist_ok=True)
    target = cache / _safe_name(dataset_id)
    if target.exists():
        return target
    url = url_template.format(id=dataset_id)
    try:
        with urllib.request.urlopen(url, timeout=timeout) as resp:
            status = getattr(resp, "status", 200)
            if not 200 <= status < 300:
                raise FetchError(f"non-2xx response {status} for {url}")
            payload = resp.read()
    except urllib.error.HTTPError as exc:
        raise FetchError(f"non-2xx response {exc.code} for {url}") from exc
    except (urllib.error.URLError, OSError) as exc:
        raise FetchError(f"transport failure for {url}: {exc}") from exc
    fd, tmp = tempfile.mkstemp(dir=cache, prefix=target.name, suffix=".part")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, target)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)
    return target
