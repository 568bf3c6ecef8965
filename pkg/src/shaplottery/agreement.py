"""Prediction-equivalence filtering and explanation-agreement metrics:
Spearman records, lottery rates, agreement gaps, top-k disagreement."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .attribution import AttributionVector
from .data import Dataset
from .models import TrainedModel, predict_label
from .stats import Interval, average_ranks, bootstrap_ci

CLASS_ORDER = ("tree", "linear", "neural")


class AgreementError(ValueError):
    """Raised on malformed agreement inputs."""


def spearman(a: Sequence[float], b: Sequence[float]) -> float | None:
    """Tie-corrected Spearman rank correlation: Pearson on average ranks.

    Returns None (the undefined sentinel) when either input has zero rank
    variance.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise AgreementError(f"length mismatch: {a.shape} vs {b.shape}")
    if a.ndim != 1 or a.size < 2:
        raise AgreementError("inputs must be 1-d with length >= 2")
    ra = average_ranks(a)
    rb = average_ranks(b)
    ra = ra - ra.mean()
    rb = rb - rb.mean()
    var_a = float(ra @ ra)
    var_b = float(rb @ rb)
    if var_a == 0.0 or var_b == 0.0:
        return None
    return float((ra @ rb) / np.sqrt(var_a * var_b))


def pair_class(tag_a: str, tag_b: str) -> str:
    """Canonical pair-class label for two hypothesis-class tags."""
    for tag in (tag_a, tag_b):
        if tag not in CLASS_ORDER:
            raise AgreementError(f"unknown hypothesis class tag {tag!r}")
    if tag_a == tag_b:
        return f"intra-{tag_a}"
    first, second = sorted((tag_a, tag_b), key=CLASS_ORDER.index)
    return f"cross({first},{second})"


@dataclass(frozen=True)
class PairKey:
    model_a: str
    model_b: str
    pair_class: str

    def __post_init__(self):
        if self.model_a >= self.model_b:
            raise AgreementError("pair ids must satisfy model_a < model_b")


@dataclass(frozen=True)
class AgreementRecord:
    pair: PairKey
    instance_id: int | str
    rho: float | None

    @property
    def defined(self) -> bool:
        return self.rho is not None


@dataclass(frozen=True)
class PairClassStats:
    mean: float | None
    median: float | None
    sd: float | None
    count: int
    undefined: int


@dataclass(frozen=True)
class EquivalentSet:
    """Instances on which every roster model emits the same label."""

    instance_ids: tuple[int, ...]
    coverage_fraction: float


@dataclass(frozen=True)
class AgreementTable:
    records: tuple[AgreementRecord, ...]
    by_class: dict[str, PairClassStats] = field(default_factory=dict)

    def rhos(self, pair_classes: Sequence[str] | None = None) -> np.ndarray:
        """Defined correlations, optionally restricted to pair classes."""
        vals = [
            r.rho
            for r in self.records
            if r.defined and (pair_classes is None or r.pair.pair_class in pair_classes)
        ]
        return np.asarray(vals, dtype=float)

    def select(self, pair_classes: Sequence[str]) -> tuple[AgreementRecord, ...]:
        return tuple(r for r in self.records if r.pair.pair_class in pair_classes)

    @property
    def cross_classes(self) -> tuple[str, ...]:
        return tuple(sorted({r.pair.pair_class for r in self.records if r.pair.pair_class.startswith("cross")}))

    @property
    def intra_classes(self) -> tuple[str, ...]:
        return tuple(sorted({r.pair.pair_class for r in self.records if r.pair.pair_class.startswith("intra")}))


def equivalence_filter(models: Mapping[str, TrainedModel], test: Dataset) -> EquivalentSet:
    """Instances where all roster models agree exactly on the predicted label."""
    if not models:
        raise AgreementError("roster must contain at least one model")
    names = sorted(models)
    labels = np.stack([predict_label(models[name], test.features) for name in names])
    agree = np.all(labels == labels[0], axis=0)
    ids = tuple(int(i) for i in np.flatnonzero(agree))
    return EquivalentSet(instance_ids=ids, coverage_fraction=len(ids) / test.n)


def _class_stats(records: Sequence[AgreementRecord]) -> PairClassStats:
    vals = np.asarray([r.rho for r in records if r.defined], dtype=float)
    undefined = sum(1 for r in records if not r.defined)
    if vals.size == 0:
        return PairClassStats(mean=None, median=None, sd=None, count=0, undefined=undefined)
    sd = float(np.std(vals, ddof=1)) if vals.size > 1 else 0.0
    return PairClassStats(
        mean=float(vals.mean()),
        median=float(np.median(vals)),
        sd=sd,
        count=int(vals.size),
        undefined=undefined,
    )


def build_agreement_table(
    attributions: Mapping[str, Mapping[int | str, AttributionVector]],
    class_tags: Mapping[str, str],
) -> AgreementTable:
    """One Spearman record per (model pair, shared instance).

    Records are ordered canonically (model_a, model_b, instance) so every
    downstream reduction is reproducible; undefined correlations are kept as
    sentinel records and excluded from the aggregates.
    """
    names = sorted(attributions)
    if len(names) < 2:
        return AgreementTable(records=(), by_class={})
    records = []
    for i, a in enumerate(names):
        for b in names[i + 1 :]:
            pkey = PairKey(model_a=a, model_b=b, pair_class=pair_class(class_tags[a], class_tags[b]))
            shared = sorted(set(attributions[a]) & set(attributions[b]), key=str)
            for inst in shared:
                rho = spearman(attributions[a][inst].phi, attributions[b][inst].phi)
                records.append(AgreementRecord(pair=pkey, instance_id=inst, rho=rho))
    by_class = {}
    for cls in sorted({r.pair.pair_class for r in records}):
        by_class[cls] = _class_stats([r for r in records if r.pair.pair_class == cls])
    return AgreementTable(records=tuple(records), by_class=by_class)


@dataclass(frozen=True)
class LotteryRate:
    tau: float
    rate: float
    ci: Interval | None
    n_defined: int
    n_undefined: int


def lottery_rate(
    table: AgreementTable,
    tau: float,
    pair_classes: Sequence[str] | None = None,
    ci_resamples: int = 2000,
    ci_seed: int = 0,
    ci_level: float = 0.95,
) -> LotteryRate:
    """Fraction of defined records with rho < tau.

    The CI bootstraps instance-level mean indicators rather than raw records,
    so nested (pair, instance) replication does not narrow the interval.
    """
    records = table.records if pair_classes is None else table.select(pair_classes)
    defined = [r for r in records if r.defined]
    undefined = len(records) - len(defined)
    if not defined:
        return LotteryRate(tau=tau, rate=0.0, ci=None, n_defined=0, n_undefined=undefined)
    hits = np.array([1.0 if r.rho < tau else 0.0 for r in defined])
    rate = float(hits.mean())
    by_instance: dict = {}
    for r, h in zip(defined, hits):
        by_instance.setdefault(r.instance_id, []).append(h)
    inst_means = np.array([np.mean(v) for _, v in sorted(by_instance.items(), key=lambda kv: str(kv[0]))])
    ci = None
    if inst_means.size >= 2:
        ci = bootstrap_ci(inst_means, np.mean, level=ci_level, resamples=ci_resamples, seed=ci_seed)
    return LotteryRate(tau=tau, rate=rate, ci=ci, n_defined=len(defined), n_undefined=undefined)


def agreement_gap(
    table: AgreementTable,
    intra_class: str = "tree",
    inter_pair: tuple[str, str] = ("tree", "linear"),
) -> float:
    """Mean rho over intra-class records minus mean rho over the cross pair."""
    intra = table.rhos([f"intra-{intra_class}"])
    inter = table.rhos([pair_class(*inter_pair)])
    if intra.size == 0 or inter.size == 0:
        raise AgreementError("agreement gap needs defined records on both sides")
    return float(intra.mean() - inter.mean())


def top_features(phi: np.ndarray, k: int) -> tuple[int, ...]:
    """Indices of the k largest |phi|, ties broken by lower feature index."""
    phi = np.asarray(phi, dtype=float)
    order = sorted(range(phi.size), key=lambda j: (-abs(phi[j]), j))
    return tuple(order[:k])


def topk_disagreement(attr_a, attr_b, k: int = 3) -> dict[str, bool]:
    """partial: top-k sets differ at all; complete: top-k sets are disjoint."""
    phi_a = attr_a.phi if isinstance(attr_a, AttributionVector) else np.asarray(attr_a, float)
    phi_b = attr_b.phi if isinstance(attr_b, AttributionVector) else np.asarray(attr_b, float)
    if phi_a.shape != phi_b.shape:
        raise AgreementError("attribution vectors must share a dimension")
    if not 1 <= k <= phi_a.shape[0]:
        raise AgreementError(f"k must be in [1, {phi_a.shape[0]}]")
    set_a = set(top_features(phi_a, k))
    set_b = set(top_features(phi_b, k))
    return {"partial": set_a != set_b, "complete": not (set_a & set_b)}
