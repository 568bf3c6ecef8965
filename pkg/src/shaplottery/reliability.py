"""Per-instance explanation reliability: R(x), zone classification, and
leave-one-out validation of the zone thresholds."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .attribution import AttributionVector
from .agreement import AgreementError, spearman

HIGH_THRESHOLD = 0.7
LOW_THRESHOLD = 0.5
ZONES = ("high", "moderate", "low")


@dataclass(frozen=True)
class ReliabilityResult:
    instance_id: int | str
    r: float
    zone: str
    k: int
    undefined_pairs: int


@dataclass(frozen=True)
class LooReport:
    """Held-out agreement frequencies per reliability zone.

    Zone counts are per instance (an instance's zone comes from the mean of
    its leave-one-out reliability scores), so counts sum to the number of
    scored instances.
    """

    zone_counts: dict[str, int]
    zone_agreement: dict[str, float | None]
    agreement_tau: float
    k: int
    n_instances: int


def classify_zone(r: float) -> str:
    """high above 0.7, low below 0.5; both boundary values are moderate."""
    if r > HIGH_THRESHOLD:
        return "high"
    if r < LOW_THRESHOLD:
        return "low"
    return "moderate"


def reliability_score(
    attrs: Sequence[AttributionVector], instance_id: int | str | None = None
) -> ReliabilityResult:
    """R(x) = mean pairwise Spearman correlation across the roster.

    k < 2 returns R = 1.0 (a lone model trivially agrees with itself).
    Undefined pairs are excluded from the mean and counted; if every pair is
    undefined, R = 0.0 (no rank evidence, treated as unreliable).
    """
    k = len(attrs)
    if k == 0:
        raise AgreementError("need at least one attribution vector")
    inst = attrs[0].instance_id if instance_id is None else instance_id
    d = attrs[0].d
    for a in attrs:
        if a.d != d:
            raise AgreementError("attribution vectors must share a dimension")
    if k < 2:
        return ReliabilityResult(instance_id=inst, r=1.0, zone=classify_zone(1.0), k=k, undefined_pairs=0)
    vals = []
    undefined = 0
    for i in range(k):
        for j in range(i + 1, k):
            rho = spearman(attrs[i].phi, attrs[j].phi)
            if rho is None:
                undefined += 1
            else:
                vals.append(rho)
    r = float(np.mean(vals)) if vals else 0.0
    return ReliabilityResult(instance_id=inst, r=r, zone=classify_zone(r), k=k, undefined_pairs=undefined)


def _heldout_agreement(held: AttributionVector, rest: Sequence[AttributionVector], tau: float) -> bool:
    """Held-out model agrees when its mean correlation with the rest >= tau."""
    vals = [rho for other in rest if (rho := spearman(held.phi, other.phi)) is not None]
    if not vals:
        return False
    return float(np.mean(vals)) >= tau


def loo_validate(
    attrs_by_instance: Mapping[int | str, Sequence[AttributionVector]],
    agreement_tau: float = 0.5,
) -> LooReport:
    """Leave-one-out zone validation.

    For each instance and each held-out model: score the remaining k-1
    attributions, then test whether the held-out model agrees with them.
    The instance's zone is classified from its mean leave-one-out R.
    """
    if not attrs_by_instance:
        raise AgreementError("no instances to validate")
    ks = {len(v) for v in attrs_by_instance.values()}
    if len(ks) != 1:
        raise AgreementError("all instances must carry the same roster size")
    k = ks.pop()
    if k < 3:
        raise AgreementError("leave-one-out validation needs k >= 3 models")
    zone_counts = {z: 0 for z in ZONES}
    zone_hits: dict[str, list[float]] = {z: [] for z in ZONES}
    for inst in sorted(attrs_by_instance, key=str):
        attrs = list(attrs_by_instance[inst])
        rs, agrees = [], []
        for m in range(k):
            rest = attrs[:m] + attrs[m + 1 :]
            rs.append(reliability_score(rest, instance_id=inst).r)
            agrees.append(1.0 if _heldout_agreement(attrs[m], rest, agreement_tau) else 0.0)
        zone = classify_zone(float(np.mean(rs)))
        zone_counts[zone] += 1
        zone_hits[zone].append(float(np.mean(agrees)))
    zone_agreement = {
        z: (float(np.mean(h)) if h else None) for z, h in zone_hits.items()
    }
    return LooReport(
        zone_counts=zone_counts,
        zone_agreement=zone_agreement,
        agreement_tau=agreement_tau,
        k=k,
        n_instances=len(attrs_by_instance),
    )
