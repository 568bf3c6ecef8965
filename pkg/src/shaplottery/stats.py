"""Rank-sum testing, effect sizes, bootstrap intervals, and multiple-comparison
correction for the audit reports.

Only the statistics the pipeline reports; p-values are two-sided throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


class StatsError(ValueError):
    """Raised on degenerate or malformed statistical inputs."""


@dataclass(frozen=True)
class TestResult:
    u_statistic: float
    p_value: float
    n1: int
    n2: int
    method: str


@dataclass(frozen=True)
class EffectSizes:
    cohens_d: float
    cles: float


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float
    level: float
    resamples: int

    def __post_init__(self):
        if self.lo > self.hi:
            raise StatsError("interval lo must be <= hi")


def average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties replaced by the mean rank of the tied block."""
    v = np.asarray(values, dtype=float)
    order = np.argsort(v, kind="stable")
    ranks = np.empty(v.shape[0])
    i = 0
    while i < v.shape[0]:
        j = i
        while j + 1 < v.shape[0] and v[order[j + 1]] == v[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _exact_two_sided_p(a: np.ndarray, b: np.ndarray, u_obs: float) -> float:
    """Exact conditional permutation p-value, tie-aware.

    Dynamic program over the pooled sorted values counting arrangements by
    (number of a-items used, 2*U); U is accumulated in half-units so ties
    stay integral.
    """
    n1, n2 = a.size, b.size
    pooled = np.sort(np.concatenate([a, b]))
    groups = []
    i = 0
    while i < pooled.size:
        j = i
        while j + 1 < pooled.size and pooled[j + 1] == pooled[i]:
            j += 1
        groups.append(j - i + 1)
        i = j + 1
    max_u2 = 2 * n1 * n2
    counts = np.zeros((n1 + 1, max_u2 + 1), dtype=np.int64)
    counts[0, 0] = 1
    items_before = 0
    for g in groups:
        new = np.zeros_like(counts)
        for a_used in range(min(n1, items_before) + 1):
            row = counts[a_used]
            if not row.any():
                continue
            b_below = items_before - a_used
            for t in range(min(g, n1 - a_used) + 1):
                du2 = 2 * t * b_below + t * (g - t)
                mult = math.comb(g, t)
                dest = new[a_used + t]
                if du2 == 0:
                    dest += mult * row
                else:
                    dest[du2:] += mult * row[: max_u2 + 1 - du2]
        counts = new
        items_before += g
    dist = counts[n1]
    total = dist.sum()
    center = n1 * n2  # mean of 2U
    dev = abs(2 * u_obs - center)
    u2 = np.arange(max_u2 + 1)
    extreme = dist[np.abs(u2 - center) >= dev - 1e-9].sum()
    return float(min(1.0, extreme / total))


def mann_whitney_u(a: Sequence[float], b: Sequence[float]) -> TestResult:
    """U = #(a_i > b_j) + 0.5 #(a_i = b_j), two-sided p-value.

    Exact conditional enumeration when n1*n2 <= 400, otherwise a normal
    approximation with tie and continuity corrections.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise StatsError("samples must be non-empty")
    n1, n2 = a.size, b.size
    pooled = np.concatenate([a, b])
    ranks = average_ranks(pooled)
    r1 = float(ranks[:n1].sum())
    u = r1 - n1 * (n1 + 1) / 2.0
    if n1 * n2 <= 400:
        p = _exact_two_sided_p(a, b, u)
        method = "exact"
    else:
        n = n1 + n2
        _, tie_counts = np.unique(pooled, return_counts=True)
        tie_term = float(np.sum(tie_counts**3 - tie_counts)) / (n * (n - 1))
        sigma2 = n1 * n2 / 12.0 * ((n + 1) - tie_term)
        mu = n1 * n2 / 2.0
        if sigma2 <= 0:
            p = 1.0
        else:
            diff = u - mu
            cc = 0.5 if diff > 0 else (-0.5 if diff < 0 else 0.0)
            z = (diff - cc) / math.sqrt(sigma2)
            p = min(1.0, math.erfc(abs(z) / math.sqrt(2.0)))
        method = "normal"
    return TestResult(u_statistic=float(u), p_value=p, n1=n1, n2=n2, method=method)


def cohens_d(a: Sequence[float], b: Sequence[float]) -> float:
    """(mean(a) - mean(b)) / pooled SD, variances pooled by degrees of freedom."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size + b.size < 3 or a.size == 0 or b.size == 0:
        raise StatsError("need at least 3 observations across both samples")
    dof = a.size + b.size - 2
    pooled_var = ((a.size - 1) * np.var(a, ddof=1) + (b.size - 1) * np.var(b, ddof=1)) / dof
    if pooled_var <= 0:
        raise StatsError("pooled variance is zero")
    return float((a.mean() - b.mean()) / math.sqrt(pooled_var))


def cles(a: Sequence[float], b: Sequence[float]) -> float:
    """P(A > B) + 0.5 P(A = B) over all cross pairs; equals U / (n1*n2)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise StatsError("samples must be non-empty")
    pooled = np.concatenate([a, b])
    ranks = average_ranks(pooled)
    u = float(ranks[: a.size].sum()) - a.size * (a.size + 1) / 2.0
    return u / (a.size * b.size)


def effect_sizes(a: Sequence[float], b: Sequence[float]) -> EffectSizes:
    return EffectSizes(cohens_d=cohens_d(a, b), cles=cles(a, b))


def bootstrap_ci(
    samples: Sequence[float],
    statistic: Callable[[np.ndarray], float] = np.mean,
    level: float = 0.95,
    resamples: int = 10000,
    seed: int = 0,
) -> Interval:
    """Seeded percentile bootstrap interval; deterministic for a given seed."""
    samples = np.asarray(samples, dtype=float)
    if samples.size < 2:
        raise StatsError("bootstrap needs at least 2 samples")
    if not 0.0 < level < 1.0:
        raise StatsError("level must be in (0,1)")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, samples.size, size=(resamples, samples.size))
    if statistic is np.mean:
        stats = samples[idx].mean(axis=1)
    else:
        stats = np.array([float(statistic(samples[row])) for row in idx])
    alpha = 1.0 - level
    lo, hi = np.quantile(stats, [alpha / 2.0, 1.0 - alpha / 2.0])
    return Interval(lo=float(lo), hi=float(hi), level=level, resamples=resamples)


def bonferroni(p_values: Sequence[float], alpha: float) -> list[bool]:
    """flag_i = p_i < alpha / m with m = len(p_values)."""
    p_values = list(p_values)
    if not p_values:
        raise StatsError("p_values must be non-empty")
    threshold = alpha / len(p_values)
    return [p < threshold for p in p_values]


def trimmed_mean(samples: Sequence[float], trim_fraction: float) -> float:
    """Mean after dropping floor(trim*n) observations from each sorted tail."""
    samples = np.sort(np.asarray(samples, dtype=float))
    if samples.size == 0:
        raise StatsError("samples must be non-empty")
    if not 0.0 <= trim_fraction < 0.5:
        raise StatsError("trim_fraction must be in [0, 0.5)")
    k = int(math.floor(trim_fraction * samples.size))
    if samples.size - 2 * k <= 0:
        raise StatsError("trim removes every observation")
    return float(samples[k : samples.size - k].mean())
