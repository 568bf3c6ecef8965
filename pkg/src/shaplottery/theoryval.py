"""Synthetic experiments that stress the structural claims behind the
agreement gap: gap measurement on fixed splits, persistence in n, interaction-
density monotonicity, the linear/tree attribution probes, and the
stochasticity control."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .agreement import (
    AgreementTable,
    EquivalentSet,
    agreement_gap,
    build_agreement_table,
    equivalence_filter,
    lottery_rate,
    pair_class,
    spearman,
)
from .attribution import (
    AttributionVector,
    BackgroundSet,
    exact_shapley,
    kernel_shap,
    linear_shap,
    linear_shap_matrix,
    model_margin_fn,
    tree_shap,
    tree_shap_matrix,
    value_interventional,
)
from .data import Dataset, SplitSpec, SyntheticSpec, generate_synthetic, split
from .models import LinearModel, ModelConfig, TrainedModel, TreeEnsemble, margin, train_logistic, train_model
from .stats import Interval, bootstrap_ci, cles, cohens_d, mann_whitney_u


class ExperimentError(RuntimeError):
    """Raised when an experiment cannot produce a result (e.g. empty
    equivalence set)."""


# ---------------------------------------------------------------------------
# Canonical DGPs and rosters
# ---------------------------------------------------------------------------

def interaction_dgp(alpha: float = 2.0, d: int = 6) -> SyntheticSpec:
    """One strong pairwise interaction plus weak additive coefficients on the
    remaining features, noiseless."""
    if d < 3:
        raise ValueError("interaction DGP needs d >= 3")
    beta = [0.0, 0.0] + [0.6, 0.5, 0.4, 0.3][: d - 2]
    beta += [0.25] * (d - len(beta))
    return SyntheticSpec(d=d, beta=tuple(beta), alpha={(0, 1): alpha}, noise_sd=0.0)


def additive_dgp(d: int = 6) -> SyntheticSpec:
    """Purely additive control: every feature carries distinct signal."""
    beta = [1.0, 0.85, 0.7, 0.55, 0.45, 0.35][:d]
    beta += [0.3] * (d - len(beta))
    return SyntheticSpec(d=d, beta=tuple(beta), alpha={}, noise_sd=0.0)


def default_gap_roster(base_seed: int = 0) -> tuple[ModelConfig, ...]:
    """Two deterministic GBTs (identical by construction), a forest, a CART,
    and two linear models: populates intra-tree, intra-linear, and cross pairs."""
    gbt_params = {"n_rounds": 100, "depth": 3, "learning_rate": 0.1, "l2_leaf": 1.0, "row_subsample": 1.0}
    return (
        ModelConfig("gbt-a", "gbt", dict(gbt_params), seed=base_seed + 1),
        ModelConfig("gbt-b", "gbt", dict(gbt_params), seed=base_seed + 2),
        ModelConfig("forest", "forest", {"n_trees": 100, "max_depth": 8, "feature_subsample": 0.6}, seed=base_seed + 3),
        ModelConfig("cart", "cart", {"max_depth": 8, "min_leaf": 2}, seed=base_seed + 4),
        ModelConfig("logistic", "logistic", {"l2": 1.0, "tol": 1e-8, "max_iter": 5000}, seed=base_seed + 5),
        ModelConfig("ridge", "ridge", {"lam": 1.0}, seed=base_seed + 6),
    )


def reliability_roster(base_seed: int = 0) -> tuple[ModelConfig, ...]:
    """Six genuinely distinct models (no duplicated deterministic GBT) for
    reliability scoring and leave-one-out validation."""
    return (
        ModelConfig("gbt-a", "gbt", {"n_rounds": 100, "depth": 3, "learning_rate": 0.1, "l2_leaf": 1.0}, seed=base_seed + 1),
        ModelConfig("gbt-b", "gbt", {"n_rounds": 150, "depth": 4, "learning_rate": 0.07, "l2_leaf": 2.0}, seed=base_seed + 2),
        ModelConfig("forest", "forest", {"n_trees": 100, "max_depth": 8, "feature_subsample": 0.6}, seed=base_seed + 3),
        ModelConfig("cart", "cart", {"max_depth": 8, "min_leaf": 2}, seed=base_seed + 4),
        ModelConfig("logistic", "logistic", {"l2": 1.0, "tol": 1e-8, "max_iter": 5000}, seed=base_seed + 5),
        ModelConfig("ridge", "ridge", {"lam": 1.0}, seed=base_seed + 6),
    )


@dataclass(frozen=True)
class ExperimentSpec:
    dgp: SyntheticSpec
    roster: tuple[ModelConfig, ...]
    seeds: tuple[int, ...] = (42, 123, 456)
    n: int = 2000
    tau: float = 0.5
    train_fraction: float = 0.8
    explain_cap: int = 150
    intra_class: str = "tree"
    inter_pair: tuple[str, str] = ("tree", "linear")
    kernel_samples: int = 1000

    def __post_init__(self):
        tags = {c.class_tag for c in self.roster}
        if self.intra_class not in tags:
            raise ValueError(f"roster has no {self.intra_class!r} models")


def default_gap_spec(alpha: float = 2.0, **overrides) -> ExperimentSpec:
    return ExperimentSpec(dgp=interaction_dgp(alpha), roster=default_gap_roster(), **overrides)


@dataclass(frozen=True)
class GapResult:
    seed: int
    rho_intra: float
    rho_inter: float
    delta: float
    lottery_rate_cross: float
    lottery_rate_intra: float
    p_value: float
    cohens_d: float
    cles: float
    equivalence_coverage: float
    n_explained: int
    delta_ci: Interval | None
    table: AgreementTable


@dataclass(frozen=True)
class SweepCurve:
    """Per-abscissa gap results (one GapResult per seed) plus a verdict.

    For persistence sweeps the verdict is last-point mean delta >= half the
    grid maximum; for density sweeps it is the Spearman correlation between
    abscissa and mean delta (None for degenerate grids).
    """

    abscissa: tuple[float, ...]
    points: tuple[tuple[GapResult, ...], ...]
    mean_deltas: tuple[float, ...]
    verdict: float | bool | None

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.abscissa, self.abscissa[1:])):
            raise ValueError("abscissa must be strictly increasing")


# ---------------------------------------------------------------------------
# Roster plumbing shared with the CLI
# ---------------------------------------------------------------------------

def train_roster(roster: Sequence[ModelConfig], train: Dataset) -> dict[str, TrainedModel]:
    names = [c.name for c in roster]
    if len(set(names)) != len(names):
        raise ValueError("roster names must be unique")
    return {c.name: train_model(c, train) for c in sorted(roster, key=lambda c: c.name)}


def attribute_roster(
    models: Mapping[str, TrainedModel],
    test: Dataset,
    instance_ids: Sequence[int],
    background: BackgroundSet | None = None,
    kernel_samples: int = 1000,
    seed: int = 0,
    linear_engine: str = "exact",
) -> dict[str, dict[int, AttributionVector]]:
    """Shapley attributions for every (model, instance).

    Tree ensembles use the exact tree engine.  Linear models use the closed
    form when linear_engine == "exact", else sampled KernelSHAP (the audit
    pipeline's configuration).  Neural models always use KernelSHAP.
    """
    ids = [int(i) for i in instance_ids]
    X = test.features[ids]
    out: dict[str, dict[int, AttributionVector]] = {}
    for name in sorted(models):
        model = models[name]
        per_inst: dict[int, AttributionVector] = {}
        if isinstance(model, TreeEnsemble):
            phi, baseline = tree_shap_matrix(model, X)
            explained = model.margin(X)
            for row, inst in enumerate(ids):
                per_inst[inst] = AttributionVector(
                    phi=phi[row], model_id=name, instance_id=inst,
                    baseline=baseline, explained_value=float(explained[row]),
                )
        elif isinstance(model, LinearModel) and linear_engine == "exact":
            phi, baseline = linear_shap_matrix(model, X)
            explained = model.margin(X)
            for row, inst in enumerate(ids):
                per_inst[inst] = AttributionVector(
                    phi=phi[row], model_id=name, instance_id=inst,
                    baseline=baseline, explained_value=float(explained[row]),
                )
        else:
            if background is None:
                raise ValueError("kernel attribution needs a background set")
            fn = model_margin_fn(model)
            for row, inst in enumerate(ids):
                vec = kernel_shap(
                    fn, X[row], background, n_samples=kernel_samples,
                    seed=[seed, inst], model_id=name, instance_id=inst,
                )
                per_inst[inst] = vec
        out[name] = per_inst
    return out


def _select_instances(equiv: EquivalentSet, cap: int, seed: int) -> list[int]:
    ids = list(equiv.instance_ids)
    if cap and len(ids) > cap:
        rng = np.random.default_rng([seed, 9151])
        ids = sorted(int(i) for i in rng.choice(ids, size=cap, replace=False))
    return ids


# ---------------------------------------------------------------------------
# Gap experiment
# ---------------------------------------------------------------------------

def run_gap_experiment(spec: ExperimentSpec, seed: int | None = None) -> GapResult:
    """One fixed split: train the roster, filter to prediction-equivalent
    instances, attribute, and summarize intra/cross agreement."""
    seed = spec.seeds[0] if seed is None else seed
    ds = generate_synthetic(spec.dgp, spec.n, seed=seed)
    train, test = split(ds, SplitSpec(seed=seed, train_fraction=spec.train_fraction))
    models = train_roster(spec.roster, train)
    class_tags = {c.name: c.class_tag for c in spec.roster}
    equiv = equivalence_filter(models, test)
    if not equiv.instance_ids:
        raise ExperimentError(f"empty equivalence set for seed {seed}")
    ids = _select_instances(equiv, spec.explain_cap, seed)
    background = BackgroundSet.from_dataset(train, max_rows=100, seed=seed)
    attrs = attribute_roster(
        models, test, ids, background=background, kernel_samples=spec.kernel_samples, seed=seed
    )
    table = build_agreement_table(attrs, class_tags)
    intra_label = f"intra-{spec.intra_class}"
    inter_label = pair_class(*spec.inter_pair)
    delta = agreement_gap(table, spec.intra_class, spec.inter_pair)
    intra = table.rhos([intra_label])
    inter = table.rhos([inter_label])
    test_result = mann_whitney_u(intra, inter)
    lr_cross = lottery_rate(table, spec.tau, [inter_label], ci_seed=seed)
    lr_intra = lottery_rate(table, spec.tau, [intra_label], ci_seed=seed)
    per_instance_delta = _per_instance_deltas(table, intra_label, inter_label)
    delta_ci = None
    if per_instance_delta.size >= 2:
        delta_ci = bootstrap_ci(per_instance_delta, np.mean, resamples=1000, seed=seed)
    return GapResult(
        seed=seed,
        rho_intra=float(intra.mean()),
        rho_inter=float(inter.mean()),
        delta=delta,
        lottery_rate_cross=lr_cross.rate,
        lottery_rate_intra=lr_intra.rate,
        p_value=test_result.p_value,
        cohens_d=cohens_d(intra, inter),
        cles=cles(intra, inter),
        equivalence_coverage=equiv.coverage_fraction,
        n_explained=len(ids),
        delta_ci=delta_ci,
        table=table,
    )


def _per_instance_deltas(table: AgreementTable, intra_label: str, inter_label: str) -> np.ndarray:
    intra_by_inst: dict = {}
    inter_by_inst: dict = {}
    for r in table.records:
        if not r.defined:
            continue
        if r.pair.pair_class == intra_label:
            intra_by_inst.setdefault(r.instance_id, []).append(r.rho)
        elif r.pair.pair_class == inter_label:
            inter_by_inst.setdefault(r.instance_id, []).append(r.rho)
    shared = sorted(set(intra_by_inst) & set(inter_by_inst), key=str)
    return np.array([np.mean(intra_by_inst[i]) - np.mean(inter_by_inst[i]) for i in shared])


def run_gap_experiments(spec: ExperimentSpec) -> list[GapResult]:
    """run_gap_experiment over every seed in the spec."""
    return [run_gap_experiment(spec, seed=s) for s in spec.seeds]


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

def run_persistence_sweep(spec: ExperimentSpec, n_grid: Sequence[int]) -> SweepCurve:
    """Gap experiment per sample size; verdict checks the gap does not decay
    below half its grid maximum at the largest n."""
    ns = sorted(int(n) for n in n_grid)
    points = []
    for n in ns:
        sub = replace(spec, n=n)
        points.append(tuple(run_gap_experiment(sub, seed=s) for s in spec.seeds))
    mean_deltas = tuple(float(np.mean([g.delta for g in pt])) for pt in points)
    verdict = bool(mean_deltas[-1] >= 0.5 * max(mean_deltas))
    return SweepCurve(abscissa=tuple(float(n) for n in ns), points=tuple(points), mean_deltas=mean_deltas, verdict=verdict)


def run_density_sweep(spec: ExperimentSpec, alpha_grid: Sequence[float]) -> SweepCurve:
    """Scale every interaction coefficient by the grid values; verdict is the
    Spearman correlation between interaction density and mean delta."""
    scales = sorted(float(a) for a in alpha_grid)
    points = []
    for scale in scales:
        sub = replace(spec, dgp=spec.dgp.scaled_alpha(scale))
        points.append(tuple(run_gap_experiment(sub, seed=s) for s in spec.seeds))
    mean_deltas = tuple(float(np.mean([g.delta for g in pt])) for pt in points)
    verdict = None
    if len(scales) >= 2:
        verdict = spearman(np.array(scales), np.array(mean_deltas))
    return SweepCurve(abscissa=tuple(scales), points=tuple(points), mean_deltas=mean_deltas, verdict=verdict)


# ---------------------------------------------------------------------------
# Attribution-formula probes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProbeResult:
    passed: bool
    detail: dict

    def __bool__(self) -> bool:
        return self.passed


def verify_linear_collapse(train: Dataset, tol: float = 1e-9, n_probes: int = 5) -> ProbeResult:
    """Exact coalition enumeration against the linear closed form.

    Trains a logistic model, evaluates the interventional value function over
    the feature-means background, and compares brute-force Shapley values to
    w_j (x_j - mean_j) at seeded probe points.
    """
    if train.d > 12:
        raise ValueError("exact enumeration probe needs d <= 12")
    model = train_logistic(train, l2=1.0, max_iter=2000, tol=1e-8)
    background = BackgroundSet(
        feature_means=model.train_feature_means,
        rows=model.train_feature_means[None, :],
        source=train.id,
    )
    rng = np.random.default_rng(20240 + train.d)
    max_diff = 0.0
    for _ in range(n_probes):
        x = rng.standard_normal(train.d)
        oracle = exact_shapley(lambda S: value_interventional(model, x, S, background), train.d)
        closed = linear_shap(model, x)
        max_diff = max(max_diff, float(np.max(np.abs(oracle.phi - closed.phi))))
    return ProbeResult(passed=max_diff <= tol, detail={"max_diff": max_diff, "tol": tol})


def verify_tree_interaction(
    train: Dataset,
    threshold: float = 1e-3,
    linear_tol: float = 1e-9,
    n_probes: int = 8,
    depth: int = 3,
) -> ProbeResult:
    """Attribution of feature 1 must move when only feature 2 moves for a
    depth>=2 tree model trained on interacting data, and must not move at all
    for the linear closed form."""
    gbt = None
    from .models import train_gbt

    gbt = train_gbt(train, n_rounds=60, depth=depth, learning_rate=0.1, l2_leaf=1.0)
    logistic = train_logistic(train, l2=1.0, max_iter=2000, tol=1e-8)
    rng = np.random.default_rng(515)
    tree_diff = 0.0
    lin_diff = 0.0
    for _ in range(n_probes):
        x_lo = rng.standard_normal(train.d)
        x_hi = x_lo.copy()
        x_lo[1], x_hi[1] = -1.0, 1.0
        tree_diff = max(tree_diff, abs(tree_shap(gbt, x_lo).phi[0] - tree_shap(gbt, x_hi).phi[0]))
        lin_diff = max(lin_diff, abs(linear_shap(logistic, x_lo).phi[0] - linear_shap(logistic, x_hi).phi[0]))
    passed = tree_diff > threshold and lin_diff <= linear_tol
    return ProbeResult(passed=passed, detail={"tree_diff": tree_diff, "linear_diff": lin_diff, "threshold": threshold})


# ---------------------------------------------------------------------------
# Stochasticity control
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StochasticityResult:
    within_variance: float
    cross_variance: float
    ratio: float | None


def stochasticity_control(
    ensemble: TreeEnsemble,
    x: np.ndarray,
    roster: Mapping[str, TrainedModel],
    repeats: int = 10,
    background: BackgroundSet | None = None,
) -> StochasticityResult:
    """Repeat tree_shap on one input (variance must be exactly zero) and
    compare against the attribution spread across the roster."""
    x = np.asarray(x, dtype=float)
    runs = np.stack([tree_shap(ensemble, x).phi for _ in range(repeats)])
    within = float(np.max(np.var(runs, axis=0)))
    vectors = []
    for name in sorted(roster):
        model = roster[name]
        if isinstance(model, TreeEnsemble):
            vectors.append(tree_shap(model, x).phi)
        elif isinstance(model, LinearModel):
            vectors.append(linear_shap(model, x).phi)
        else:
            if background is None:
                raise ValueError("kernel attribution needs a background set")
            vectors.append(kernel_shap(model_margin_fn(model), x, background, seed=0).phi)
    cross = float(np.mean(np.var(np.stack(vectors), axis=0))) if len(vectors) >= 2 else 0.0
    ratio = cross / within if within > 0 else None
    return StochasticityResult(within_variance=within, cross_variance=cross, ratio=ratio)
