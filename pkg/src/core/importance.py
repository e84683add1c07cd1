"""
Variable-importance measures computed from posterior chains.

Split-count measures (VIP, approximate VIP, within-type VIP, MPVIP) and the
acceptance-ratio measure (MI), their aggregation over repeated fits, the bound
relating VIP to its approximation, and the nested-variance diagnostics for MI.
"""
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from ..config import constants as C
from ..utils.dataset import Dataset
from ..utils.parallel import derive_seed, run_jobs
from ..utils.validators import validate_type_tags
from .sampler import Chain, SamplerConfig, fit


@dataclass(frozen=True, eq=False)
class ImportanceReport:
    """Per-predictor scores for one importance kind."""

    kind: str
    scores: np.ndarray
    type_tags: Tuple[str, ...]
    columns: Tuple[str, ...] = ()
    n_draws: int = 0
    metadata: Dict[str, Any] = field(default_factory=dict)

    def ranked(self) -> List[Tuple[str, float]]:
        """(name, score) pairs, highest score first; ties keep column order."""
        order = np.argsort(-self.scores, kind="stable")
        names = self.columns or tuple(f"x{j + 1}" for j in range(self.scores.size))
        return [(names[j], float(self.scores[j])) for j in order]

    def to_dict(self) -> Dict[str, Any]:
        names = self.columns or tuple(f"x{j + 1}" for j in range(self.scores.size))
        return {
            "kind": self.kind,
            "n_draws": self.n_draws,
            "scores": {name: float(s) for name, s in zip(names, self.scores)},
            "type_tags": list(self.type_tags),
            "metadata": self.metadata,
        }


def _counts(chain: Chain) -> np.ndarray:
    counts = chain.split_count_matrix()
    if counts.shape[0] == 0:
        raise ValueError("Chain has no draws")
    return counts


def _report(
    chain: Chain,
    kind: str,
    scores: np.ndarray,
    tags: Optional[Sequence[str]] = None,
    **metadata: Any,
) -> ImportanceReport:
    tags = tags or chain.types or tuple(C.TYPE_CONTINUOUS for _ in range(scores.size))
    return ImportanceReport(
        kind=kind,
        scores=scores,
        type_tags=tuple(tags),
        columns=tuple(chain.columns),
        n_draws=len(chain),
        metadata=dict(metadata, fingerprint=chain.fingerprint),
    )


def _draw_shares(counts: np.ndarray) -> np.ndarray:
    # a draw without any split spreads its weight evenly
    totals = counts.sum(axis=1, keepdims=True)
    p = counts.shape[1]
    safe = np.where(totals > 0, totals, 1.0)
    return np.where(totals > 0, counts / safe, 1.0 / p)


def vip(chain: Chain) -> ImportanceReport:
    """Variable inclusion proportions: per-draw split shares averaged over draws."""
    counts = _counts(chain)
    n_empty = int(np.count_nonzero(counts.sum(axis=1) == 0))
    if n_empty:
        logger.debug(f"{n_empty} draws without splits contribute 1/p to every VIP")
    return _report(chain, C.KIND_VIP, _draw_shares(counts).mean(axis=0), empty_draws=n_empty)


def vip_approx(chain: Chain) -> ImportanceReport:
    """Pooled split shares c_j. / c.. over all draws."""
    counts = _counts(chain)
    total = counts.sum()
    if total <= 0:
        raise ValueError("Chain has no splitting rules at all")
    return _report(chain, C.KIND_VIP_APPROX, counts.sum(axis=0) / total)


@dataclass(frozen=True, eq=False)
class LemmaCheck:
    """Per-predictor comparison of |approximate VIP - VIP| against its bound."""

    bound: np.ndarray
    difference: np.ndarray
    delta1: np.ndarray
    delta2: float

    @property
    def holds(self) -> np.ndarray:
        return self.difference <= self.bound + 1e-12

    @property
    def all_hold(self) -> bool:
        return bool(np.all(self.holds))


def lemma_bound_check(chain: Chain) -> LemmaCheck:
    """
    Evaluate |v~_j - v_j| <= sqrt(delta1_j) * delta2 for every predictor.

    delta1_j is the mean squared per-draw share of predictor j; delta2 is the
    coefficient of variation (population s.d. over mean) of the per-draw split totals.
    """
    counts = _counts(chain)
    totals = counts.sum(axis=1)
    if np.any(totals <= 0):
        raise ValueError("Every draw needs at least one splitting rule")
    shares = counts / totals[:, None]
    delta1 = np.mean(shares**2, axis=0)
    delta2 = float(np.std(totals) / np.mean(totals))
    difference = np.abs(counts.sum(axis=0) / totals.sum() - shares.mean(axis=0))
    check = LemmaCheck(np.sqrt(delta1) * delta2, difference, delta1, delta2)
    if not check.all_hold:
        logger.error(f"VIP approximation bound violated for predictors {np.flatnonzero(~check.holds)}")
    return check


def within_type_vip(chain: Chain, type_tags: Optional[Sequence[str]] = None) -> ImportanceReport:
    """
    VIP normalised within each predictor type.

    A type with no splits in a draw contributes zero for that draw; a draw with no
    splits at all spreads its weight evenly within each type.
    """
    counts = _counts(chain)
    tags = tuple(type_tags) if type_tags is not None else tuple(chain.types)
    ok, error = validate_type_tags(tags, counts.shape[1])
    if not ok:
        raise ValueError(error)
    tags_arr = np.array(tags)
    no_split = counts.sum(axis=1) == 0
    shares = np.zeros_like(counts)
    for tag in sorted(set(tags)):
        cols = np.flatnonzero(tags_arr == tag)
        denom = counts[:, cols].sum(axis=1, keepdims=True)
        safe = np.where(denom > 0, denom, 1.0)
        block = np.where(denom > 0, counts[:, cols] / safe, 0.0)
        block[no_split] = 1.0 / cols.size
        shares[:, cols] = block
    return _report(
        chain, C.KIND_WITHIN_TYPE_VIP, shares.mean(axis=0), tags, types_present=sorted(set(tags))
    )


def metropolis_importance(chain: Chain) -> ImportanceReport:
    """
    Metropolis importance: mean acceptance ratio per split, normalised per draw and averaged.

    Predictors without splits in a draw score zero for that draw. Draws with no
    acceptance ratios at all are left out of the average; if no draw has one, every
    score is zero.
    """
    counts = _counts(chain)
    sums = chain.accept_sum_matrix()
    safe = np.where(counts > 0, counts, 1.0)
    u = np.where(counts > 0, sums / safe, 0.0)
    row_totals = u.sum(axis=1)
    usable = row_totals > 0
    n_skipped = int(np.count_nonzero(~usable))
    if n_skipped:
        logger.warning(f"MI skips {n_skipped} of {usable.size} draws without splits")
    if not np.any(usable):
        scores = np.zeros(counts.shape[1])
    else:
        scores = (u[usable] / row_totals[usable, None]).mean(axis=0)
    return _report(chain, C.KIND_MI, scores, skipped_draws=n_skipped)


def mpvip(chain: Chain) -> ImportanceReport:
    """Marginal posterior inclusion probability: share of draws using the predictor at all."""
    counts = _counts(chain)
    return _report(chain, C.KIND_MPVIP, np.mean(counts >= 1, axis=0))


IMPORTANCE_FUNCTIONS = {
    C.KIND_VIP: vip,
    C.KIND_VIP_APPROX: vip_approx,
    C.KIND_WITHIN_TYPE_VIP: within_type_vip,
    C.KIND_MI: metropolis_importance,
    C.KIND_MPVIP: mpvip,
}


def importance(chain: Chain, kind: str) -> ImportanceReport:
    """Compute one importance kind by name."""
    func = IMPORTANCE_FUNCTIONS.get(kind)
    if func is None:
        raise ValueError(f"Unknown importance kind {kind!r}")
    return func(chain)


def aggregate_scores(scores: np.ndarray, kind: str) -> np.ndarray:
    """Combine (fits, p) scores from repeated fits: median for MI, mean otherwise."""
    scores = np.atleast_2d(np.asarray(scores, dtype=float))
    if kind == C.KIND_MI:
        return np.median(scores, axis=0)
    return scores.mean(axis=0)


def aggregate_importance(reports: Sequence[ImportanceReport]) -> ImportanceReport:
    """Combine reports of one kind from repeated fits of the same data."""
    if not reports:
        raise ValueError("No reports to aggregate")
    kinds = {r.kind for r in reports}
    if len(kinds) != 1:
        raise ValueError(f"Cannot aggregate mixed kinds {sorted(kinds)}")
    kind = kinds.pop()
    first = reports[0]
    return ImportanceReport(
        kind=kind,
        scores=aggregate_scores(np.array([r.scores for r in reports]), kind),
        type_tags=first.type_tags,
        columns=first.columns,
        n_draws=sum(r.n_draws for r in reports),
        metadata={"n_fits": len(reports), "aggregate": "median" if kind == C.KIND_MI else "mean"},
    )


@dataclass(frozen=True, eq=False)
class NestedVariances:
    """Within-fit, across-dataset and across-predictor sample variances of MI."""

    within: np.ndarray
    across_datasets: np.ndarray
    across_predictors: float


def nested_variances(mi_tensor: np.ndarray) -> NestedVariances:
    """
    Three nested sample variances of MI scores indexed (dataset i, predictor j, repetition k).

    within[i, j]: variance over repetitions; across_datasets[j]: variance over datasets of
    the per-dataset means; across_predictors: variance over predictors of the per-predictor
    grand means. All use count-1 divisors.
    """
    v = np.asarray(mi_tensor, dtype=float)
    if v.ndim != 3:
        raise ValueError(f"Expected a 3-dimensional tensor, got shape {v.shape}")
    n_data, n_pred, n_rep = v.shape
    if n_data < 2 or n_rep < 2 or n_pred < 2:
        raise ValueError(f"Need at least 2 datasets, predictors and repetitions, got {v.shape}")
    within = v.var(axis=2, ddof=1)
    dataset_means = v.mean(axis=2)
    across_datasets = dataset_means.var(axis=0, ddof=1)
    predictor_means = v.mean(axis=(0, 2))
    return NestedVariances(within, across_datasets, float(predictor_means.var(ddof=1)))


def _null_mi_job(data: Dataset, cfg: SamplerConfig, permutation: np.ndarray) -> np.ndarray:
    return metropolis_importance(fit(data.with_response(data.y[permutation]), cfg)).scores


def null_mi_experiment(
    data: Dataset,
    n_datasets: int,
    n_reps: int,
    cfg: SamplerConfig,
    n_jobs: int = 1,
) -> np.ndarray:
    """
    MI tensor over permuted-response datasets and repeated fits.

    Returns:
        Array of shape (n_datasets, p, n_reps) suitable for nested_variances
    """
    if n_datasets < 2 or n_reps < 2:
        raise ValueError("Need at least 2 null datasets and 2 repetitions")
    rng = np.random.default_rng(derive_seed(cfg.seed, "null-datasets"))
    permutations = [rng.permutation(data.n) for _ in range(n_datasets)]
    jobs = [
        (data, cfg.with_updates(seed=derive_seed(cfg.seed, "null-mi", i, k), store_trees=False), permutations[i])
        for i in range(n_datasets)
        for k in range(n_reps)
    ]
    logger.info(f"Null MI experiment: {n_datasets} datasets x {n_reps} repetitions")
    scores = run_jobs(_null_mi_job, jobs, n_jobs)
    return np.array(scores).reshape(n_datasets, n_reps, data.p).transpose(0, 2, 1)
