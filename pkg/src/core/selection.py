"""
Variable-selection procedures built on the sum-of-trees sampler.

- permutation-null thresholds for VIP, within-type VIP and MI
- backward elimination scored on a held-out split and picked by elpd_loo
- DART median-probability model
- ABC Bayesian forest over random predictor subsets
"""
import math
import re
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy.stats import norm

from ..config import constants as C
from ..config.settings import Settings, settings as default_settings
from ..utils.dataset import Dataset, split_train_test
from ..utils.parallel import derive_seed, run_jobs
from ..utils.validators import validate_positive_int, validate_probability
from .importance import aggregate_scores, importance, mpvip
from .loo import elpd_loo
from .sampler import SamplerConfig, fit, fit_dart, predict


@dataclass(frozen=True)
class PredictorDecision:
    """Selection outcome for one predictor."""

    name: str
    index: int
    score: float
    threshold: Optional[float]
    selected: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "index": self.index,
            "score": self.score,
            "threshold": self.threshold,
            "selected": self.selected,
        }


@dataclass(frozen=True)
class WinnerModel:
    """Best model of one backward step."""

    step: int
    predictors: Tuple[int, ...]
    dropped: Optional[int]
    test_error: float
    elpd_loo: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "step": self.step,
            "predictors": list(self.predictors),
            "dropped": self.dropped,
            "test_error": self.test_error,
            "elpd_loo": self.elpd_loo,
        }


@dataclass(eq=False)
class SelectionReport:
    """Per-predictor decisions plus the configuration and diagnostics of the run."""

    method: str
    predictors: List[PredictorDecision]
    config: Dict[str, Any] = field(default_factory=dict)
    metadata: Dict[str, Any] = field(default_factory=dict)
    winner_trace: List[WinnerModel] = field(default_factory=list)
    null_scores: Optional[np.ndarray] = None

    @property
    def selected_indices(self) -> List[int]:
        return [d.index for d in self.predictors if d.selected]

    @property
    def selected_names(self) -> List[str]:
        return [d.name for d in self.predictors if d.selected]

    def to_dict(self) -> Dict[str, Any]:
        out = {
            "method": self.method,
            "predictors": [d.to_dict() for d in self.predictors],
            "selected": self.selected_names,
            "config": self.config,
            "metadata": self.metadata,
        }
        if self.winner_trace:
            out["winner_trace"] = [w.to_dict() for w in self.winner_trace]
        return out


def _raise_if_invalid(result: Tuple[bool, Optional[str]]) -> None:
    ok, error = result
    if not ok:
        raise ValueError(error)


def _decisions(
    data: Dataset,
    scores: np.ndarray,
    thresholds: Optional[np.ndarray],
    selected: np.ndarray,
) -> List[PredictorDecision]:
    return [
        PredictorDecision(
            name=data.columns[j],
            index=j,
            score=float(scores[j]),
            threshold=None if thresholds is None else float(thresholds[j]),
            selected=bool(selected[j]),
        )
        for j in range(data.p)
    ]


# -- permutation null --------------------------------------------------------------

_PERMUTATION_METHODS = {kind: method for method, kind in C.PERMUTATION_METHOD_KINDS.items()}


def null_threshold(null_scores: np.ndarray, alpha: float) -> np.ndarray:
    """Per-predictor ceil((1 - alpha) L)-th order statistic of L null scores."""
    null_scores = np.atleast_2d(np.asarray(null_scores, dtype=float))
    n_null = null_scores.shape[0]
    rank = max(1, math.ceil(round((1.0 - alpha) * n_null, 9)))
    return np.sort(null_scores, axis=0)[rank - 1]


def _importance_job(
    data: Dataset, cfg: SamplerConfig, kinds: Sequence[str], permutation: Optional[np.ndarray]
) -> Dict[str, np.ndarray]:
    if permutation is not None:
        data = data.with_response(data.y[permutation])
    chain = fit(data, cfg)
    return {kind: importance(chain, kind).scores for kind in kinds}


def permutation_select_many(
    data: Dataset,
    kinds: Sequence[str],
    L: int = C.DEFAULT_PERMUTATION_L,
    L_rep: int = C.DEFAULT_PERMUTATION_L_REP,
    alpha: float = C.DEFAULT_ALPHA,
    cfg: Optional[SamplerConfig] = None,
    n_jobs: int = 1,
) -> Dict[str, SelectionReport]:
    """
    Permutation-null selection for several importance kinds sharing the same fits.

    L_rep fits on the observed data give the aggregated score (mean, or median for MI);
    L fits on permuted responses give the null distribution per predictor. A predictor
    is selected when its score is strictly above its null threshold.
    """
    cfg = cfg or SamplerConfig(n_trees=C.DEFAULT_PERMUTATION_TREES)
    _raise_if_invalid(validate_probability(alpha, "alpha"))
    _raise_if_invalid(validate_positive_int(L, "L"))
    _raise_if_invalid(validate_positive_int(L_rep, "L_rep"))
    kinds = list(kinds)
    for kind in kinds:
        if kind not in C.PERMUTATION_KINDS:
            raise ValueError(f"Permutation selection supports {', '.join(C.PERMUTATION_KINDS)}, got {kind!r}")

    rng = np.random.default_rng(derive_seed(cfg.seed, "permutation-null"))
    permutations = [rng.permutation(data.n) for _ in range(L)]
    light = cfg.with_updates(store_trees=False)
    jobs = [
        (data, light.with_updates(seed=derive_seed(cfg.seed, "observed", r)), kinds, None)
        for r in range(L_rep)
    ] + [
        (data, light.with_updates(seed=derive_seed(cfg.seed, "null", l)), kinds, permutations[l])
        for l in range(L)
    ]
    logger.info(f"Permutation selection: {L_rep} observed fits, {L} null fits, kinds={kinds}")
    results = run_jobs(_importance_job, jobs, n_jobs)

    single_type = len(set(data.types)) < 2
    reports = {}
    for kind in kinds:
        observed = aggregate_scores(np.array([r[kind] for r in results[:L_rep]]), kind)
        null = np.array([r[kind] for r in results[L_rep:]])
        thresholds = null_threshold(null, alpha)
        flags = []
        if kind == C.KIND_WITHIN_TYPE_VIP and single_type:
            flags.append("single_type")
            logger.warning("Within-type VIP requested but only one predictor type is present")
        reports[kind] = SelectionReport(
            method=_PERMUTATION_METHODS[kind],
            predictors=_decisions(data, observed, thresholds, observed > thresholds),
            config={"L": L, "L_rep": L_rep, "alpha": alpha, "importance": kind, "sampler": cfg.to_dict()},
            metadata={
                "seed": cfg.seed,
                "flags": flags,
                "aggregate": "median" if kind == C.KIND_MI else "mean",
            },
            null_scores=null,
        )
    return reports


def permutation_select(
    data: Dataset,
    importance_kind: str,
    L: int = C.DEFAULT_PERMUTATION_L,
    L_rep: int = C.DEFAULT_PERMUTATION_L_REP,
    alpha: float = C.DEFAULT_ALPHA,
    cfg: Optional[SamplerConfig] = None,
    n_jobs: int = 1,
) -> SelectionReport:
    """Permutation-null selection for one importance kind."""
    return permutation_select_many(data, [importance_kind], L, L_rep, alpha, cfg, n_jobs)[importance_kind]


# -- backward elimination ----------------------------------------------------------


def held_out_error(chain, test: Dataset, cols: Sequence[int]) -> float:
    """Held-out MSE for continuous chains, mean log loss for probit chains."""
    prediction = predict(chain, test.X[:, list(cols)])
    if chain.is_probit:
        prob = prediction.prob_mean
        log_p = np.where(test.y > 0.5, np.log(prob), np.log1p(-prob))
        return float(-np.mean(log_p))
    return float(np.mean((test.y - prediction.mean) ** 2))


def _backward_job(
    train: Dataset, test: Dataset, cfg: SamplerConfig, cols: Tuple[int, ...], reff: float
) -> Tuple[float, float]:
    subset = train.subset_columns(cols)
    chain = fit(subset, cfg)
    return held_out_error(chain, test, cols), elpd_loo(chain, subset, reff).elpd_loo


def backward_select(
    data: Dataset,
    split_ratio: float = C.DEFAULT_SPLIT_RATIO,
    cfg: Optional[SamplerConfig] = None,
    n_jobs: int = 1,
    reff: float = C.PSIS_REFF,
) -> SelectionReport:
    """
    Backward elimination with a held-out filter and an elpd_loo filter.

    Each step drops the predictor whose removal gives the lowest test error (ties drop
    the smallest index); the step winners are then compared by training-set elpd_loo.
    """
    cfg = cfg or SamplerConfig(n_trees=C.DEFAULT_BACKWARD_TREES)
    _raise_if_invalid(validate_probability(split_ratio, "split_ratio"))
    if data.p < 2:
        raise ValueError(f"Backward selection needs at least 2 predictors, got {data.p}")
    rng = np.random.default_rng(derive_seed(cfg.seed, "backward-split"))
    train, test = split_train_test(data, split_ratio, rng)

    current = tuple(range(data.p))
    first_cfg = cfg.with_updates(seed=derive_seed(cfg.seed, "backward", 1))
    error, elpd = _backward_job(train, test, first_cfg, current, reff)
    trace = [WinnerModel(1, current, None, error, elpd)]
    dropped_at = {}
    for step in range(2, data.p + 1):
        candidates = [tuple(j for j in current if j != t) for t in current]
        jobs = [
            (train, test, cfg.with_updates(seed=derive_seed(cfg.seed, "backward", step, t)), cols, reff)
            for t, cols in zip(current, candidates)
        ]
        results = run_jobs(_backward_job, jobs, n_jobs)
        errors = np.array([r[0] for r in results])
        best = int(np.argmin(errors))
        dropped = current[best]
        dropped_at[dropped] = step
        current = candidates[best]
        trace.append(WinnerModel(step, current, dropped, float(errors[best]), results[best][1]))
        logger.debug(f"Backward step {step}: dropped {data.columns[dropped]}, error={errors[best]:.4g}")

    winner = max(trace, key=lambda w: w.elpd_loo)
    chosen = np.zeros(data.p, dtype=bool)
    chosen[list(winner.predictors)] = True
    # score: share of steps a predictor survived
    survival = np.array([(dropped_at.get(j, data.p + 1) - 1) / data.p for j in range(data.p)])
    return SelectionReport(
        method=C.METHOD_BACKWARD,
        predictors=_decisions(data, survival, None, chosen),
        config={"split_ratio": split_ratio, "reff": reff, "sampler": cfg.to_dict()},
        metadata={
            "seed": cfg.seed,
            "winner_step": winner.step,
            "n_train": train.n,
            "n_test": test.n,
            "criterion": "mll" if data.is_binary_response else "mse",
        },
        winner_trace=trace,
    )


# -- DART --------------------------------------------------------------------------


def dart_select(
    data: Dataset,
    cfg: Optional[SamplerConfig] = None,
    threshold: float = C.DEFAULT_MPVIP_THRESHOLD,
) -> SelectionReport:
    """Median probability model: predictors used in at least ``threshold`` of DART draws."""
    cfg = cfg or SamplerConfig(n_trees=C.DEFAULT_DART_TREES)
    _raise_if_invalid(validate_probability(threshold, "threshold", closed=True))
    chain = fit_dart(data, cfg)
    pi = mpvip(chain).scores
    selected = (pi >= threshold) & (pi > 0)
    thresholds = np.full(data.p, threshold)
    return SelectionReport(
        method=C.METHOD_DART,
        predictors=_decisions(data, pi, thresholds, selected),
        config={"threshold": threshold, "sampler": chain.config.to_dict()},
        metadata={"seed": cfg.seed, "mean_split_probs": chain.split_prob_matrix().mean(axis=0).tolist()},
    )


# -- ABC Bayesian forest ----------------------------------------------------------


def _abc_job(
    data: Dataset,
    cfg: SamplerConfig,
    split_ratio: float,
    split_seed: int,
    cols: Tuple[int, ...],
) -> Tuple[float, np.ndarray]:
    train, test = split_train_test(data, split_ratio, np.random.default_rng(split_seed))
    chain = fit(train.subset_columns(cols), cfg)
    prediction = predict(chain, test.X[:, list(cols)])
    f = prediction.draws[0]
    if chain.is_probit:
        error = float(-np.mean(np.where(test.y > 0.5, norm.logcdf(f), norm.logcdf(-f))))
    else:
        error = float(np.sqrt(np.mean((test.y - f) ** 2)))
    used = np.zeros(data.p, dtype=bool)
    used[list(cols)] = chain.draws[0].split_counts >= 1
    return error, used


def abc_forest_select(
    data: Dataset,
    n_abc: int = C.DEFAULT_ABC_ITERATIONS,
    keep_frac: float = C.DEFAULT_ABC_KEEP_FRACTION,
    split_ratio: float = C.DEFAULT_ABC_SPLIT_RATIO,
    threshold: float = C.DEFAULT_ABC_THRESHOLD,
    cfg: Optional[SamplerConfig] = None,
    n_burn: int = C.DEFAULT_ABC_BURN,
    n_jobs: int = 1,
) -> SelectionReport:
    """
    ABC over predictor subsets drawn from a beta-binomial prior.

    Every iteration draws a fresh split and subset, fits on the training part keeping the
    single draw after ``n_burn`` burn-in sweeps and scores it on the test part. The best
    ``floor(keep_frac * n_abc)`` iterations are kept; a predictor's score is the share of
    kept posterior samples that split on it.
    """
    cfg = cfg or SamplerConfig(n_trees=C.DEFAULT_ABC_TREES)
    _raise_if_invalid(validate_positive_int(n_abc, "n_abc", 10))
    _raise_if_invalid(validate_probability(keep_frac, "keep_frac"))
    _raise_if_invalid(validate_probability(split_ratio, "split_ratio"))
    _raise_if_invalid(validate_probability(threshold, "threshold"))
    n_kept = int(math.floor(keep_frac * n_abc))
    if n_kept < 1:
        raise ValueError(f"keep_frac={keep_frac} keeps no iteration out of {n_abc}")

    rng = np.random.default_rng(derive_seed(cfg.seed, "abc-subsets"))
    subsets = []
    resampled = 0
    for _ in range(n_abc):
        while True:
            theta = rng.beta(1.0, 1.0)
            mask = rng.random(data.p) < theta
            if mask.any():
                break
            resampled += 1
        subsets.append(mask)
    short = cfg.with_updates(n_burn=n_burn, n_keep=1, thin=1)
    jobs = [
        (
            data,
            short.with_updates(seed=derive_seed(cfg.seed, "abc-fit", i)),
            split_ratio,
            derive_seed(cfg.seed, "abc-split", i),
            tuple(int(j) for j in np.flatnonzero(mask)),
        )
        for i, mask in enumerate(subsets)
    ]
    logger.info(f"ABC forest: {n_abc} iterations, keeping {n_kept}")
    results = run_jobs(_abc_job, jobs, n_jobs)

    errors = np.array([r[0] for r in results])
    kept = np.argsort(errors, kind="stable")[:n_kept]
    pi_samples = np.mean([results[i][1] for i in kept], axis=0)
    pi_subsets = np.mean([subsets[i] for i in kept], axis=0)
    thresholds = np.full(data.p, threshold)
    return SelectionReport(
        method=C.METHOD_ABC,
        predictors=_decisions(data, pi_samples, thresholds, pi_samples >= threshold),
        config={
            "n_abc": n_abc,
            "keep_frac": keep_frac,
            "split_ratio": split_ratio,
            "threshold": threshold,
            "n_burn": n_burn,
            "sampler": short.to_dict(),
        },
        metadata={
            "seed": cfg.seed,
            "n_kept": n_kept,
            "empty_subsets_resampled": resampled,
            "pi_from_subsets": dict(zip(data.columns, pi_subsets.tolist())),
            "kept_errors": errors[kept].tolist(),
            "error_metric": "mll" if data.is_binary_response else "rmse",
        },
    )


# -- dispatch ----------------------------------------------------------------------

_METHOD_PATTERN = re.compile(
    r"^(?P<base>permute-vip|permute-wtvip|permute-mi|backward|dart|abc)"
    r"(?:-(?P<trees>\d+))?(?:-(?P<threshold>\d*\.?\d+))?$"
)


def parse_method(name: str) -> Tuple[str, Dict[str, Any]]:
    """
    Split a method name into its base and inline parameters.

    ``dart-200`` sets 200 trees; ``abc-10-0.50`` sets 10 trees and threshold 0.5.
    """
    match = _METHOD_PATTERN.match((name or "").strip().lower())
    if not match:
        raise ValueError(f"Unknown selection method {name!r}; choose from {', '.join(C.SELECTION_METHODS)}")
    base = match.group("base")
    params: Dict[str, Any] = {}
    if match.group("trees"):
        if base not in (C.METHOD_DART, C.METHOD_ABC):
            raise ValueError(f"Method {base} takes no inline parameters")
        params["trees"] = int(match.group("trees"))
    if match.group("threshold"):
        if base != C.METHOD_ABC:
            raise ValueError(f"Only abc takes an inline threshold, got {name!r}")
        params["threshold"] = float(match.group("threshold"))
    return base, params


def run_selection(
    method: str,
    data: Dataset,
    seed: int = C.DEFAULT_SEED,
    n_jobs: int = 1,
    settings: Optional[Settings] = None,
    sampler_overrides: Optional[Dict[str, Any]] = None,
    **options: Any,
) -> SelectionReport:
    """
    Run a selection method by name with defaults from settings.

    ``options`` override method parameters (alpha, L, L_rep, split_ratio, threshold,
    n_abc, keep_frac, trees); ``sampler_overrides`` override SamplerConfig fields.
    """
    settings = settings or default_settings
    base, inline = parse_method(method)
    options = {k: v for k, v in options.items() if v is not None}
    options = {**inline, **options}
    overrides = dict(sampler_overrides or {})

    def config(section: Dict[str, Any], **extra: Any) -> SamplerConfig:
        trees = options.pop("trees", overrides.pop("n_trees", section["trees"]))
        return SamplerConfig.from_settings(settings, n_trees=trees, seed=seed, **{**extra, **overrides})

    if base in C.PERMUTATION_METHOD_KINDS:
        section = settings.permutation_defaults()
        cfg = config(section)
        report = permutation_select(
            data,
            C.PERMUTATION_METHOD_KINDS[base],
            L=options.get("L", section["L"]),
            L_rep=options.get("L_rep", section["L_rep"]),
            alpha=options.get("alpha", section["alpha"]),
            cfg=cfg,
            n_jobs=n_jobs,
        )
        report.method = base
        return report
    if base == C.METHOD_BACKWARD:
        section = settings.backward_defaults()
        cfg = config(section)
        return backward_select(
            data,
            options.get("split_ratio", section["split_ratio"]),
            cfg,
            n_jobs,
            reff=settings.loo_defaults()["reff"],
        )
    if base == C.METHOD_DART:
        section = settings.dart_select_defaults()
        cfg = config(section, dart=True)
        report = dart_select(data, cfg, options.get("threshold", section["threshold"]))
        report.method = method
        return report

    section = settings.abc_defaults()
    cfg = config(section)
    report = abc_forest_select(
        data,
        n_abc=options.get("n_abc", section["n_abc"]),
        keep_frac=options.get("keep_frac", section["keep_frac"]),
        split_ratio=options.get("split_ratio", section["split_ratio"]),
        threshold=options.get("threshold", section["threshold"]),
        cfg=cfg,
        n_burn=overrides.get("n_burn", section["burn"]),
        n_jobs=n_jobs,
    )
    report.method = method
    return report
