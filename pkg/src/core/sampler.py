"""
Sum-of-trees posterior sampler.

Bayesian backfitting with BIRTH/DEATH Metropolis-Hastings tree moves, conjugate leaf
and error-variance draws, Albert-Chib latents for probit responses and the DART
Dirichlet split-probability update.
"""
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from loguru import logger
from scipy.special import gammaln, logsumexp
from scipy.stats import chi2, norm, truncnorm

from ..config import constants as C
from ..config.settings import Settings, settings as default_settings
from ..utils.dataset import Dataset
from ..utils.validators import validate_sampler_params
from .tree import (
    CutpointGrid,
    Tree,
    TreePrior,
    acceptance_from_log,
    birth_ratio_components,
    death_log_ratio,
    growable_leaves,
    propose_birth,
    propose_death,
)


@dataclass(frozen=True)
class DartConfig:
    """Dirichlet split-probability settings; lambda = theta / (theta + rho) ~ Beta(a, b)."""

    a: float = C.DEFAULT_DART_A
    b: float = C.DEFAULT_DART_B
    rho: Optional[float] = None
    theta: Optional[float] = None
    start_fraction: float = C.DEFAULT_DART_START_FRACTION

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise ValueError(f"DART Beta prior needs a, b > 0, got a={self.a}, b={self.b}")
        if self.rho is not None and self.rho <= 0:
            raise ValueError(f"DART rho must be positive, got {self.rho}")
        if self.theta is not None and self.theta <= 0:
            raise ValueError(f"DART theta must be positive, got {self.theta}")
        if not 0.0 <= self.start_fraction <= 1.0:
            raise ValueError(f"DART start_fraction must lie in [0, 1], got {self.start_fraction}")


@dataclass(frozen=True)
class SamplerConfig:
    """Hyper-parameters and iteration budget for one chain."""

    n_trees: int = C.DEFAULT_TREES
    n_burn: int = C.DEFAULT_BURN
    n_keep: int = C.DEFAULT_KEEP
    thin: int = C.DEFAULT_THIN
    gamma: float = C.DEFAULT_GAMMA
    beta: float = C.DEFAULT_BETA
    k: float = C.DEFAULT_K
    nu: float = C.DEFAULT_NU
    q: float = C.DEFAULT_Q
    cutpoints: int = C.DEFAULT_CUTPOINTS
    nodes_ratio: str = C.NODES_RATIO_CLOSED_FORM
    dart: Optional[DartConfig] = None
    seed: int = C.DEFAULT_SEED
    store_trees: bool = True
    check_invariants: bool = False

    def __post_init__(self):
        ok, error = validate_sampler_params(
            self.n_trees, self.n_burn, self.n_keep, self.thin, self.gamma, self.beta,
            self.k, self.nu, self.q, self.cutpoints, self.nodes_ratio,
        )
        if not ok:
            raise ValueError(error)
        if isinstance(self.seed, bool) or not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            raise ValueError(f"seed must be a non-negative integer, got {self.seed!r}")

    @classmethod
    def from_settings(cls, settings: Optional[Settings] = None, **overrides: Any) -> "SamplerConfig":
        """Build a config from settings sections, then apply keyword overrides."""
        settings = settings or default_settings
        s = settings.sampler_defaults()
        values: Dict[str, Any] = {
            "n_trees": s["trees"],
            "n_burn": s["burn"],
            "n_keep": s["keep"],
            "thin": s["thin"],
            "gamma": s["gamma"],
            "beta": s["beta"],
            "k": s["k"],
            "nu": s["nu"],
            "q": s["q"],
            "cutpoints": s["cutpoints"],
            "nodes_ratio": s["nodes_ratio"],
        }
        if overrides.pop("dart", False):
            values["dart"] = DartConfig(**settings.dart_defaults())
        values.update(overrides)
        return cls(**values)

    def with_updates(self, **changes: Any) -> "SamplerConfig":
        return replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class PosteriorDraw:
    """One kept sampler state."""

    trees: Tuple[Tree, ...]
    sigma: Optional[float]
    split_counts: np.ndarray
    accept_sums: np.ndarray
    split_probs: Optional[np.ndarray] = None
    fit: Optional[np.ndarray] = None


@dataclass(frozen=True, eq=False)
class Chain:
    """Kept draws of one fit plus what is needed to map predictions back to data units."""

    draws: Tuple[PosteriorDraw, ...]
    config: SamplerConfig = field(default_factory=SamplerConfig)
    fingerprint: str = ""
    kind: str = C.RESPONSE_CONTINUOUS
    columns: Tuple[str, ...] = ()
    types: Tuple[str, ...] = ()
    y_center: float = 0.0
    y_scale: float = 1.0
    offset: float = 0.0

    def __len__(self) -> int:
        return len(self.draws)

    @property
    def n_predictors(self) -> int:
        if not self.draws:
            return len(self.types)
        return int(self.draws[0].split_counts.shape[0])

    @property
    def is_probit(self) -> bool:
        return self.kind == C.RESPONSE_PROBIT

    def split_count_matrix(self) -> np.ndarray:
        """c_jk as a (K, p) array."""
        if not self.draws:
            return np.zeros((0, self.n_predictors))
        return np.array([d.split_counts for d in self.draws], dtype=float)

    def accept_sum_matrix(self) -> np.ndarray:
        """Raw acceptance-ratio sums as a (K, p) array."""
        if not self.draws:
            return np.zeros((0, self.n_predictors))
        return np.array([d.accept_sums for d in self.draws], dtype=float)

    def split_prob_matrix(self) -> Optional[np.ndarray]:
        if not self.draws or self.draws[0].split_probs is None:
            return None
        return np.array([d.split_probs for d in self.draws])

    def sigma_trace(self) -> np.ndarray:
        return np.array([np.nan if d.sigma is None else d.sigma for d in self.draws])


@dataclass(frozen=True, eq=False)
class Prediction:
    """Per-draw and posterior-mean predictions; probabilities for probit chains."""

    draws: np.ndarray
    mean: np.ndarray
    prob_draws: Optional[np.ndarray] = None
    prob_mean: Optional[np.ndarray] = None


# -- conditional draws -----------------------------------------------------------


def sigma_prior_scale(sigma_hat: float, nu: float, q: float) -> float:
    """lambda such that P(sigma^2 < sigma_hat^2) = q under nu*lambda / chi2_nu."""
    return sigma_hat**2 * chi2.ppf(1.0 - q, nu) / nu


def draw_sigma2(
    residuals: np.ndarray, nu: float, lam: float, rng: np.random.Generator
) -> float:
    """Inverse-chi-square conditional draw of the error variance."""
    ssr = float(residuals @ residuals)
    return (nu * lam + ssr) / rng.chisquare(nu + residuals.size)


def draw_latents(
    y: np.ndarray, mean: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Unit-variance normal latents truncated to (0, inf) when y=1 and (-inf, 0) when y=0."""
    positive = y > 0.5
    lower = np.where(positive, -mean, -np.inf)
    upper = np.where(positive, np.inf, -mean)
    z = mean + truncnorm.rvs(lower, upper, size=y.size, random_state=rng)
    tiny = np.finfo(float).tiny
    return np.where(positive, np.maximum(z, tiny), np.minimum(z, -tiny))


def draw_split_probs(
    counts: np.ndarray, theta: float, rng: np.random.Generator
) -> np.ndarray:
    """Dirichlet(theta/p + counts) draw computed through log-gamma variates."""
    alpha = theta / counts.size + counts
    log_g = np.log(rng.gamma(alpha + 1.0)) + np.log1p(-rng.random(counts.size)) / alpha
    s = np.exp(log_g - logsumexp(log_g))
    s = np.maximum(s, np.finfo(float).tiny)
    return s / s.sum()


def draw_theta(
    split_probs: np.ndarray,
    dart: DartConfig,
    rng: np.random.Generator,
    grid_size: int = C.DART_THETA_GRID_SIZE,
) -> float:
    """Griddy-Gibbs draw of the Dirichlet concentration."""
    p = split_probs.size
    rho = dart.rho if dart.rho is not None else float(p)
    pad = 1.0 / (2 * grid_size)
    lam = np.linspace(pad, 1.0 - pad, grid_size)
    theta = rho * lam / (1.0 - lam)
    log_s = np.log(split_probs)
    logp = (
        (dart.a - 1.0) * np.log(lam)
        + (dart.b - 1.0) * np.log1p(-lam)
        + gammaln(theta)
        - p * gammaln(theta / p)
        + theta / p * log_s.sum()
    )
    weights = np.exp(logp - logsumexp(logp))
    return float(theta[rng.choice(grid_size, p=weights / weights.sum())])


def probabilities(latent: np.ndarray) -> np.ndarray:
    """Normal CDF kept strictly inside (0, 1)."""
    return np.clip(norm.cdf(latent), np.finfo(float).tiny, np.nextafter(1.0, 0.0))


# -- sampling loop ---------------------------------------------------------------


def _update_tree(
    tree: Tree,
    rows_map: Dict[int, np.ndarray],
    residuals: np.ndarray,
    sigma2: float,
    prior: TreePrior,
    grid: CutpointGrid,
    rng: np.random.Generator,
    split_probs: Optional[np.ndarray],
    nodes_ratio: str,
) -> np.ndarray:
    """One Metropolis tree move followed by a conjugate draw of every leaf value."""
    growable = growable_leaves(tree, rows_map, grid)
    can_death = tree.n_internal > 0
    if growable and (not can_death or rng.random() < C.BIRTH_PROBABILITY):
        proposal = propose_birth(tree, rows_map, grid, rng, split_probs, growable)
        components = birth_ratio_components(
            tree, proposal, residuals, sigma2, prior, nodes_ratio=nodes_ratio
        )
        accept = acceptance_from_log(components.log_r)
        if rng.random() < accept:
            left, right = tree.grow(
                proposal.node, proposal.var, proposal.cut, proposal.cut_index, birth_ratio=accept
            )
            del rows_map[proposal.node]
            rows_map[left] = proposal.left_rows
            rows_map[right] = proposal.right_rows
    elif can_death:
        proposal = propose_death(tree, rng)
        log_r = death_log_ratio(
            tree, proposal, rows_map, residuals, sigma2, prior, growable, nodes_ratio
        )
        if rng.random() < acceptance_from_log(log_r):
            node = tree.nodes[proposal.node]
            merged = np.sort(np.concatenate((rows_map.pop(node.left), rows_map.pop(node.right))))
            tree.prune(proposal.node)
            rows_map[proposal.node] = merged

    tau2 = prior.tau**2
    fit = np.empty(residuals.size)
    for leaf in sorted(rows_map):
        rows = rows_map[leaf]
        post_var = 1.0 / (1.0 / tau2 + rows.size / sigma2)
        post_mean = post_var * float(residuals[rows].sum()) / sigma2
        mu = post_mean + math.sqrt(post_var) * rng.standard_normal()
        tree.nodes[leaf].mu = mu
        fit[rows] = mu
    return fit


def _sample(data: Dataset, cfg: SamplerConfig, kind: str) -> Chain:
    if data.p < 1:
        raise ValueError("Dataset has no predictors")
    if data.n < 2:
        raise ValueError(f"Need at least 2 observations, got {data.n}")
    rng = np.random.default_rng(cfg.seed)
    X, y = data.X, data.y
    n, p = X.shape
    M = cfg.n_trees
    grid = CutpointGrid.from_data(X, data.types, cfg.cutpoints)
    probit = kind == C.RESPONSE_PROBIT

    center, scale, offset = 0.0, 1.0, 0.0
    if probit:
        lo, hi = C.PROBIT_MEAN_CLIP
        offset = float(norm.ppf(np.clip(y.mean(), lo, hi)))
        tau = C.PROBIT_LEAF_HALF_RANGE / (cfg.k * math.sqrt(M))
        sigma2, lam = 1.0, 0.0
        target = np.zeros(n)
    else:
        y_min, y_max = float(y.min()), float(y.max())
        if y_max > y_min:
            center, scale = (y_min + y_max) / 2.0, y_max - y_min
        else:
            center = y_min
        target = (y - center) / scale
        tau = C.CONTINUOUS_LEAF_HALF_RANGE / (cfg.k * math.sqrt(M))
        sigma_hat = float(np.std(target, ddof=1))
        if sigma_hat <= 0:
            sigma_hat = 1.0
        sigma2 = sigma_hat**2
        lam = sigma_prior_scale(sigma_hat, cfg.nu, cfg.q)
    prior = TreePrior(cfg.gamma, cfg.beta, tau)

    dart = cfg.dart
    split_probs = np.full(p, 1.0 / p) if dart is not None else None
    theta = None
    dart_start = 0
    if dart is not None:
        theta = dart.theta if dart.theta is not None else (dart.rho or float(p))
        dart_start = int(dart.start_fraction * cfg.n_burn)

    trees = [Tree(p) for _ in range(M)]
    rows_maps: List[Dict[int, np.ndarray]] = [{0: np.arange(n)} for _ in range(M)]
    tree_fit = np.zeros((M, n))
    resid = target.copy()

    total_iter = cfg.n_burn + cfg.n_keep * cfg.thin
    draws: List[PosteriorDraw] = []
    logger.debug(
        f"Sampling {kind} chain: n={n}, p={p}, M={M}, iterations={total_iter}, "
        f"dart={'on' if dart else 'off'}, seed={cfg.seed}"
    )
    for it in range(total_iter):
        if probit:
            fit_total = target - resid
            z = draw_latents(y, offset + fit_total, rng)
            if cfg.check_invariants and not np.all((z > 0) == (y > 0.5)):
                raise RuntimeError(f"Latent sign violated at iteration {it}")
            target = z - offset
            resid = target - fit_total

        for m in range(M):
            partial = resid + tree_fit[m]
            new_fit = _update_tree(
                trees[m], rows_maps[m], partial, sigma2, prior, grid, rng, split_probs, cfg.nodes_ratio
            )
            resid = partial - new_fit
            tree_fit[m] = new_fit

        if cfg.check_invariants:
            drift = np.max(np.abs(target - tree_fit.sum(axis=0) - resid))
            if drift > 1e-8:
                raise RuntimeError(f"Residual bookkeeping drifted by {drift} at iteration {it}")

        if not probit:
            sigma2 = draw_sigma2(resid, cfg.nu, lam, rng)

        if dart is not None and it >= dart_start:
            counts = np.sum([t.split_counts() for t in trees], axis=0)
            split_probs = draw_split_probs(counts, theta, rng)
            if dart.theta is None:
                theta = draw_theta(split_probs, dart, rng)

        if it >= cfg.n_burn and (it - cfg.n_burn + 1) % cfg.thin == 0:
            fit_total = target - resid
            draws.append(
                PosteriorDraw(
                    trees=tuple(t.snapshot() for t in trees) if cfg.store_trees else (),
                    sigma=None if probit else math.sqrt(sigma2) * scale,
                    split_counts=np.sum([t.split_counts() for t in trees], axis=0),
                    accept_sums=np.sum([t.accept_sums() for t in trees], axis=0),
                    split_probs=None if split_probs is None else split_probs.copy(),
                    fit=offset + fit_total if probit else fit_total * scale + center,
                )
            )

    logger.debug(f"Finished {kind} chain with {len(draws)} kept draws")
    return Chain(
        draws=tuple(draws),
        config=cfg,
        fingerprint=data.fingerprint(),
        kind=kind,
        columns=data.columns,
        types=data.types,
        y_center=center,
        y_scale=scale,
        offset=offset,
    )


def fit_continuous(data: Dataset, cfg: SamplerConfig) -> Chain:
    """Fit a continuous-response sum-of-trees model."""
    return _sample(data, cfg, C.RESPONSE_CONTINUOUS)


def fit_probit(data: Dataset, cfg: SamplerConfig) -> Chain:
    """Fit a probit sum-of-trees model to a 0/1 response."""
    if not data.is_binary_response:
        raise ValueError("Probit fit needs a response with values in {0, 1}")
    return _sample(data, cfg, C.RESPONSE_PROBIT)


def fit_dart(data: Dataset, cfg: SamplerConfig, probit: Optional[bool] = None) -> Chain:
    """Fit with Dirichlet split probabilities; probit when the response is 0/1 unless told otherwise."""
    if cfg.dart is None:
        cfg = cfg.with_updates(dart=DartConfig())
    if probit is None:
        probit = data.is_binary_response
    return fit_probit(data, cfg) if probit else fit_continuous(data, cfg)


def fit(data: Dataset, cfg: SamplerConfig) -> Chain:
    """Dispatch on the response: probit for 0/1 responses, continuous otherwise."""
    if cfg.dart is not None:
        return fit_dart(data, cfg)
    return fit_probit(data, cfg) if data.is_binary_response else fit_continuous(data, cfg)


def predict(chain: Chain, X: np.ndarray) -> Prediction:
    """
    Sum-of-trees predictions for every kept draw.

    Continuous chains return values on the response scale; probit chains return the
    latent f and its normal CDF.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2 or X.shape[1] != chain.n_predictors:
        raise ValueError(f"Expected {chain.n_predictors} predictor columns, got shape {X.shape}")
    if not chain.draws:
        raise ValueError("Chain has no draws")
    if not chain.draws[0].trees:
        raise ValueError("Chain was sampled without tree snapshots")

    raw = np.array([np.sum([t.predict(X) for t in d.trees], axis=0) for d in chain.draws])
    if chain.is_probit:
        draws = chain.offset + raw
        mean = draws.mean(axis=0)
        return Prediction(draws, mean, probabilities(draws), probabilities(mean))
    draws = raw * chain.y_scale + chain.y_center
    return Prediction(draws, draws.mean(axis=0))
