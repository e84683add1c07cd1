"""
Leave-one-out expected log predictive density.

Pareto-smoothed importance sampling over posterior draws for Gaussian and Bernoulli
likelihoods, plus a brute-force refit estimator for small datasets. Smoothing and the
elpd sums come from arviz.
"""
import math
import warnings
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

import arviz as az
import numpy as np
from loguru import logger
from scipy.special import logsumexp
from scipy.stats import norm

from ..config import constants as C
from ..config.settings import settings as default_settings
from ..utils.dataset import Dataset
from ..utils.parallel import derive_seed, run_jobs
from .sampler import Chain, SamplerConfig, fit, predict


@dataclass(frozen=True, eq=False)
class LooResult:
    """elpd_loo with its pointwise contributions and tail diagnostics."""

    elpd_loo: float
    pointwise: np.ndarray
    pareto_k: np.ndarray
    se: float
    p_loo: float

    @property
    def n_high_k(self) -> int:
        return int(np.count_nonzero(np.isfinite(self.pareto_k) & (self.pareto_k > C.PARETO_K_WARNING)))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "elpd_loo": self.elpd_loo,
            "se": self.se,
            "p_loo": self.p_loo,
            "n_high_k": self.n_high_k,
        }


def _check_reff(reff: float) -> None:
    if not 0 < reff <= 1:
        raise ValueError(f"reff must be in (0, 1], got {reff}")


def psis_smooth(log_ratios: np.ndarray, reff: float = C.PSIS_REFF) -> Tuple[np.ndarray, float]:
    """
    Pareto-smooth one vector of importance ratios.

    Args:
        log_ratios: K log importance ratios, K >= 5
        reff: relative MCMC efficiency; the smoothed tail holds ceil(min(K/5, 3*sqrt(K/reff))) draws

    Returns:
        Tuple of (normalised smoothed weights, k_hat); k_hat is +inf when undefined
    """
    log_ratios = np.asarray(log_ratios, dtype=float).ravel()
    if log_ratios.size < C.PSIS_MIN_DRAWS:
        raise ValueError(f"Need at least {C.PSIS_MIN_DRAWS} draws, got {log_ratios.size}")
    if not np.all(np.isfinite(log_ratios)):
        raise ValueError("Log importance ratios must be finite")
    _check_reff(reff)
    log_weights, k_hat = az.psislw(log_ratios[None, :], reff=reff)
    k_hat = float(np.asarray(k_hat).ravel()[0])
    if not math.isfinite(k_hat):
        k_hat = C.PARETO_K_UNDEFINED
    return np.exp(np.asarray(log_weights)[0]), k_hat


def _raw_elpd(log_lik: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    # too few draws to fit a tail: plain importance weights
    n_obs = log_lik.shape[1]
    log_w = -log_lik - logsumexp(-log_lik, axis=0)
    return logsumexp(log_w + log_lik, axis=0), np.full(n_obs, C.PARETO_K_UNDEFINED)


def _arviz_elpd(log_lik: np.ndarray, reff: float) -> Tuple[np.ndarray, np.ndarray]:
    idata = az.from_dict(log_likelihood={"y": log_lik[None, :, :]})
    with warnings.catch_warnings():
        # high k is reported through the logger below
        warnings.simplefilter("ignore", UserWarning)
        result = az.loo(idata, pointwise=True, reff=reff, scale="log")
    pointwise = np.asarray(result.loo_i, dtype=float).ravel()
    pareto_k = np.asarray(result.pareto_k, dtype=float).ravel()
    pareto_k[~np.isfinite(pareto_k)] = C.PARETO_K_UNDEFINED
    return pointwise, pareto_k


def elpd_from_log_lik(log_lik: np.ndarray, reff: float = C.PSIS_REFF) -> LooResult:
    """PSIS-LOO from a (draws, observations) log-likelihood matrix."""
    log_lik = np.asarray(log_lik, dtype=float)
    n_draws, n_obs = log_lik.shape
    if n_draws == 0:
        raise ValueError("Need at least one posterior draw")
    _check_reff(reff)
    if n_draws < C.PSIS_MIN_DRAWS:
        pointwise, pareto_k = _raw_elpd(log_lik)
    else:
        pointwise, pareto_k = _arviz_elpd(log_lik, reff)

    high = np.count_nonzero(np.isfinite(pareto_k) & (pareto_k > C.PARETO_K_WARNING))
    if high:
        logger.warning(f"{high} of {n_obs} observations have Pareto k above {C.PARETO_K_WARNING}")
    lppd = float(np.sum(logsumexp(log_lik, axis=0) - math.log(n_draws)))
    elpd = float(pointwise.sum())
    se = float(math.sqrt(n_obs * np.var(pointwise))) if n_obs > 1 else 0.0
    return LooResult(elpd, pointwise, pareto_k, se, lppd - elpd)


def _training_fit(chain: Chain, data: Dataset) -> np.ndarray:
    if not chain.draws:
        raise ValueError("Chain has no draws")
    if chain.fingerprint == data.fingerprint() and chain.draws[0].fit is not None:
        return np.array([d.fit for d in chain.draws])
    return predict(chain, data.X).draws


def elpd_loo_gaussian(
    chain: Chain,
    data: Dataset,
    sigma_override: Optional[float] = None,
    reff: float = C.PSIS_REFF,
) -> LooResult:
    """PSIS-LOO for a continuous chain with normal likelihood N(y | f_k(x), sigma_k)."""
    if chain.is_probit:
        raise ValueError("Gaussian LOO needs a continuous chain")
    f = _training_fit(chain, data)
    if sigma_override is not None:
        if sigma_override <= 0:
            raise ValueError(f"sigma_override must be positive, got {sigma_override}")
        sigma = np.full(len(chain), float(sigma_override))
    else:
        sigma = chain.sigma_trace()
    log_lik = norm.logpdf(data.y[None, :], loc=f, scale=sigma[:, None])
    return elpd_from_log_lik(log_lik, reff)


def elpd_loo_bernoulli(chain: Chain, data: Dataset, reff: float = C.PSIS_REFF) -> LooResult:
    """PSIS-LOO for a probit chain with Bernoulli likelihood."""
    if not chain.is_probit:
        raise ValueError("Bernoulli LOO needs a probit chain")
    f = _training_fit(chain, data)
    log_lik = np.where(data.y[None, :] > 0.5, norm.logcdf(f), norm.logcdf(-f))
    return elpd_from_log_lik(log_lik, reff)


def elpd_loo(chain: Chain, data: Dataset, reff: float = C.PSIS_REFF) -> LooResult:
    """Dispatch on the chain's likelihood."""
    if chain.is_probit:
        return elpd_loo_bernoulli(chain, data, reff)
    return elpd_loo_gaussian(chain, data, reff=reff)



def _held_out_log_density(data: Dataset, cfg: SamplerConfig, i: int) -> float:
    chain = fit(data.drop_rows([i]), cfg)
    f = predict(chain, data.X[i]).draws[:, 0]
    if chain.is_probit:
        ll = norm.logcdf(f) if data.y[i] > 0.5 else norm.logcdf(-f)
    else:
        ll = norm.logpdf(data.y[i], loc=f, scale=chain.sigma_trace())
    return float(logsumexp(ll) - math.log(ll.size))


def exact_loo_oracle(
    data: Dataset,
    cfg: SamplerConfig,
    max_n: Optional[int] = None,
    n_jobs: int = 1,
) -> LooResult:
    """
    elpd_loo by refitting once per held-out observation.

    Each refit uses a seed derived from ``cfg.seed`` and the held-out index. ``max_n``
    defaults to the ``loo.exact_max_n`` setting.
    """
    if max_n is None:
        max_n = default_settings.loo_defaults()["exact_max_n"]
    if data.n < 2:
        raise ValueError("Leaving out the only observation leaves an empty training set")
    if data.n > max_n:
        raise ValueError(f"Exact LOO runs {data.n} refits; limit is n <= {max_n}")
    jobs = [
        (data, cfg.with_updates(seed=derive_seed(cfg.seed, "exact-loo", i)), i) for i in range(data.n)
    ]
    logger.info(f"Exact LOO: {data.n} refits")
    pointwise = np.array(run_jobs(_held_out_log_density, jobs, n_jobs))
    se = float(math.sqrt(data.n * np.var(pointwise)))
    return LooResult(float(pointwise.sum()), pointwise, np.full(data.n, np.nan), se, float("nan"))
