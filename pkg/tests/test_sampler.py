"""
Unit tests for sampler module.
"""
import math
import pytest
import sys
from pathlib import Path

import numpy as np
from scipy.stats import chi2, chisquare, invgamma

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.config.constants import RESPONSE_CONTINUOUS, RESPONSE_PROBIT, TYPE_BINARY, TYPE_CONTINUOUS
from src.config.settings import Settings
from src.core.sampler import (
    DartConfig,
    SamplerConfig,
    draw_latents,
    draw_sigma2,
    draw_split_probs,
    draw_theta,
    fit,
    fit_continuous,
    fit_dart,
    fit_probit,
    predict,
    sigma_prior_scale,
)
from src.core.simbench import gen_scenario
from src.utils.dataset import Dataset


def _small_data(n=60, seed=0, binary=False):
    rng = np.random.default_rng(seed)
    X = rng.random((n, 3))
    f = 4.0 * (X[:, 0] > 0.5) + X[:, 1]
    if binary:
        y = (f + rng.standard_normal(n) > 2.5).astype(float)
    else:
        y = f + 0.3 * rng.standard_normal(n)
    return Dataset(X=X, y=y, types=(TYPE_CONTINUOUS,) * 3)


FAST = dict(n_trees=5, n_burn=20, n_keep=15, cutpoints=20)


class TestSamplerConfig:
    """Test sampler configuration."""

    def test_defaults(self):
        """Test default budget and priors."""
        cfg = SamplerConfig()
        assert cfg.n_trees == 200
        assert cfg.gamma == 0.95 and cfg.beta == 2.0
        assert cfg.dart is None

    def test_invalid_values(self):
        """Test invalid hyper-parameters are rejected."""
        with pytest.raises(ValueError):
            SamplerConfig(n_trees=0)
        with pytest.raises(ValueError):
            SamplerConfig(gamma=1.0)
        with pytest.raises(ValueError):
            SamplerConfig(nodes_ratio="guess")
        with pytest.raises(ValueError):
            SamplerConfig(seed=-1)

    def test_from_settings_overrides(self):
        """Test settings defaults with keyword overrides."""
        cfg = SamplerConfig.from_settings(Settings(), n_trees=7, seed=3, dart=True)
        assert cfg.n_trees == 7
        assert cfg.seed == 3
        assert isinstance(cfg.dart, DartConfig)
        assert cfg.dart.a == 0.5 and cfg.dart.b == 1.0

    def test_dart_config_validation(self):
        """Test invalid DART settings."""
        with pytest.raises(ValueError):
            DartConfig(a=0.0)
        with pytest.raises(ValueError):
            DartConfig(start_fraction=1.5)


class TestConditionalDraws:
    """Test the conjugate and latent draws."""

    def test_sigma_prior_scale_quantile(self):
        """Test P(sigma^2 < sigma_hat^2) = q under the scaled inverse chi-square prior."""
        sigma_hat, nu, q = 1.7, 3.0, 0.9
        lam = sigma_prior_scale(sigma_hat, nu, q)
        assert 1.0 - chi2.cdf(nu * lam / sigma_hat**2, nu) == pytest.approx(q)

    def test_latent_signs(self):
        """Test truncated latents always agree with the observed class."""
        rng = np.random.default_rng(1)
        y = rng.integers(0, 2, 500).astype(float)
        mean = rng.normal(0.0, 8.0, 500)
        z = draw_latents(y, mean, rng)
        assert np.all((z > 0) == (y > 0.5))

    def test_split_probs_on_simplex(self):
        """Test Dirichlet draws are positive and sum to one, even for tiny concentration."""
        rng = np.random.default_rng(2)
        for theta in (1e-6, 1.0, 50.0):
            s = draw_split_probs(np.array([0.0, 3.0, 0.0, 10.0]), theta, rng)
            assert np.all(s > 0)
            assert s.sum() == pytest.approx(1.0)

    def test_theta_draw_positive(self):
        """Test the concentration draw is positive and finite."""
        rng = np.random.default_rng(3)
        theta = draw_theta(np.array([0.7, 0.1, 0.1, 0.1]), DartConfig(), rng)
        assert 0 < theta < math.inf

    @pytest.mark.slow
    def test_sigma2_draws_follow_inverse_gamma(self):
        """Test 10^4 error-variance draws at fixed residuals fit the conjugate inverse gamma."""
        rng = np.random.default_rng(11)
        residuals = rng.normal(0.0, 0.8, 40)
        nu, lam = 3.0, 0.2
        draws = np.array([draw_sigma2(residuals, nu, lam, rng) for _ in range(10_000)])
        shape = (nu + residuals.size) / 2
        scale = (nu * lam + residuals @ residuals) / 2
        inner_edges = invgamma.ppf(np.linspace(0.05, 0.95, 19), shape, scale=scale)
        observed = np.bincount(np.searchsorted(inner_edges, draws), minlength=20)
        assert chisquare(observed).pvalue > 0.001


class TestFit:
    """Test chain fitting and prediction."""

    def setup_method(self):
        self.data = _small_data()
        self.cfg = SamplerConfig(seed=4, check_invariants=True, **FAST)

    def test_continuous_chain_shape(self):
        """Test draw count, split counts and sigma trace."""
        chain = fit_continuous(self.data, self.cfg)
        assert len(chain) == 15
        assert chain.kind == RESPONSE_CONTINUOUS
        assert chain.split_count_matrix().shape == (15, 3)
        assert np.all(chain.sigma_trace() > 0)
        for draw in chain.draws:
            assert len(draw.trees) == 5
            assert all(t.check_structure() == [] for t in draw.trees)
            assert np.all(draw.accept_sums <= draw.split_counts + 1e-12)

    def test_thinning(self):
        """Test thinning keeps n_keep draws."""
        chain = fit(self.data, self.cfg.with_updates(thin=3))
        assert len(chain) == 15

    def test_same_seed_reproducible(self):
        """Test identical seeds give bit-identical chains."""
        a = fit(self.data, self.cfg)
        b = fit(self.data, self.cfg)
        assert np.array_equal(a.split_count_matrix(), b.split_count_matrix())
        assert np.array_equal(a.sigma_trace(), b.sigma_trace())
        assert np.array_equal(predict(a, self.data.X).draws, predict(b, self.data.X).draws)

    def test_different_seed_differs(self):
        """Test a different seed changes the chain."""
        a = fit(self.data, self.cfg)
        b = fit(self.data, self.cfg.with_updates(seed=5))
        assert not np.array_equal(a.sigma_trace(), b.sigma_trace())

    def test_stored_fit_matches_prediction(self):
        """Test the stored training fit equals predictions from the stored trees."""
        chain = fit(self.data, self.cfg)
        stored = np.array([d.fit for d in chain.draws])
        assert np.allclose(predict(chain, self.data.X).draws, stored, rtol=1e-9, atol=1e-9)

    def test_constant_response(self):
        """Test a constant continuous response fits without error."""
        data = self.data.with_response(np.full(self.data.n, 2.0))
        chain = fit(data, self.cfg)
        assert np.all(np.isfinite(chain.sigma_trace()))
        assert np.allclose(predict(chain, data.X).mean, 2.0, atol=0.5)

    def test_predict_dimension_mismatch(self):
        """Test predictions reject the wrong number of columns."""
        chain = fit(self.data, self.cfg)
        with pytest.raises(ValueError):
            predict(chain, np.zeros((2, 4)))

    def test_predict_without_trees(self):
        """Test chains sampled without snapshots cannot predict."""
        chain = fit(self.data, self.cfg.with_updates(store_trees=False))
        assert chain.split_count_matrix().shape == (15, 3)
        with pytest.raises(ValueError):
            predict(chain, self.data.X)

    def test_probit_chain(self):
        """Test the probit path: probabilities in (0, 1), no sigma, latent signs checked."""
        data = _small_data(binary=True)
        chain = fit(data, self.cfg)
        assert chain.kind == RESPONSE_PROBIT
        assert all(d.sigma is None for d in chain.draws)
        prediction = predict(chain, data.X)
        assert np.all((prediction.prob_draws > 0) & (prediction.prob_draws < 1))
        assert np.all((prediction.prob_mean > 0) & (prediction.prob_mean < 1))

    def test_probit_needs_binary_response(self):
        """Test fit_probit rejects a continuous response."""
        with pytest.raises(ValueError):
            fit_probit(self.data, self.cfg)

    def test_dart_split_probs(self):
        """Test DART draws carry split probabilities on the simplex."""
        chain = fit_dart(self.data, self.cfg.with_updates(dart=DartConfig(start_fraction=0.0)))
        probs = chain.split_prob_matrix()
        assert probs.shape == (15, 3)
        assert np.allclose(probs.sum(axis=1), 1.0)

    def test_dart_fixed_theta(self):
        """Test a fixed concentration is accepted."""
        chain = fit_dart(self.data, self.cfg.with_updates(dart=DartConfig(theta=1e6)))
        assert len(chain) == 15

    def test_exact_nodes_ratio_mode(self):
        """Test the exact transition-count mode runs."""
        chain = fit(self.data, self.cfg.with_updates(nodes_ratio="exact"))
        assert len(chain) == 15

    def test_too_few_observations(self):
        """Test a single observation is rejected."""
        data = Dataset(X=np.zeros((1, 1)), y=np.zeros(1), types=(TYPE_BINARY,))
        with pytest.raises(ValueError):
            fit(data, self.cfg)


class TestSamplerStatistics:
    """Longer statistical checks of the sampler."""

    @pytest.mark.slow
    def test_sigma_recovery(self):
        """Test the posterior mean of sigma is near the generating value on Friedman data."""
        for seed in range(5):
            data = gen_scenario("CC1", 500, 50, 1.0, np.random.default_rng(seed))
            chain = fit(data, SamplerConfig(seed=seed))
            assert 0.8 <= chain.sigma_trace().mean() <= 1.3

    @pytest.mark.slow
    def test_probit_latent_invariant(self):
        """Test probit fits on a mixed-type scenario never violate the latent sign."""
        data = gen_scenario("BM1", 500, 20, 1.0, np.random.default_rng(0))
        chain = fit(data, SamplerConfig(n_trees=20, n_burn=200, n_keep=200, check_invariants=True))
        prediction = predict(chain, data.X)
        assert np.all((prediction.prob_draws > 0) & (prediction.prob_draws < 1))

    @pytest.mark.slow
    def test_dart_mass_on_signal(self):
        """Test DART split probabilities concentrate on the one predictor carrying signal."""
        for seed in range(3):
            rng = np.random.default_rng(seed)
            X = rng.random((200, 2))
            y = 10.0 * X[:, 0] + rng.standard_normal(200)
            data = Dataset(X=X, y=y, types=(TYPE_CONTINUOUS,) * 2)
            chain = fit_dart(data, SamplerConfig(n_trees=20, n_burn=500, n_keep=500, seed=seed))
            assert chain.split_prob_matrix()[:, 0].mean() > 0.8

    @pytest.mark.slow
    def test_probit_separable_accuracy(self):
        """Test thresholded probabilities reproduce y = 1{x1 > 0.5} on the training set."""
        rng = np.random.default_rng(5)
        X = rng.random((500, 2))
        y = (X[:, 0] > 0.5).astype(float)
        data = Dataset(X=X, y=y, types=(TYPE_CONTINUOUS,) * 2)
        chain = fit_probit(data, SamplerConfig(n_trees=50, n_burn=300, n_keep=300, seed=5))
        prob = predict(chain, X).prob_mean
        assert np.mean((prob > 0.5) == (y > 0.5)) >= 0.95

    @pytest.mark.slow
    def test_zero_response(self):
        """Test a response that is identically zero gives posterior means near zero."""
        X = np.random.default_rng(6).random((100, 3))
        data = Dataset(X=X, y=np.zeros(100), types=(TYPE_CONTINUOUS,) * 3)
        chain = fit_continuous(data, SamplerConfig(n_trees=50, n_burn=200, n_keep=200, seed=6))
        assert np.all(np.abs(predict(chain, X).mean) <= 0.05)
