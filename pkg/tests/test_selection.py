"""
Unit tests for selection module.
"""
import pytest
import sys
from pathlib import Path

import numpy as np

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.config.constants import (
    KIND_MI,
    KIND_VIP,
    KIND_WITHIN_TYPE_VIP,
    METHOD_ABC,
    METHOD_BACKWARD,
    METHOD_DART,
    TYPE_CONTINUOUS,
)
from src.config.settings import Settings
from src.core.sampler import SamplerConfig
from src.core.selection import (
    abc_forest_select,
    backward_select,
    dart_select,
    null_threshold,
    parse_method,
    permutation_select,
    permutation_select_many,
    run_selection,
)
from src.core.simbench import gen_scenario
from src.utils.dataset import Dataset


def _signal_data(n=40, p=3, seed=0, binary=False):
    rng = np.random.default_rng(seed)
    X = rng.random((n, p))
    f = 5.0 * X[:, 0]
    y = (f + rng.standard_normal(n) > 2.5).astype(float) if binary else f + 0.3 * rng.standard_normal(n)
    return Dataset(X=X, y=y, types=(TYPE_CONTINUOUS,) * p)


TINY = SamplerConfig(n_trees=4, n_burn=10, n_keep=8, cutpoints=10, seed=1)


class TestNullThreshold:
    """Test the order-statistic threshold."""

    def test_order_statistic(self):
        """Test the ceil((1 - alpha) L)-th order statistic."""
        null = np.arange(1.0, 11.0)[:, None]
        assert null_threshold(null, 0.05)[0] == 10.0
        assert null_threshold(null, 0.5)[0] == 5.0
        assert null_threshold(null, 0.999)[0] == 1.0

    def test_exact_multiple(self):
        """Test (1 - alpha) L landing on an integer picks that order statistic."""
        null = np.arange(1.0, 101.0)[:, None]
        assert null_threshold(null, 0.05)[0] == 95.0

    def test_monotone_in_alpha(self):
        """Test a smaller alpha never lowers any threshold."""
        null = np.random.default_rng(0).random((100, 6))
        previous = null_threshold(null, 0.5)
        for alpha in (0.2, 0.1, 0.05, 0.01):
            current = null_threshold(null, alpha)
            assert np.all(current >= previous)
            previous = current


class TestParseMethod:
    """Test method-name parsing."""

    def test_plain_names(self):
        """Test base method names."""
        assert parse_method("permute-mi") == ("permute-mi", {})
        assert parse_method("backward") == (METHOD_BACKWARD, {})

    def test_inline_parameters(self):
        """Test tree counts and thresholds embedded in names."""
        assert parse_method("dart-200") == (METHOD_DART, {"trees": 200})
        assert parse_method("abc-10-0.50") == (METHOD_ABC, {"trees": 10, "threshold": 0.5})

    def test_invalid_names(self):
        """Test unknown and malformed names."""
        for name in ("gini", "permute-vip-3", "dart-20-0.5", "", "backward-5"):
            with pytest.raises(ValueError):
                parse_method(name)


class TestPermutationSelect:
    """Test permutation-null selection."""

    def setup_method(self):
        self.data = _signal_data()

    def test_report_structure(self):
        """Test decisions follow score > threshold and the null matrix shape."""
        report = permutation_select(self.data, KIND_VIP, L=5, L_rep=2, alpha=0.2, cfg=TINY)
        assert report.method == "permute-vip"
        assert len(report.predictors) == 3
        assert report.null_scores.shape == (5, 3)
        for decision in report.predictors:
            assert decision.selected == (decision.score > decision.threshold)
        assert report.config["L"] == 5 and report.config["L_rep"] == 2

    def test_shared_fits(self):
        """Test several kinds come from one set of fits."""
        reports = permutation_select_many(
            self.data, [KIND_VIP, KIND_WITHIN_TYPE_VIP, KIND_MI], L=4, L_rep=2, cfg=TINY
        )
        assert set(reports) == {KIND_VIP, KIND_WITHIN_TYPE_VIP, KIND_MI}
        assert reports[KIND_MI].metadata["aggregate"] == "median"
        # one type only: within-type VIP equals VIP and is flagged
        assert reports[KIND_WITHIN_TYPE_VIP].metadata["flags"] == ["single_type"]
        assert np.allclose(
            [d.score for d in reports[KIND_WITHIN_TYPE_VIP].predictors],
            [d.score for d in reports[KIND_VIP].predictors],
        )

    def test_reproducible(self):
        """Test identical seeds give identical reports."""
        a = permutation_select(self.data, KIND_MI, L=4, L_rep=2, cfg=TINY)
        b = permutation_select(self.data, KIND_MI, L=4, L_rep=2, cfg=TINY)
        assert a.to_dict() == b.to_dict()

    def test_parallel_matches_sequential(self):
        """Test worker count does not change results."""
        a = permutation_select(self.data, KIND_VIP, L=3, L_rep=1, cfg=TINY, n_jobs=1)
        b = permutation_select(self.data, KIND_VIP, L=3, L_rep=1, cfg=TINY, n_jobs=2)
        assert a.to_dict() == b.to_dict()

    def test_invalid_arguments(self):
        """Test invalid alpha, counts and kinds."""
        with pytest.raises(ValueError):
            permutation_select(self.data, KIND_VIP, L=5, L_rep=1, alpha=1.0, cfg=TINY)
        with pytest.raises(ValueError):
            permutation_select(self.data, KIND_VIP, L=0, L_rep=1, cfg=TINY)
        with pytest.raises(ValueError):
            permutation_select(self.data, "mpvip", L=2, L_rep=1, cfg=TINY)

    def test_null_datasets_keep_predictors(self):
        """Test a permuted-response dataset shares the predictor matrix bit for bit."""
        permuted = self.data.with_response(self.data.y[::-1])
        assert np.array_equal(permuted.X, self.data.X)
        assert permuted.X.tobytes() == self.data.X.tobytes()

    def test_probit_response(self):
        """Test binary responses go through the probit path."""
        data = _signal_data(binary=True)
        report = permutation_select(data, KIND_VIP, L=3, L_rep=1, cfg=TINY)
        assert report.config["sampler"]["n_trees"] == 4
        assert len(report.predictors) == 3


class TestBackwardSelect:
    """Test backward elimination."""

    def setup_method(self):
        self.data = _signal_data(n=40, p=3)

    def test_winner_trace(self):
        """Test the trace has p nested models of sizes p down to 1."""
        report = backward_select(self.data, 0.75, TINY)
        sizes = [len(w.predictors) for w in report.winner_trace]
        assert sizes == [3, 2, 1]
        for bigger, smaller in zip(report.winner_trace, report.winner_trace[1:]):
            assert set(smaller.predictors) < set(bigger.predictors)
            assert set(bigger.predictors) - set(smaller.predictors) == {smaller.dropped}
        winner = report.winner_trace[report.metadata["winner_step"] - 1]
        assert winner.elpd_loo == max(w.elpd_loo for w in report.winner_trace)
        assert report.selected_indices == sorted(winner.predictors)
        assert report.metadata["n_train"] == 30 and report.metadata["n_test"] == 10

    def test_binary_response(self):
        """Test log loss is used for binary responses."""
        report = backward_select(_signal_data(n=40, p=2, binary=True), 0.75, TINY)
        assert report.metadata["criterion"] == "mll"
        assert len(report.winner_trace) == 2

    def test_needs_two_predictors(self):
        """Test p < 2 is rejected."""
        with pytest.raises(ValueError):
            backward_select(self.data.subset_columns([0]), 0.8, TINY)

    def test_empty_test_set(self):
        """Test a split leaving no test rows is rejected."""
        with pytest.raises(ValueError):
            backward_select(self.data, 0.99, TINY)

    @pytest.mark.slow
    def test_drops_pure_noise(self):
        """Test the noise predictor is removed in most seeds."""
        hits = 0
        for seed in range(10):
            rng = np.random.default_rng(seed)
            X = rng.random((200, 2))
            data = Dataset(X=X, y=10 * X[:, 0] + rng.standard_normal(200), types=(TYPE_CONTINUOUS,) * 2)
            report = backward_select(data, 0.8, SamplerConfig(n_trees=50, seed=seed))
            hits += report.selected_indices == [0]
        assert hits >= 9


class TestDartSelect:
    """Test DART median-probability selection."""

    def setup_method(self):
        self.data = _signal_data(n=50, p=4)

    def test_threshold_zero_keeps_used_predictors(self):
        """Test threshold 0 selects every predictor used at least once."""
        report = dart_select(self.data, TINY, threshold=0.0)
        for decision in report.predictors:
            assert decision.selected == (decision.score > 0)

    def test_scores_are_probabilities(self):
        """Test MPVIP scores lie in [0, 1] and the split probabilities are reported."""
        report = dart_select(self.data, TINY)
        assert all(0.0 <= d.score <= 1.0 for d in report.predictors)
        assert len(report.metadata["mean_split_probs"]) == 4

    def test_invalid_threshold(self):
        """Test thresholds outside [0, 1]."""
        with pytest.raises(ValueError):
            dart_select(self.data, TINY, threshold=1.5)


class TestAbcForestSelect:
    """Test ABC Bayesian forest selection."""

    def setup_method(self):
        self.data = _signal_data(n=40, p=4)
        self.cfg = TINY.with_updates(n_trees=3)

    def test_kept_set_size(self):
        """Test floor(keep_frac * n_abc) iterations are kept."""
        report = abc_forest_select(self.data, n_abc=20, keep_frac=0.25, cfg=self.cfg, n_burn=5)
        assert report.metadata["n_kept"] == 5
        assert len(report.metadata["kept_errors"]) == 5
        assert report.metadata["kept_errors"] == sorted(report.metadata["kept_errors"])
        assert set(report.metadata["pi_from_subsets"]) == set(self.data.columns)

    def test_default_kept_size(self):
        """Test the default budget keeps 100 of 1000 iterations."""
        section = Settings().abc_defaults()
        assert int(np.floor(section["keep_frac"] * section["n_abc"])) == 100

    def test_scores_bounded_by_subsets(self):
        """Test a predictor can only split in kept samples whose subset contained it."""
        report = abc_forest_select(self.data, n_abc=12, keep_frac=0.5, cfg=self.cfg, n_burn=5)
        pi_subsets = report.metadata["pi_from_subsets"]
        for decision in report.predictors:
            assert decision.score <= pi_subsets[decision.name] + 1e-12
            assert decision.selected == (decision.score >= decision.threshold)

    def test_invalid_arguments(self):
        """Test the iteration and keep guards."""
        with pytest.raises(ValueError):
            abc_forest_select(self.data, n_abc=5, cfg=self.cfg)
        with pytest.raises(ValueError):
            abc_forest_select(self.data, n_abc=10, keep_frac=0.05, cfg=self.cfg)


class TestRunSelection:
    """Test dispatch by method name."""

    def setup_method(self):
        self.data = _signal_data(n=40, p=3)
        self.overrides = {"n_burn": 5, "n_keep": 5, "cutpoints": 10}

    def test_dart_with_tree_count(self):
        """Test inline tree counts reach the sampler."""
        report = run_selection("dart-3", self.data, seed=2, sampler_overrides=self.overrides)
        assert report.method == "dart-3"
        assert report.config["sampler"]["n_trees"] == 3
        assert report.config["sampler"]["dart"] is not None

    def test_permutation_defaults_from_settings(self):
        """Test options override settings defaults."""
        report = run_selection(
            "permute-vip", self.data, seed=2, sampler_overrides=self.overrides, L=3, L_rep=1, trees=2
        )
        assert report.config["L"] == 3
        assert report.config["alpha"] == 0.05
        assert report.config["sampler"]["n_trees"] == 2

    def test_abc_inline_threshold(self):
        """Test abc-<M>-<threshold> names."""
        report = run_selection(
            "abc-2-0.40", self.data, seed=2, sampler_overrides=self.overrides, n_abc=10, keep_frac=0.2
        )
        assert report.config["threshold"] == 0.4
        assert report.config["sampler"]["n_trees"] == 2
        assert report.config["n_burn"] == 5

    def test_to_dict_fields(self):
        """Test stable report field names."""
        report = run_selection("backward", self.data, seed=2, sampler_overrides=self.overrides, trees=2)
        payload = report.to_dict()
        assert {"method", "predictors", "config", "metadata", "winner_trace"} <= set(payload)
        assert set(payload["predictors"][0]) == {"name", "index", "score", "threshold", "selected"}

    def test_backward_reads_loo_settings(self):
        """Test the loo.reff setting reaches backward elimination."""
        settings = Settings()
        settings.set("loo.reff", 0.5)
        report = run_selection(
            "backward", self.data, seed=2, settings=settings, sampler_overrides=self.overrides, trees=2
        )
        assert report.config["reff"] == 0.5


class TestSelectionStatistics:
    """Longer statistical checks of the permutation approaches."""

    @pytest.mark.slow
    def test_example_two(self):
        """Test VIP misses a relevant binary predictor while within-type VIP and MI find all five."""
        kinds = [KIND_VIP, KIND_WITHIN_TYPE_VIP, KIND_MI]
        relevant = {0, 1, 10, 11, 12}
        vip_missed = within_type_found = mi_found = 0
        for seed in range(10):
            data = gen_scenario("EX2", 500, 20, 1.0, np.random.default_rng(seed))
            cfg = SamplerConfig(n_trees=20, seed=seed)
            reports = permutation_select_many(data, kinds, L=100, L_rep=10, cfg=cfg, n_jobs=8)
            vip_missed += not {0, 1} <= set(reports[KIND_VIP].selected_indices)
            within_type_found += relevant <= set(reports[KIND_WITHIN_TYPE_VIP].selected_indices)
            mi_found += relevant <= set(reports[KIND_MI].selected_indices)
        assert vip_missed >= 6
        assert within_type_found >= 8
        assert mi_found >= 8

    @pytest.mark.slow
    def test_null_calibration(self):
        """Test per-predictor selection frequency under a fully null generator."""
        counts = np.zeros(10)
        for run in range(100):
            data = gen_scenario("NULL", 200, 10, 1.0, np.random.default_rng(run))
            cfg = SamplerConfig(n_trees=20, n_burn=200, n_keep=200, seed=run)
            report = permutation_select(data, KIND_VIP, L=100, L_rep=1, alpha=0.05, cfg=cfg, n_jobs=8)
            counts[report.selected_indices] += 1
        freq = counts / 100
        assert np.all(freq <= 0.05 + 3 * np.sqrt(0.05 * 0.95 / 100))
