"""
Unit tests for parallel module.
"""
import pytest
import sys
from pathlib import Path

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.utils.parallel import derive_seed, run_jobs


def _power(base, exponent):
    return base**exponent


class TestDeriveSeed:
    """Test seed derivation."""

    def test_deterministic(self):
        """Test equal keys give equal seeds."""
        assert derive_seed(7, "null", 3) == derive_seed(7, "null", 3)

    def test_keys_separate_streams(self):
        """Test different masters, labels and indices give different seeds."""
        seeds = {
            derive_seed(7, "null", 3),
            derive_seed(8, "null", 3),
            derive_seed(7, "observed", 3),
            derive_seed(7, "null", 4),
            derive_seed(7, "null"),
        }
        assert len(seeds) == 5

    def test_range(self):
        """Test seeds are non-negative 63-bit integers."""
        for index in range(100):
            seed = derive_seed(0, "job", index)
            assert 0 <= seed < 2**63

    def test_negative_key(self):
        """Test negative integer keys are rejected."""
        with pytest.raises(ValueError):
            derive_seed(0, -1)


class TestRunJobs:
    """Test job execution."""

    def test_sequential_order(self):
        """Test results come back in job order."""
        assert run_jobs(_power, [(2, 3), (3, 2), (5, 0)]) == [8, 9, 1]

    def test_parallel_matches_sequential(self):
        """Test worker processes return the same ordered results."""
        jobs = [(b, 2) for b in range(10)]
        assert run_jobs(_power, jobs, n_jobs=2) == run_jobs(_power, jobs, n_jobs=1)

    def test_empty(self):
        """Test an empty job list."""
        assert run_jobs(_power, []) == []
