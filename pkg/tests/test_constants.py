"""
Unit tests for constants module.
"""
import pytest
import sys
from pathlib import Path

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.config.constants import (
    IMPORTANCE_KINDS,
    NODES_RATIO_MODES,
    PERMUTATION_KINDS,
    PERMUTATION_METHOD_KINDS,
    SCENARIO_FIXED_P,
    SCENARIO_IDS,
    SELECTION_METHODS,
)
from src.core.importance import IMPORTANCE_FUNCTIONS


class TestConstants:
    """Test constant values."""

    def test_permutation_kinds_are_importance_kinds(self):
        """Test every permutation kind has an importance function."""
        for kind in PERMUTATION_KINDS:
            assert kind in IMPORTANCE_KINDS
        assert set(IMPORTANCE_FUNCTIONS) == set(IMPORTANCE_KINDS)

    def test_method_kind_mapping(self):
        """Test permute-* methods map onto permutation kinds."""
        for method, kind in PERMUTATION_METHOD_KINDS.items():
            assert method in SELECTION_METHODS
            assert kind in PERMUTATION_KINDS

    def test_fixed_p_scenarios_exist(self):
        """Test fixed-size scenarios are known ids."""
        for scenario_id, p in SCENARIO_FIXED_P.items():
            assert scenario_id in SCENARIO_IDS
            assert p > 0

    def test_scenario_ids_unique(self):
        """Test scenario ids are unique and compact."""
        assert len(set(SCENARIO_IDS)) == len(SCENARIO_IDS)
        for scenario_id in SCENARIO_IDS:
            assert scenario_id == scenario_id.upper()
            assert "." not in scenario_id

    def test_nodes_ratio_modes(self):
        """Test both Metropolis ratio modes are listed."""
        assert NODES_RATIO_MODES == ("closed_form", "exact")
