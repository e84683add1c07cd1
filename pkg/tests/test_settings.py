"""
Unit tests for settings module.
"""
import pytest
import sys
import json
from pathlib import Path
from unittest.mock import patch

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.config import constants as C
from src.config.settings import Settings


class TestSettings:
    """Test settings functionality."""

    def test_default_settings(self):
        """Test default settings values."""
        settings = Settings()

        assert settings.get("sampler.trees") == 200
        assert settings.get("sampler.nodes_ratio") == C.NODES_RATIO_CLOSED_FORM
        assert settings.permutation_defaults() == {"L": 100, "L_rep": 10, "alpha": 0.05, "trees": 20}
        assert settings.abc_defaults()["keep_frac"] == 0.1
        assert settings.dart_defaults()["rho"] is None
        assert settings.loo_defaults() == {"reff": C.PSIS_REFF, "exact_max_n": C.EXACT_LOO_MAX_N}

    def test_dotted_get_and_set(self):
        """Test dotted keys reach into sections."""
        settings = Settings()

        settings.set("sampler.burn", 50)
        assert settings.get("sampler.burn") == 50
        settings.set("extra.nested.value", 3)
        assert settings.get("extra.nested.value") == 3
        assert settings.get("sampler.missing", "fallback") == "fallback"

    def test_sections_are_copies(self):
        """Test editing a returned section leaves the settings untouched."""
        settings = Settings()

        section = settings.sampler_defaults()
        section["trees"] = 1
        assert settings.get("sampler.trees") == 200

    def test_file_overrides_merge(self, tmp_path):
        """Test a settings file overrides single keys and keeps the rest."""
        path = tmp_path / "settings.json"
        path.write_text(json.dumps({"sampler": {"trees": 25}, "abc": {"n_abc": 50}}))

        settings = Settings(path)
        assert settings.get("sampler.trees") == 25
        assert settings.get("sampler.burn") == C.DEFAULT_BURN
        assert settings.abc_defaults()["n_abc"] == 50

    def test_environment_variable(self, tmp_path):
        """Test the settings file can come from the environment."""
        path = tmp_path / "env.json"
        path.write_text(json.dumps({"backward": {"split_ratio": 0.7}}))

        with patch.dict("os.environ", {C.CONFIG_ENV_VAR: str(path)}):
            settings = Settings()
        assert settings.backward_defaults()["split_ratio"] == 0.7

    def test_invalid_file_falls_back(self, tmp_path):
        """Test malformed or missing files leave the defaults in place."""
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        assert Settings(path).get("sampler.trees") == 200

        path.write_text("[1, 2]")
        assert Settings(path).get("sampler.trees") == 200

        assert Settings(tmp_path / "missing.json").get("sampler.trees") == 200

    def test_save_roundtrip(self, tmp_path):
        """Test saved settings load back identically."""
        settings = Settings()
        settings.set("dart.a", 1.0)
        target = tmp_path / "out" / "saved.json"
        settings.save(target)

        assert Settings(target).as_dict() == settings.as_dict()

    def test_save_without_target(self):
        """Test saving needs a path when no file was loaded."""
        with patch.dict("os.environ", {}, clear=True):
            settings = Settings()
        with pytest.raises(ValueError):
            settings.save()
