"""
Settings management for run defaults.
Defaults come from constants; an optional JSON file (``--config`` or $BARTVS_CONFIG)
overrides any of them section by section.
"""
import copy
import json
import os
from pathlib import Path
from typing import Any, Dict, Optional

from loguru import logger

from . import constants as C


def _deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """Merge ``override`` into a copy of ``base``, recursing into nested dicts."""
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


class Settings:
    """Manages run defaults and user overrides."""

    def __init__(self, config_file: Optional[Path] = None):
        if config_file is None:
            env_path = os.getenv(C.CONFIG_ENV_VAR)
            config_file = Path(env_path) if env_path else None
        self.config_file: Optional[Path] = Path(config_file) if config_file else None
        self._settings: Dict[str, Any] = {}
        self.load()

    def load(self) -> None:
        """Load overrides from file, falling back to defaults."""
        self._settings = self._default_settings()
        if self.config_file is None:
            return
        if not self.config_file.exists():
            logger.warning(f"Settings file {self.config_file} not found, using defaults")
            return
        try:
            with open(self.config_file, "r", encoding="utf-8") as f:
                overrides = json.load(f)
            if not isinstance(overrides, dict):
                raise ValueError("top-level JSON value must be an object")
            self._settings = _deep_merge(self._settings, overrides)
        except (json.JSONDecodeError, ValueError, IOError) as e:
            logger.warning(f"Ignoring settings file {self.config_file}: {e}")
            self._settings = self._default_settings()

    def save(self, path: Optional[Path] = None) -> None:
        """Write the effective settings to ``path`` (or the loaded file)."""
        target = Path(path) if path else self.config_file
        if target is None:
            raise ValueError("No settings file to save to")
        target.parent.mkdir(parents=True, exist_ok=True)
        with open(target, "w", encoding="utf-8") as f:
            json.dump(self._settings, f, indent=2, sort_keys=True)

    def _default_settings(self) -> Dict[str, Any]:
        """Return default settings dictionary."""
        return {
            "sampler": {
                "trees": C.DEFAULT_TREES,
                "burn": C.DEFAULT_BURN,
                "keep": C.DEFAULT_KEEP,
                "thin": C.DEFAULT_THIN,
                "gamma": C.DEFAULT_GAMMA,
                "beta": C.DEFAULT_BETA,
                "k": C.DEFAULT_K,
                "nu": C.DEFAULT_NU,
                "q": C.DEFAULT_Q,
                "cutpoints": C.DEFAULT_CUTPOINTS,
                "nodes_ratio": C.NODES_RATIO_CLOSED_FORM,
            },
            "dart": {
                "a": C.DEFAULT_DART_A,
                "b": C.DEFAULT_DART_B,
                "rho": None,
                "theta": None,
                "start_fraction": C.DEFAULT_DART_START_FRACTION,
            },
            "permutation": {
                "L": C.DEFAULT_PERMUTATION_L,
                "L_rep": C.DEFAULT_PERMUTATION_L_REP,
                "alpha": C.DEFAULT_ALPHA,
                "trees": C.DEFAULT_PERMUTATION_TREES,
            },
            "backward": {
                "split_ratio": C.DEFAULT_SPLIT_RATIO,
                "trees": C.DEFAULT_BACKWARD_TREES,
            },
            "dart_select": {
                "threshold": C.DEFAULT_MPVIP_THRESHOLD,
                "trees": C.DEFAULT_DART_TREES,
            },
            "abc": {
                "n_abc": C.DEFAULT_ABC_ITERATIONS,
                "keep_frac": C.DEFAULT_ABC_KEEP_FRACTION,
                "split_ratio": C.DEFAULT_ABC_SPLIT_RATIO,
                "burn": C.DEFAULT_ABC_BURN,
                "threshold": C.DEFAULT_ABC_THRESHOLD,
                "trees": C.DEFAULT_ABC_TREES,
            },
            "loo": {
                "reff": C.PSIS_REFF,
                "exact_max_n": C.EXACT_LOO_MAX_N,
            },
        }

    def get(self, key: str, default: Any = None) -> Any:
        """Get a setting value; dotted keys reach into sections (``"sampler.trees"``)."""
        node: Any = self._settings
        for part in key.split("."):
            if not isinstance(node, dict) or part not in node:
                return default
            node = node[part]
        return node

    def set(self, key: str, value: Any) -> None:
        """Set a setting value; dotted keys create sections as needed."""
        parts = key.split(".")
        node = self._settings
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value

    def section(self, name: str) -> Dict[str, Any]:
        """Return a copy of one settings section."""
        return copy.deepcopy(self._settings.get(name, {}))

    def sampler_defaults(self) -> Dict[str, Any]:
        """Get sampler defaults."""
        return self.section("sampler")

    def dart_defaults(self) -> Dict[str, Any]:
        """Get DART hyper-parameters."""
        return self.section("dart")

    def permutation_defaults(self) -> Dict[str, Any]:
        """Get permutation-selection defaults."""
        return self.section("permutation")

    def backward_defaults(self) -> Dict[str, Any]:
        """Get backward-selection defaults."""
        return self.section("backward")

    def dart_select_defaults(self) -> Dict[str, Any]:
        """Get DART-selection defaults."""
        return self.section("dart_select")

    def abc_defaults(self) -> Dict[str, Any]:
        """Get ABC Bayesian forest defaults."""
        return self.section("abc")

    def loo_defaults(self) -> Dict[str, Any]:
        """Get PSIS-LOO defaults."""
        return self.section("loo")

    def as_dict(self) -> Dict[str, Any]:
        """Return the full effective settings."""
        return copy.deepcopy(self._settings)


# Global settings instance
settings = Settings()
