"""
Input validation utilities.
"""
import math
import numbers
import re
from typing import Iterable, Mapping, Optional, Tuple

from ..config.constants import (
    NODES_RATIO_MODES,
    OUTPUT_FORMATS,
    PREDICTOR_TYPES,
    SCENARIO_IDS,
)


def validate_probability(value: float, name: str, closed: bool = False) -> Tuple[bool, Optional[str]]:
    """
    Validate a value in (0, 1), or in [0, 1] when ``closed``.

    Returns:
        Tuple of (is_valid, error_message)
    """
    if value is None or not isinstance(value, (int, float)) or not math.isfinite(value):
        return False, f"{name} must be a finite number"
    if closed and not 0.0 <= value <= 1.0:
        return False, f"{name} must lie in [0, 1], got {value}"
    if not closed and not 0.0 < value < 1.0:
        return False, f"{name} must lie in (0, 1), got {value}"
    return True, None


def validate_positive_int(value: int, name: str, minimum: int = 1) -> Tuple[bool, Optional[str]]:
    """
    Validate an integer of at least ``minimum``; numpy integers count, bools do not.

    Returns:
        Tuple of (is_valid, error_message)
    """
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        return False, f"{name} must be an integer"
    if value < minimum:
        return False, f"{name} must be at least {minimum}, got {value}"
    return True, None


def validate_sampler_params(
    trees: int,
    burn: int,
    keep: int,
    thin: int,
    gamma: float,
    beta: float,
    k: float,
    nu: float,
    q: float,
    cutpoints: int,
    nodes_ratio: str,
) -> Tuple[bool, Optional[str]]:
    """
    Validate sampler hyper-parameters.

    Returns:
        Tuple of (is_valid, error_message)
    """
    for value, name, minimum in (
        (trees, "trees", 1),
        (burn, "burn", 0),
        (keep, "keep", 1),
        (thin, "thin", 1),
        (cutpoints, "cutpoints", 1),
    ):
        ok, error = validate_positive_int(value, name, minimum)
        if not ok:
            return ok, error

    ok, error = validate_probability(gamma, "gamma")
    if not ok:
        return ok, error
    if not math.isfinite(beta) or beta < 0:
        return False, f"beta must be non-negative, got {beta}"
    if not math.isfinite(k) or k <= 0:
        return False, f"k must be positive, got {k}"
    if not math.isfinite(nu) or nu <= 0:
        return False, f"nu must be positive, got {nu}"
    ok, error = validate_probability(q, "q")
    if not ok:
        return ok, error
    if nodes_ratio not in NODES_RATIO_MODES:
        return False, f"nodes_ratio must be one of {', '.join(NODES_RATIO_MODES)}"
    return True, None


def validate_type_tags(tags: Iterable[str], p: int) -> Tuple[bool, Optional[str]]:
    """
    Validate per-predictor type tags.

    Returns:
        Tuple of (is_valid, error_message)
    """
    tags = list(tags)
    if len(tags) != p:
        return False, f"Expected {p} type tags, got {len(tags)}"
    for j, tag in enumerate(tags):
        if tag not in PREDICTOR_TYPES:
            return False, f"Predictor {j} has unknown type tag {tag!r}"
    return True, None


def validate_scenario(scenario_id: str, n: int, p: int, sigma2: float) -> Tuple[bool, Optional[str]]:
    """
    Validate benchmark scenario parameters.

    Returns:
        Tuple of (is_valid, error_message)
    """
    if scenario_id not in SCENARIO_IDS:
        return False, f"Unknown scenario id {scenario_id!r}"
    ok, error = validate_positive_int(n, "n", 2)
    if not ok:
        return ok, error
    ok, error = validate_positive_int(p, "p", 1)
    if not ok:
        return ok, error
    if not math.isfinite(sigma2) or sigma2 < 0:
        return False, f"sigma2 must be non-negative, got {sigma2}"
    return True, None


def validate_output_format(fmt: str) -> Tuple[bool, Optional[str]]:
    """
    Validate an output format name.

    Returns:
        Tuple of (is_valid, error_message)
    """
    if fmt not in OUTPUT_FORMATS:
        return False, f"Output format must be one of {', '.join(OUTPUT_FORMATS)}"
    return True, None


def parse_type_overrides(text: str) -> Mapping[str, str]:
    """Parse ``name=binary,other=continuous`` into a mapping."""
    overrides = {}
    if not text:
        return overrides
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if "=" not in item:
            raise ValueError(f"Type override {item!r} must look like name=type")
        name, tag = (part.strip() for part in item.split("=", 1))
        if tag not in PREDICTOR_TYPES:
            raise ValueError(f"Type override for {name!r} must be one of {', '.join(PREDICTOR_TYPES)}")
        overrides[name] = tag
    return overrides


def sanitize_scenario_id(scenario_id: str) -> str:
    """Normalize ``C.C.1`` / ``cc1`` style ids to ``CC1``."""
    return re.sub(r"[\s._-]", "", scenario_id or "").upper()
