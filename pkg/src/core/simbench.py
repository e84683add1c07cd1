"""
Synthetic selection benchmarks.

Scenario generators with known relevant predictors, selection metrics and a replicated
benchmark runner whose tables list r_miss, recall, precision and F1 per method.
"""
import math
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger
from scipy.stats import norm

from ..config import constants as C
from ..config.settings import Settings
from ..utils.dataset import Dataset
from ..utils.parallel import derive_seed, run_jobs
from ..utils.validators import sanitize_scenario_id, validate_positive_int, validate_scenario
from .selection import parse_method, run_selection


@dataclass(frozen=True)
class Scenario:
    """Scenario id with its size, noise level and 0-based relevant predictors."""

    id: str
    n: int
    p: int
    sigma2: float
    relevant: Tuple[int, ...]
    binary_response: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return {
            "id": self.id,
            "n": self.n,
            "p": self.p,
            "sigma2": self.sigma2,
            "relevant": list(self.relevant),
            "binary_response": self.binary_response,
        }


# -- generators --------------------------------------------------------------------


def _friedman(X: np.ndarray, a: int, b: int, c: int, d: int, e: int) -> np.ndarray:
    return (
        10.0 * np.sin(np.pi * X[:, a] * X[:, b])
        + 20.0 * (X[:, c] - 0.5) ** 2
        + 10.0 * X[:, d]
        + 5.0 * X[:, e]
    )


def _ar1_normal(n: int, p: int, rho: float, rng: np.random.Generator) -> np.ndarray:
    idx = np.arange(p)
    cov = rho ** np.abs(np.subtract.outer(idx, idx))
    return rng.multivariate_normal(np.zeros(p), cov, size=n, method="cholesky")


def _equicorrelated_normal(n: int, p: int, rho: float, rng: np.random.Generator) -> np.ndarray:
    cov = np.full((p, p), rho)
    np.fill_diagonal(cov, 1.0)
    return rng.multivariate_normal(np.zeros(p), cov, size=n, method="cholesky")


def _mixed_half(n: int, p: int, rng: np.random.Generator) -> Tuple[np.ndarray, Tuple[str, ...]]:
    half = math.ceil(p / 2)
    X = np.hstack((rng.binomial(1, 0.5, (n, half)), rng.random((n, p - half)))).astype(float)
    types = (C.TYPE_BINARY,) * half + (C.TYPE_CONTINUOUS,) * (p - half)
    return X, types


def _cc1(n, p, rng):
    X = rng.random((n, p))
    return X, (C.TYPE_CONTINUOUS,) * p, _friedman(X, 0, 1, 2, 3, 4)


def _cc2(n, p, rng):
    X = _ar1_normal(n, p, C.SCENARIO_CORRELATION, rng)
    return X, (C.TYPE_CONTINUOUS,) * p, 2.0 * X[:, 0] * X[:, 3] + 2.0 * X[:, 6] * X[:, 9]


def _cm1(n, p, rng):
    X, types = _mixed_half(n, p, rng)
    h = math.ceil(p / 2)
    return X, types, _friedman(X, h, h + 1, h + 2, 0, 1)


def _cm2(n, p, rng):
    X = np.hstack(
        (
            rng.binomial(1, 0.2, (n, 20)),
            rng.binomial(1, 0.5, (n, 20)),
            _equicorrelated_normal(n, 44, C.SCENARIO_CORRELATION, rng),
        )
    ).astype(float)
    types = (C.TYPE_BINARY,) * 40 + (C.TYPE_CONTINUOUS,) * 44
    f0 = (
        -4.0
        + X[:, 0]
        + np.sin(np.pi * X[:, 0] * X[:, 43])
        - X[:, 20]
        + 0.6 * X[:, 40] * X[:, 41]
        - np.exp(-2.0 * (X[:, 41] + 1.0) ** 2)
        - X[:, 42] ** 2
        + 0.5 * X[:, 43]
    )
    return X, types, f0


def _example(n, p, rng, binary_first: bool):
    X = np.hstack((rng.binomial(1, 0.5, (n, 10)), rng.random((n, 10)))).astype(float)
    types = (C.TYPE_BINARY,) * 10 + (C.TYPE_CONTINUOUS,) * 10
    if binary_first:
        return X, types, _friedman(X, 10, 11, 12, 0, 1)
    return X, types, _friedman(X, 0, 10, 12, 1, 11)


def _null(n, p, rng):
    return rng.random((n, p)), (C.TYPE_CONTINUOUS,) * p, np.zeros(n)


Generator = Callable[[int, int, np.random.Generator], Tuple[np.ndarray, Tuple[str, ...], np.ndarray]]

# id -> (generator, binary response, minimum p, relevant(p))
_SCENARIOS: Dict[str, Tuple[Generator, bool, int, Callable[[int], Tuple[int, ...]]]] = {
    "CC1": (_cc1, False, 5, lambda p: (0, 1, 2, 3, 4)),
    "CC2": (_cc2, False, 10, lambda p: (0, 3, 6, 9)),
    "CM1": (_cm1, False, 6, lambda p: (0, 1) + tuple(math.ceil(p / 2) + i for i in range(3))),
    "CM2": (_cm2, False, 84, lambda p: (0, 20, 40, 41, 42, 43)),
    "BC1": (_cc1, True, 5, lambda p: (0, 1, 2, 3, 4)),
    "BC2": (_cc2, True, 10, lambda p: (0, 3, 6, 9)),
    "BM1": (_cm1, True, 6, lambda p: (0, 1) + tuple(math.ceil(p / 2) + i for i in range(3))),
    "BM2": (_cm2, True, 84, lambda p: (0, 20, 40, 41, 42, 43)),
    "EX1": (lambda n, p, rng: _example(n, p, rng, False), False, 20, lambda p: (0, 1, 10, 11, 12)),
    "EX2": (lambda n, p, rng: _example(n, p, rng, True), False, 20, lambda p: (0, 1, 10, 11, 12)),
    "NULL": (_null, False, 1, lambda p: ()),
}


def make_scenario(
    scenario_id: str, n: int, p: Optional[int] = None, sigma2: float = 1.0
) -> Scenario:
    """
    Resolve and validate a scenario id (``C.C.1`` or ``CC1``) with its size parameters.

    Fixed-size scenarios take their p when ``p`` is None and reject any other value.
    """
    sid = sanitize_scenario_id(scenario_id)
    fixed = C.SCENARIO_FIXED_P.get(sid)
    if p is None:
        if fixed is None:
            raise ValueError(f"Scenario {sid or scenario_id!r} needs an explicit p")
        p = fixed
    ok, error = validate_scenario(sid, n, p, sigma2)
    if not ok:
        raise ValueError(error)
    if fixed is not None and p != fixed:
        raise ValueError(f"Scenario {sid} has fixed p={fixed}, got p={p}")
    _, binary, min_p, relevant = _SCENARIOS[sid]
    if p < min_p:
        raise ValueError(f"Scenario {sid} needs p >= {min_p}, got p={p}")
    return Scenario(sid, int(n), int(p), float(sigma2), relevant(p), binary)


def generate(scenario: Scenario, rng: np.random.Generator) -> Dataset:
    """Draw one dataset for a resolved scenario."""
    generator = _SCENARIOS[scenario.id][0]
    X, types, f0 = generator(scenario.n, scenario.p, rng)
    if scenario.binary_response:
        y = (rng.random(scenario.n) < norm.cdf(f0)).astype(float)
    else:
        y = f0 + math.sqrt(scenario.sigma2) * rng.standard_normal(scenario.n)
    return Dataset(X=X, y=y, types=types, relevant=scenario.relevant)


def gen_scenario(
    scenario_id: str, n: int, p: Optional[int], sigma2: float, rng: np.random.Generator
) -> Dataset:
    """Generate a dataset for ``scenario_id``; relevant indices are 0-based."""
    return generate(make_scenario(scenario_id, n, p, sigma2), rng)


# -- metrics -----------------------------------------------------------------------


@dataclass(frozen=True)
class SelectionMetrics:
    precision: float
    recall: float
    f1: float
    missed: bool
    empty: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            "prec": self.precision,
            "rec": self.recall,
            "F1": self.f1,
            "missed": self.missed,
            "empty": self.empty,
        }


def metrics(selected: Iterable[int], relevant: Iterable[int], p: int) -> SelectionMetrics:
    """
    Precision, recall, F1 and the missed flag (FN > 0) of a selection.

    Empty selections get precision 0 with ``empty`` set. With no relevant predictors,
    recall is 1 and nothing is missed.
    """
    selected, relevant = set(int(j) for j in selected), set(int(j) for j in relevant)
    for name, idx in (("selected", selected), ("relevant", relevant)):
        bad = [j for j in idx if not 0 <= j < p]
        if bad:
            raise ValueError(f"{name} indices {sorted(bad)} outside 0..{p - 1}")
    tp = len(selected & relevant)
    fp = len(selected - relevant)
    fn = len(relevant - selected)
    precision = tp / (tp + fp) if selected else 0.0
    recall = tp / (tp + fn) if relevant else 1.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return SelectionMetrics(precision, recall, f1, fn > 0, not selected)


# -- benchmark ---------------------------------------------------------------------


@dataclass(frozen=True)
class CellRecord:
    """Outcome of one method on one replication."""

    method: str
    replication: int
    selected: Tuple[int, ...] = ()
    metrics: Optional[SelectionMetrics] = None
    failed: bool = False
    error: Optional[str] = None
    elapsed: float = 0.0

    def to_dict(self, timings: bool = False) -> Dict[str, Any]:
        out = {
            "method": self.method,
            "replication": self.replication,
            "selected": list(self.selected),
            "failed": self.failed,
            "error": self.error,
        }
        if self.metrics is not None:
            out.update(self.metrics.to_dict())
        if timings:
            out["elapsed"] = self.elapsed
        return out


def _mean_se(values: Sequence[float]) -> Tuple[float, float]:
    if not values:
        return float("nan"), float("nan")
    arr = np.asarray(values, dtype=float)
    se = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
    return float(arr.mean()), se


@dataclass(eq=False)
class BenchResult:
    """Per-cell records of a replicated benchmark with per-method summaries."""

    scenario: Scenario
    methods: Tuple[str, ...]
    reps: int
    seed: int
    records: List[CellRecord] = field(default_factory=list)

    def method_records(self, method: str) -> List[CellRecord]:
        return [r for r in self.records if r.method == method]

    def summary(self, method: str) -> Dict[str, Any]:
        """r_miss, recall, precision and F1 with Monte-Carlo standard errors."""
        done = [r for r in self.method_records(method) if not r.failed]
        recall = [r.metrics.recall for r in done]
        # empty selections are excluded from precision and F1 averages
        precision = [r.metrics.precision for r in done if not r.metrics.empty]
        f1 = [r.metrics.f1 for r in done if not r.metrics.empty]
        rec, rec_se = _mean_se(recall)
        prec, prec_se = _mean_se(precision)
        f1_mean, f1_se = _mean_se(f1)
        return {
            "method": method,
            "r_miss": float(np.mean([r.metrics.missed for r in done])) if done else float("nan"),
            "rec": rec,
            "rec_se": rec_se,
            "prec": prec,
            "prec_se": prec_se,
            "F1": f1_mean,
            "F1_se": f1_se,
            "n_empty": sum(r.metrics.empty for r in done),
            "n_failed": len(self.method_records(method)) - len(done),
        }

    def elapsed(self, method: str) -> float:
        return float(sum(r.elapsed for r in self.method_records(method)))

    def table_frame(self, timings: bool = False) -> pd.DataFrame:
        rows = []
        for method in self.methods:
            row = self.summary(method)
            if timings:
                row["elapsed"] = self.elapsed(method)
            rows.append(row)
        return pd.DataFrame(rows)

    def long_frame(self) -> pd.DataFrame:
        """One row per (method, replication, metric) for plotting."""
        rows = []
        for r in self.records:
            if r.failed:
                continue
            for metric, value in r.metrics.to_dict().items():
                rows.append(
                    {"method": r.method, "replication": r.replication, "metric": metric, "value": float(value)}
                )
        return pd.DataFrame(rows, columns=["method", "replication", "metric", "value"])

    def to_dict(self, timings: bool = False) -> Dict[str, Any]:
        table = []
        for method in self.methods:
            row = self.summary(method)
            if timings:
                row["elapsed"] = self.elapsed(method)
            table.append(row)
        return {
            "scenario": self.scenario.to_dict(),
            "methods": list(self.methods),
            "reps": self.reps,
            "seed": self.seed,
            "table": table,
            "records": [r.to_dict(timings) for r in self.records],
        }


def _cell_job(
    method: str,
    replication: int,
    data: Dataset,
    seed: int,
    settings: Optional[Settings],
    sampler_overrides: Optional[Dict[str, Any]],
) -> CellRecord:
    started = time.perf_counter()
    try:
        report = run_selection(
            method, data, seed=seed, n_jobs=1, settings=settings, sampler_overrides=sampler_overrides
        )
    except Exception as e:
        logger.warning(f"{method} failed on replication {replication}: {e}")
        return CellRecord(method, replication, failed=True, error=f"{type(e).__name__}: {e}",
                          elapsed=time.perf_counter() - started)
    selected = tuple(report.selected_indices)
    return CellRecord(
        method,
        replication,
        selected=selected,
        metrics=metrics(selected, data.relevant or (), data.p),
        elapsed=time.perf_counter() - started,
    )


def run_benchmark(
    scenario: Scenario,
    methods: Sequence[str],
    reps: int,
    seed: int = C.DEFAULT_SEED,
    n_jobs: int = 1,
    settings: Optional[Settings] = None,
    sampler_overrides: Optional[Dict[str, Any]] = None,
) -> BenchResult:
    """
    Apply every method to the same ``reps`` datasets of a scenario.

    Dataset r is drawn from a seed derived from (seed, scenario, r); each (method, r)
    cell fits with its own derived seed, so results do not depend on ``n_jobs``.
    """
    ok, error = validate_positive_int(reps, "reps")
    if not ok:
        raise ValueError(error)
    methods = tuple(methods)
    if not methods:
        raise ValueError("No methods given")
    for method in methods:
        parse_method(method)

    datasets = [
        generate(scenario, np.random.default_rng(derive_seed(seed, "bench-data", scenario.id, r)))
        for r in range(reps)
    ]
    jobs = [
        (method, r, datasets[r], derive_seed(seed, "bench-cell", method, r), settings, sampler_overrides)
        for method in methods
        for r in range(reps)
    ]
    logger.info(f"Benchmark {scenario.id}: {len(methods)} methods x {reps} replications")
    records = run_jobs(_cell_job, jobs, n_jobs)
    failed = sum(r.failed for r in records)
    if failed:
        logger.warning(f"{failed} of {len(records)} benchmark cells failed")
    return BenchResult(scenario, methods, reps, seed, records)
