"""
Dataset container, CSV loading, predictor type inference and fingerprints.
"""
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from cryptography.hazmat.primitives import hashes
from loguru import logger

from ..config.constants import TYPE_BINARY, TYPE_CONTINUOUS
from .validators import validate_type_tags


def stable_digest(*parts: bytes) -> bytes:
    """SHA-256 over the concatenation of ``parts``."""
    digest = hashes.Hash(hashes.SHA256())
    for part in parts:
        digest.update(len(part).to_bytes(8, "little"))
        digest.update(part)
    return digest.finalize()


def infer_types(X: np.ndarray) -> Tuple[str, ...]:
    """Tag a column binary when it holds at most two distinct values."""
    X = np.asarray(X, dtype=float)
    return tuple(
        TYPE_BINARY if np.unique(X[:, j]).size <= 2 else TYPE_CONTINUOUS for j in range(X.shape[1])
    )


@dataclass(frozen=True, eq=False)
class Dataset:
    """Observation matrix, response, per-column type tags and optional ground truth."""

    X: np.ndarray
    y: np.ndarray
    types: Tuple[str, ...]
    columns: Tuple[str, ...] = ()
    relevant: Optional[Tuple[int, ...]] = None
    response_name: str = "y"
    _fingerprint: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        X = np.ascontiguousarray(np.asarray(self.X, dtype=float))
        y = np.ascontiguousarray(np.asarray(self.y, dtype=float).ravel())
        if X.ndim != 2:
            raise ValueError(f"Predictor matrix must be 2-dimensional, got shape {X.shape}")
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]} values")
        if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
            raise ValueError("Dataset contains non-finite values")
        columns = tuple(self.columns) or tuple(f"x{j + 1}" for j in range(X.shape[1]))
        if len(columns) != X.shape[1]:
            raise ValueError(f"Expected {X.shape[1]} column names, got {len(columns)}")
        ok, error = validate_type_tags(self.types, X.shape[1])
        if not ok:
            raise ValueError(error)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "types", tuple(self.types))
        object.__setattr__(self, "columns", columns)
        if self.relevant is not None:
            object.__setattr__(self, "relevant", tuple(sorted(int(j) for j in self.relevant)))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def is_binary_response(self) -> bool:
        """True when every response value is 0 or 1."""
        return bool(np.all((self.y == 0.0) | (self.y == 1.0)))

    def fingerprint(self) -> str:
        """Hex SHA-256 of the data values and type tags."""
        if not self._fingerprint:
            digest = stable_digest(
                np.asarray(self.X.shape, dtype=np.int64).tobytes(),
                self.X.tobytes(),
                self.y.tobytes(),
                ",".join(self.types).encode("utf-8"),
            )
            self._fingerprint.append(digest.hex())
        return self._fingerprint[0]

    def with_response(self, y: np.ndarray) -> "Dataset":
        """Same predictors, new response."""
        return replace(self, y=np.asarray(y, dtype=float), _fingerprint=[])

    def subset_rows(self, rows: Sequence[int]) -> "Dataset":
        """Keep the given observations, in order."""
        rows = np.asarray(rows, dtype=np.intp)
        return replace(self, X=self.X[rows], y=self.y[rows], _fingerprint=[])

    def subset_columns(self, cols: Sequence[int]) -> "Dataset":
        """Keep the given predictors; ground truth is remapped to the new positions."""
        cols = [int(j) for j in cols]
        relevant = None
        if self.relevant is not None:
            position = {j: i for i, j in enumerate(cols)}
            relevant = tuple(position[j] for j in self.relevant if j in position)
        return replace(
            self,
            X=self.X[:, cols],
            types=tuple(self.types[j] for j in cols),
            columns=tuple(self.columns[j] for j in cols),
            relevant=relevant,
            _fingerprint=[],
        )

    def drop_rows(self, rows: Sequence[int]) -> "Dataset":
        """Remove the given observations."""
        mask = np.ones(self.n, dtype=bool)
        mask[np.asarray(rows, dtype=np.intp)] = False
        return self.subset_rows(np.flatnonzero(mask))


def split_train_test(
    data: Dataset, ratio: float, rng: np.random.Generator
) -> Tuple[Dataset, Dataset]:
    """Random split with ``round(ratio * n)`` training rows."""
    n_train = int(round(ratio * data.n))
    if n_train < 1:
        raise ValueError(f"Training set is empty for split ratio {ratio} and n={data.n}")
    if n_train >= data.n:
        raise ValueError(f"Test set is empty for split ratio {ratio} and n={data.n}")
    order = rng.permutation(data.n)
    return data.subset_rows(np.sort(order[:n_train])), data.subset_rows(np.sort(order[n_train:]))


def load_csv(
    path: Path,
    response: str,
    type_overrides: Optional[Mapping[str, str]] = None,
) -> Dataset:
    """
    Read a CSV with a header row into a Dataset.

    Args:
        path: CSV file path
        response: name of the response column
        type_overrides: optional column name -> type tag mapping

    Returns:
        Dataset with inferred (or overridden) predictor types
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Dataset file not found: {path}")
    try:
        frame = pd.read_csv(path)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise ValueError(f"Cannot parse {path}: {e}") from e

    if response not in frame.columns:
        raise ValueError(f"Unknown response column {response!r} in {path}")
    overrides = dict(type_overrides or {})
    unknown = sorted(set(overrides) - set(frame.columns))
    if unknown:
        raise ValueError(f"Unknown column(s) in type overrides: {', '.join(unknown)}")

    for column in frame.columns:
        converted = pd.to_numeric(frame[column], errors="coerce")
        bad = converted.isna()
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            raise ValueError(
                f"Non-numeric or missing cell in column {column!r} at data row {row + 1} of {path}"
            )
        frame[column] = converted.astype(float)

    predictors = [c for c in frame.columns if c != response]
    X = frame[predictors].to_numpy(dtype=float)
    inferred = infer_types(X)
    types = tuple(overrides.get(name, tag) for name, tag in zip(predictors, inferred))
    logger.debug(f"Loaded {path}: n={X.shape[0]}, p={X.shape[1]}, types={types}")
    return Dataset(
        X=X,
        y=frame[response].to_numpy(dtype=float),
        types=types,
        columns=tuple(str(c) for c in predictors),
        response_name=response,
    )


def to_frame(data: Dataset) -> pd.DataFrame:
    """Dataset as a DataFrame with the response as the last column."""
    frame = pd.DataFrame(data.X, columns=list(data.columns))
    frame[data.response_name] = data.y
    return frame
