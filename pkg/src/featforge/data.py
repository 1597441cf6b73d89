"""Tabular dataset loading and cross-validation fold planning."""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

MIN_ROWS = 10
MAX_CLASSES_FOR_INFERENCE = 20


class Task(str, enum.Enum):
    CLASSIFICATION = "cls"
    REGRESSION = "reg"


class LoadError(ValueError):
    pass


class MissingTarget(LoadError):
    pass


class UnparseableFile(LoadError):
    pass


class TooFewRows(LoadError):
    pass


class ClassTooSmall(ValueError):
    pass


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    task: Task
    name: str = "dataset"
    feature_names: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.X = np.ascontiguousarray(self.X, dtype=float)
        if self.X.ndim != 2:
            raise ValueError("X must be 2-D")
        if len(self.y) != self.X.shape[0]:
            raise ValueError("X and y row counts differ")
        if self.task is Task.CLASSIFICATION:
            self.y = np.asarray(self.y, dtype=np.int64)
        else:
            self.y = np.asarray(self.y, dtype=float)
        if not self.feature_names:
            self.feature_names = [f"f{i}" for i in range(self.X.shape[1])]

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def n_classes(self) -> int:
        return int(self.y.max()) + 1 if self.task is Task.CLASSIFICATION else 0


def _encode_categorical(col: pd.Series) -> np.ndarray:
    cats = sorted(col.dropna().astype(str).unique())
    mapping = {c: i for i, c in enumerate(cats)}
    missing_code = len(cats)
    return np.array([mapping[str(v)] if pd.notna(v) else missing_code for v in col],
                    dtype=float)


def _parse_task(task) -> Task | None:
    if task is None or task == "auto":
        return None
    if isinstance(task, Task):
        return task
    aliases = {"cls": Task.CLASSIFICATION, "classification": Task.CLASSIFICATION,
               "reg": Task.REGRESSION, "regression": Task.REGRESSION}
    try:
        return aliases[str(task).lower()]
    except KeyError:
        raise ValueError(f"unknown task {task!r}") from None


def infer_task(y: pd.Series) -> Task:
    if not pd.api.types.is_numeric_dtype(y):
        return Task.CLASSIFICATION
    vals = y.to_numpy(dtype=float)
    if np.all(vals == np.round(vals)) and len(np.unique(vals)) <= MAX_CLASSES_FOR_INFERENCE:
        return Task.CLASSIFICATION
    return Task.REGRESSION


def load_csv(path, target, task=None, name: str | None = None) -> Dataset:
    """Read a headered CSV into a Dataset.

    ``target`` is a column name or a zero-based column index.  String columns
    are label-encoded (missing values get their own code), numeric gaps are
    filled with the column median, and fully empty columns are dropped.
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path)
    except FileNotFoundError:
        raise
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise UnparseableFile(f"{path}: {exc}") from exc

    if isinstance(target, int) or (isinstance(target, str) and target not in frame.columns
                                   and target.isdigit()):
        idx = int(target)
        if idx >= frame.shape[1]:
            raise MissingTarget(f"target index {idx} out of range")
        target = frame.columns[idx]
    if target not in frame.columns:
        raise MissingTarget(f"target column {target!r} not in {list(frame.columns)}")

    warnings: list[str] = []
    y_raw = frame[target]
    if y_raw.isna().any():
        n_drop = int(y_raw.isna().sum())
        warnings.append(f"dropped {n_drop} rows with missing target")
        frame = frame[y_raw.notna()].reset_index(drop=True)
        y_raw = frame[target]
    if len(frame) < MIN_ROWS:
        raise TooFewRows(f"{len(frame)} rows; at least {MIN_ROWS} required")

    resolved = _parse_task(task) or infer_task(y_raw)
    if resolved is Task.CLASSIFICATION:
        labels, y = np.unique(y_raw.astype(str) if not pd.api.types.is_numeric_dtype(y_raw)
                              else y_raw.to_numpy(), return_inverse=True)
        if len(labels) < 2:
            raise LoadError("classification target needs at least 2 classes")
    else:
        if not pd.api.types.is_numeric_dtype(y_raw):
            raise LoadError("regression target must be numeric")
        y = y_raw.to_numpy(dtype=float)

    columns, names = [], []
    for col in frame.columns:
        if col == target:
            continue
        series = frame[col]
        if series.isna().all():
            warnings.append(f"dropped empty column {col!r}")
            continue
        if pd.api.types.is_numeric_dtype(series):
            values = series.to_numpy(dtype=float)
            if np.isnan(values).any():
                values = np.where(np.isnan(values), np.nanmedian(values), values)
        else:
            values = _encode_categorical(series)
        columns.append(values)
        names.append(str(col))
    if not columns:
        raise LoadError("no usable feature columns")
    for w in warnings:
        logger.warning("%s: %s", path.name, w)
    X = np.column_stack(columns)
    if not np.all(np.isfinite(X)):
        raise UnparseableFile("non-finite values in feature columns")
    return Dataset(X, y, resolved, name=name or path.stem, feature_names=names,
                   warnings=warnings)


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignments: np.ndarray
    seed: int

    def test_index(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_index(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.k)


def make_folds(ds: Dataset, k: int = 5, seed: int = 0) -> FoldPlan:
    """Shuffled k-fold plan, stratified by class for classification data.

    Rows are shuffled (per class when stratifying), laid end to end and dealt
    round-robin, which keeps both fold sizes and per-class counts within one.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    m = ds.n_rows
    if m < k:
        raise ValueError(f"{m} rows cannot fill {k} folds")
    rng = np.random.default_rng(seed)
    if ds.task is Task.CLASSIFICATION:
        counts = np.bincount(ds.y)
        small = [c for c, n in enumerate(counts) if 0 < n < k]
        if small:
            raise ClassTooSmall(f"classes {small} have fewer than {k} members")
        order = np.concatenate([rng.permutation(np.flatnonzero(ds.y == c))
                                for c in range(len(counts)) if counts[c]])
    else:
        order = rng.permutation(m)
    assignments = np.empty(m, dtype=np.int64)
    assignments[order] = np.arange(m) % k
    return FoldPlan(k, assignments, seed)


def synthetic_interaction(n_rows: int = 500, n_features: int = 8, noise: float = 0.1,
                          seed: int = 0) -> Dataset:
    """Regression data whose target is the product of the first two features.

    The remaining columns are pure distractors, so raw-feature linear models
    score near zero while the single product feature explains almost all of y.
    """
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n_rows, n_features))
    y = X[:, 0] * X[:, 1] + noise * rng.standard_normal(n_rows)
    return Dataset(X, y, Task.REGRESSION, name=f"synthetic-product-{seed}")
