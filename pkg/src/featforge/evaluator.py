"""Cross-validated utility scores for transformed feature sets."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, FoldPlan, Task
from .expr import DEFAULT_OPERATORS, Individual, OperatorSet, canonical_string, materialize
from .models import ModelSpec, fit_predict


class LengthMismatch(ValueError):
    pass


class ConstantTarget(ValueError):
    pass


class BudgetExhausted(RuntimeError):
    pass


F1_WEIGHTED = "f1_weighted"
ONE_MINUS_RAE = "one_minus_rae"


def f1_weighted(y_true, y_pred) -> float:
    """Support-weighted F1 over the classes present in ``y_true``."""
    y_true = np.asarray(y_true).astype(np.int64)
    y_pred = np.asarray(y_pred).astype(np.int64)
    if y_true.shape != y_pred.shape:
        raise LengthMismatch(f"{y_true.shape} vs {y_pred.shape}")
    if y_true.size == 0:
        raise LengthMismatch("empty label arrays")
    total = 0.0
    for c in np.unique(y_true):
        tp = np.sum((y_pred == c) & (y_true == c))
        fp = np.sum((y_pred == c) & (y_true != c))
        fn = np.sum((y_pred != c) & (y_true == c))
        # 2PR/(P+R) written in counts; zero when there are no true positives
        f1 = 2.0 * tp / (2.0 * tp + fp + fn) if tp else 0.0
        total += f1 * np.sum(y_true == c)
    return float(total / y_true.size)


def one_minus_rae(y_true, y_pred) -> float:
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.shape != y_pred.shape:
        raise LengthMismatch(f"{y_true.shape} vs {y_pred.shape}")
    denom = np.sum(np.abs(y_true.mean() - y_true))
    if not denom > 0:
        raise ConstantTarget("target is constant; relative absolute error undefined")
    return float(1.0 - np.sum(np.abs(y_pred - y_true)) / denom)


@dataclass(frozen=True)
class Score:
    value: float
    metric: str
    fold_values: tuple[float, ...]


def cross_val_score(X, y, task: Task, model: ModelSpec, folds: FoldPlan,
                    n_classes: int | None = None) -> Score:
    """Mean held-out metric over the fold plan.

    The model for fold ``i`` is seeded with ``model.seed + i`` and only ever
    sees the out-of-fold rows.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.shape[0] != y.shape[0] or folds.assignments.shape[0] != y.shape[0]:
        raise ValueError("X, y and fold plan disagree on row count")
    if task is Task.CLASSIFICATION and n_classes is None:
        n_classes = int(y.max()) + 1
    metric = F1_WEIGHTED if task is Task.CLASSIFICATION else ONE_MINUS_RAE
    values = []
    for i in range(folds.k):
        train, test = folds.train_index(i), folds.test_index(i)
        pred = fit_predict(model.with_seed(model.seed + i), X[train], y[train], X[test],
                           task, n_classes)
        if metric == F1_WEIGHTED:
            values.append(f1_weighted(y[test], pred))
        else:
            values.append(one_minus_rae(y[test], pred))
    return Score(float(np.mean(values)), metric, tuple(values))


class Scorer:
    """Scores individuals on one dataset, memoised by canonical string.

    ``calls`` counts real model evaluations; once ``max_calls`` is reached a
    further uncached request raises BudgetExhausted.
    """

    def __init__(self, ds: Dataset, model: ModelSpec, folds: FoldPlan,
                 operators: OperatorSet = DEFAULT_OPERATORS, max_calls: int | None = None):
        self.ds = ds
        self.model = model
        self.folds = folds
        self.operators = operators
        self.max_calls = max_calls
        self.calls = 0
        self._cache: dict[str, float] = {}

    def score_matrix(self, X) -> float:
        if self.max_calls is not None and self.calls >= self.max_calls:
            raise BudgetExhausted(f"evaluator cap of {self.max_calls} calls reached")
        self.calls += 1
        return cross_val_score(X, self.ds.y, self.ds.task, self.model, self.folds,
                               self.ds.n_classes or None).value

    def score(self, ind: Individual) -> float:
        """Score an individual (raises AllDegenerate if nothing survives)."""
        key = canonical_string(ind)
        if key not in self._cache:
            X = materialize(ind, self.ds.X, self.operators)
            self._cache[key] = self.score_matrix(X)
        return self._cache[key]

    def baseline(self) -> float:
        return self.score(Individual.identity(self.ds.n_features))
