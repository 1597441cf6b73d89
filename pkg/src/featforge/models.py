"""Downstream models used to score transformed feature sets."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from . import kernels
from .data import Task

RIDGE_LAMBDA_FLOOR = 1e-6

KINDS = ("decision_tree", "random_forest", "ridge", "knn")

DEFAULT_PARAMS: dict[str, dict[str, Any]] = {
    "decision_tree": {"max_depth": 8, "min_samples_leaf": 1},
    "random_forest": {"n_trees": 10, "max_depth": 8, "min_samples_leaf": 1,
                      "max_features": None},
    "ridge": {"lam": 1.0},
    "knn": {"k": 5},
}

_ALIASES = {"dt": "decision_tree", "rf": "random_forest", "tree": "decision_tree",
            "forest": "random_forest"}


class SingularSystem(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    kind: str = "random_forest"
    params: Mapping[str, Any] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        kind = _ALIASES.get(self.kind, self.kind)
        if kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "kind", kind)
        unknown = set(self.params) - set(DEFAULT_PARAMS[kind])
        if unknown:
            raise ValueError(f"unknown {kind} parameters: {sorted(unknown)}")
        merged = {**DEFAULT_PARAMS[kind], **self.params}
        object.__setattr__(self, "params", merged)
        if "max_depth" in merged and int(merged["max_depth"]) < 1:
            raise ValueError("max_depth must be >= 1")
        if "min_samples_leaf" in merged and int(merged["min_samples_leaf"]) < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if kind == "random_forest" and int(merged["n_trees"]) < 1:
            raise ValueError("n_trees must be >= 1")
        if kind == "ridge" and not float(merged["lam"]) > 0:
            raise ValueError("ridge lam must be > 0")
        if kind == "knn" and int(merged["k"]) < 1:
            raise ValueError("knn k must be >= 1")

    def with_seed(self, seed: int) -> "ModelSpec":
        return ModelSpec(self.kind, dict(self.params), seed)


# --- trees -------------------------------------------------------------------

@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def leaf_values(self, X: np.ndarray) -> np.ndarray:
        leaves = kernels.predict_leaves(self.feature, self.threshold, self.left, self.right,
                                        np.ascontiguousarray(X, dtype=float))
        return self.value[leaves]


def grow_tree(X, y, n_classes: int, max_depth: int, min_leaf: int = 1,
              n_sub: int | None = None, rng: np.random.Generator | None = None) -> Tree:
    """CART with Gini (n_classes > 0) or variance reduction (n_classes == 0)."""
    X = np.ascontiguousarray(X, dtype=float)
    n, d = X.shape
    n_sub = d if n_sub is None else max(1, min(int(n_sub), d))
    max_nodes = min(2 ** (max_depth + 1) - 1, 2 * n - 1)
    if n_sub < d:
        rng = rng or np.random.default_rng(0)
        keys = rng.random((max_nodes, d))
    else:
        keys = np.empty((max_nodes, 0))
    arrays = kernels.build_tree(X, np.ascontiguousarray(y, dtype=float), int(n_classes),
                                int(max_depth), int(min_leaf), keys, int(n_sub))
    return Tree(*arrays)


def _vote(labels: np.ndarray, n_classes: int) -> np.ndarray:
    """Row-wise majority vote over columns; ties go to the lowest label."""
    counts = np.zeros((labels.shape[0], n_classes), dtype=np.int64)
    for j in range(labels.shape[1]):
        np.add.at(counts, (np.arange(labels.shape[0]), labels[:, j]), 1)
    return counts.argmax(axis=1)


def _forest_max_features(d: int, task: Task, setting) -> int:
    if setting is not None:
        return max(1, min(int(setting), d))
    if task is Task.CLASSIFICATION:
        return max(1, int(math.sqrt(d)))
    return max(1, round(d / 3))


# --- linear / neighbours -------------------------------------------------------

def _standardize(X_train, X_test):
    mu = X_train.mean(axis=0)
    sd = X_train.std(axis=0)
    sd = np.where(sd < 1e-12, 1.0, sd)
    return (X_train - mu) / sd, (X_test - mu) / sd


def _ridge(X_train, y_train, X_test, lam, task, n_classes):
    Z, Zt = _standardize(X_train, X_test)
    lam = max(float(lam), RIDGE_LAMBDA_FLOOR)
    if task is Task.CLASSIFICATION:
        T = np.where(y_train[:, None] == np.arange(n_classes)[None, :], 1.0, -1.0)
    else:
        T = y_train[:, None].astype(float)
    intercept = T.mean(axis=0)
    A = Z.T @ Z + lam * np.eye(Z.shape[1])
    try:
        W = np.linalg.solve(A, Z.T @ (T - intercept))
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    out = Zt @ W + intercept
    if task is Task.CLASSIFICATION:
        return out.argmax(axis=1)
    return out[:, 0]


def _knn(X_train, y_train, X_test, k, task, n_classes, chunk=256):
    if k > X_train.shape[0]:
        raise ValueError(f"k={k} exceeds {X_train.shape[0]} training rows")
    Z, Zt = _standardize(X_train, X_test)
    preds = []
    for s in range(0, Zt.shape[0], chunk):
        block = Zt[s:s + chunk]
        dist = ((block[:, None, :] - Z[None, :, :]) ** 2).sum(axis=2)
        nn = np.argsort(dist, axis=1, kind="stable")[:, :k]
        if task is Task.CLASSIFICATION:
            preds.append(_vote(y_train[nn], n_classes))
        else:
            preds.append(y_train[nn].mean(axis=1))
    return np.concatenate(preds) if preds else np.empty(0)


def fit_predict(model: ModelSpec, X_train, y_train, X_test, task: Task,
                n_classes: int | None = None) -> np.ndarray:
    """Fit ``model`` on the training slice and predict ``X_test``.

    Classification labels are integers ``0..n_classes-1``; ``n_classes``
    defaults to ``max(y_train) + 1``.
    """
    X_train = np.asarray(X_train, dtype=float)
    X_test = np.asarray(X_test, dtype=float)
    y_train = np.asarray(y_train)
    if X_train.shape[0] != y_train.shape[0]:
        raise ValueError("X_train and y_train row counts differ")
    if X_train.shape[1] != X_test.shape[1]:
        raise ValueError("X_train and X_test column counts differ")
    if task is Task.CLASSIFICATION:
        y_train = y_train.astype(np.int64)
        n_classes = int(n_classes if n_classes is not None else y_train.max() + 1)
    else:
        y_train = y_train.astype(float)
        n_classes = 0
    p = model.params
    rng = np.random.default_rng(model.seed)

    if model.kind == "ridge":
        return _ridge(X_train, y_train, X_test, p["lam"], task, n_classes)
    if model.kind == "knn":
        return _knn(X_train, y_train, X_test, int(p["k"]), task, n_classes)

    if model.kind == "decision_tree":
        tree = grow_tree(X_train, y_train, n_classes, int(p["max_depth"]),
                         int(p["min_samples_leaf"]), rng=rng)
        vals = tree.leaf_values(X_test)
        return vals.argmax(axis=1) if n_classes else vals[:, 0]

    n, d = X_train.shape
    n_sub = _forest_max_features(d, task, p["max_features"])
    tree_preds = []
    for _ in range(int(p["n_trees"])):
        boot = rng.integers(0, n, n)
        tree = grow_tree(X_train[boot], y_train[boot], n_classes, int(p["max_depth"]),
                         int(p["min_samples_leaf"]), n_sub=n_sub, rng=rng)
        vals = tree.leaf_values(X_test)
        tree_preds.append(vals.argmax(axis=1) if n_classes else vals[:, 0])
    stacked = np.column_stack(tree_preds)
    if n_classes:
        return _vote(stacked, n_classes)
    return stacked.mean(axis=1)
