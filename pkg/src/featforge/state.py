"""Fixed-size descriptive-statistics embedding of a feature matrix."""
import numpy as np

N_STATS = 7
STATE_DIM = N_STATS * N_STATS
STAT_NAMES = ("count", "std", "min", "max", "q1", "q2", "q3")


class EmptyMatrix(ValueError):
    pass


def _describe(A: np.ndarray) -> np.ndarray:
    """The seven statistics of every column of ``A`` -> (7, n_cols).

    Population std; quartiles by linear interpolation at p*(n-1).  Each
    column is copied into a contiguous sorted row before reducing, so the
    result is bitwise independent of both row and column order.
    """
    R = np.sort(np.ascontiguousarray(A.T), axis=1)
    q = np.quantile(R, [0.25, 0.5, 0.75], axis=1)
    return np.vstack([
        np.full(R.shape[0], float(R.shape[1])),
        R.std(axis=1),
        R[:, 0],
        R[:, -1],
        q,
    ])


def represent(X) -> np.ndarray:
    """49-dim state: per-column statistics, then the same statistics per row of those."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
        raise EmptyMatrix(f"cannot represent matrix of shape {X.shape}")
    with np.errstate(over="ignore", invalid="ignore"):
        stage1 = _describe(X)                # (7, n)
        stage2 = _describe(stage1.T)         # (7, 7): column j = stats of stage-1 row j
        out = stage2.T.reshape(-1)
    return np.nan_to_num(out, nan=0.0, posinf=np.finfo(float).max, neginf=-np.finfo(float).max)
