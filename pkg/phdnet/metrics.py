"""OSPA miss-distance between finite point sets
"""
from dataclasses import dataclass
import math
import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist
from typing import Tuple


@dataclass(frozen=True)
class OspaParams(object):
    """Cut-off `c` (m) and order `p` of the OSPA metric"""
    c: float = 2.0
    p: float = 2.0

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"OSPA cut-off must be positive, got {self.c}")
        if not self.p >= 1:
            raise ValueError(f"OSPA order must be at least 1, got {self.p}")


def optimal_assignment(cost: np.ndarray) -> Tuple[np.ndarray, np.ndarray, float]:
    """Minimum-cost one-to-one assignment of the smaller side of a cost matrix

    Returns:
        (row indices, column indices, total cost)
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2:
        raise ValueError(f"Cost matrix must be 2-dimensional, got shape {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise ValueError("Cost matrix must be finite")
    rows, cols = linear_sum_assignment(cost)
    return rows, cols, float(cost[rows, cols].sum())


def _as_points(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        return np.zeros((0, 2))
    return X.reshape(len(X), -1)[:, 0:2]


def ospa(X, Y, params: OspaParams=OspaParams()) -> float:
    """OSPA distance between two point sets

    Only the first two columns (positions) of each set are used. With
    m = |X| <= n = |Y|:

    .. code-block:: text

        d = ( (min over assignments sum min(c, dist)^p + c^p (n - m)) / n )^(1/p)

    Two empty sets are at distance 0.
    """
    X = _as_points(X)
    Y = _as_points(Y)
    m = len(X)
    n = len(Y)
    if m > n:
        X, Y = Y, X
        m, n = n, m
    if n == 0:
        return 0.0
    c, p = params.c, params.p
    if m == 0:
        return float(c)
    cost = np.minimum(c, cdist(X, Y))**p
    rows, cols, _ = optimal_assignment(cost)
    # fsum keeps the result independent of point order
    local = math.fsum(cost[rows, cols])
    d = ((local + c**p * (n - m)) / n)**(1.0 / p)
    return float(min(d, c))


def scaled_squared_ospa(truth, estimates, params: OspaParams=OspaParams()) -> float:
    """Number of true targets times the squared OSPA distance
    """
    n_tgt = len(_as_points(truth))
    if n_tgt == 0:
        return 0.0
    return n_tgt * ospa(truth, estimates, params)**2
