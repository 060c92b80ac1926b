"""State extraction and measurement pre-clustering

Single-linkage agglomeration, k-means, and the cardinality labels used by the
centralized filter.
"""
import logging
import math
import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, minimum_spanning_tree
from scipy.spatial import Delaunay, QhullError
from scipy.spatial.distance import cdist
from typing import List, Optional, Tuple

from .types import ClusterResult

logger = logging.getLogger(__name__)

# Up to this many points single linkage (method 'auto') runs the stored-matrix
# agglomeration, which breaks distance ties by lowest index. Larger inputs go
# through a minimum spanning tree.
EXACT_LIMIT = 64

METHODS = ('auto', 'matrix', 'tree')
KMEANS_INITS = ('k-means++', 'farthest')


def _matrix_merges(points: np.ndarray) -> List[Tuple[int, int, float]]:
    """Agglomerate by scanning every pair of active clusters for the closest

    Cubic in the number of points. Clusters are named by their lowest member,
    ties go to the lexicographically first pair.
    """
    n = len(points)
    D = cdist(points, points).tolist()
    active = list(range(n))
    merges = []
    while len(active) > 1:
        best, a, b = math.inf, -1, -1
        for pos, i in enumerate(active):
            row = D[i]
            for j in active[pos + 1:]:
                if row[j] < best:
                    best, a, b = row[j], i, j
        merges.append((a, b, float(best)))
        # single-link update: distance to the union is the smaller one
        row_a, row_b = D[a], D[b]
        for c in active:
            if c != a and c != b:
                row_a[c] = D[c][a] = min(row_a[c], row_b[c])
        active.remove(b)
    return merges


def _tree_merges(points: np.ndarray) -> List[Tuple[int, int, float]]:
    uniq, first, inverse = np.unique(points, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.reshape(-1)
    n_u = len(uniq)

    merges = []
    for p in range(len(points)):
        rep = first[inverse[p]]
        if rep != p:
            merges.append((int(rep), p, 0.0))
    if n_u < 2:
        return merges

    graph = None
    if uniq.shape[1] == 2 and n_u > 3:
        try:
            simplices = Delaunay(uniq).simplices
            pairs = np.vstack([simplices[:, [0, 1]], simplices[:, [1, 2]], simplices[:, [0, 2]]])
            pairs = np.unique(np.sort(pairs, axis=1), axis=0)
            w = np.linalg.norm(uniq[pairs[:, 0]] - uniq[pairs[:, 1]], axis=1)
            graph = coo_matrix((w, (pairs[:, 0], pairs[:, 1])), shape=(n_u, n_u))
        except QhullError:
            logger.debug("Delaunay triangulation failed for %d points; using dense graph", n_u)
    if graph is None:
        graph = cdist(uniq, uniq)

    mst = minimum_spanning_tree(graph).tocoo()
    lo = np.minimum(mst.row, mst.col)
    hi = np.maximum(mst.row, mst.col)
    order = np.lexsort((hi, lo, mst.data))
    for e in order:
        merges.append((int(first[lo[e]]), int(first[hi[e]]), float(mst.data[e])))
    return merges


def _relabel_first_appearance(labels: np.ndarray) -> np.ndarray:
    _, first_idx, inverse = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.empty(len(first_idx), dtype=int)
    rank[np.argsort(first_idx)] = np.arange(len(first_idx))
    return rank[inverse.reshape(-1)]


def cluster_centroids(
        assignments: np.ndarray,
        values: np.ndarray,
        weights: Optional[np.ndarray]=None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (centroids, sizes, masses) for consecutive cluster labels

    Centroids are weighted means of `values`. A cluster whose weights sum to
    zero gets the plain mean.
    """
    k = int(assignments.max()) + 1 if len(assignments) > 0 else 0
    values = values.reshape(len(assignments), -1)
    if weights is None:
        weights = np.ones(len(assignments))
    sizes = np.bincount(assignments, minlength=k)
    masses = np.bincount(assignments, weights=weights, minlength=k)
    use_w = np.where(masses[assignments] > 0, weights, 1.0)
    norm = np.bincount(assignments, weights=use_w, minlength=k)
    centroids = np.column_stack([
        np.bincount(assignments, weights=use_w * values[:, c], minlength=k) / norm
        for c in range(values.shape[1])
    ]) if k > 0 else np.zeros((0, values.shape[1]))
    return centroids, sizes, masses


def single_linkage(
        points: np.ndarray,
        weights: Optional[np.ndarray]=None,
        max_clusters: Optional[int]=None,
        cut_distance: Optional[float]=None,
        values: Optional[np.ndarray]=None,
        method: str='auto') -> ClusterResult:
    """Agglomerative clustering with the single-link (nearest member) distance

    Merging continues while the next merge distance is within `cut_distance`,
    or while there are more than `max_clusters` clusters. Either criterion
    may be disabled by passing None, but not both.

    The merge order comes from the stored-matrix agglomeration ('matrix',
    cubic) or from a minimum spanning tree ('tree'). 'auto' picks the matrix
    up to `EXACT_LIMIT` points. Without distance ties both give the same
    partition.

    Args:
        points: (n, d) points to cluster
        weights: Point weights for the centroids (default all 1)
        max_clusters: Upper bound on the number of clusters
        cut_distance: Largest distance at which clusters are merged
        values: (n, d') values averaged into the centroids (default `points`)
        method: 'auto', 'matrix' or 'tree'

    Returns:
        Clusters labelled in order of their first member
    """
    cap_active = max_clusters is not None
    cut_active = cut_distance is not None
    if not cap_active and not cut_active:
        raise ValueError("single_linkage needs a cluster cap or a cut distance")
    if cap_active and max_clusters < 1:
        raise ValueError(f"Cluster cap must be at least 1, got {max_clusters}")
    if cut_active and not cut_distance > 0:
        raise ValueError(f"Cut distance must be positive, got {cut_distance}")
    if method not in METHODS:
        raise ValueError(f"Unknown single linkage method '{method}'")

    points = np.asarray(points, dtype=float)
    points = points.reshape(len(points), -1)
    if values is None:
        values = points
    values = np.asarray(values, dtype=float).reshape(len(points), -1)
    n = len(points)
    if n == 0:
        return ClusterResult.empty(values.shape[1])

    if method == 'matrix' or (method == 'auto' and n <= EXACT_LIMIT):
        merges = _matrix_merges(points)
    else:
        merges = _tree_merges(points)

    distances = np.array([m[2] for m in merges])
    n_merges = 0
    if cut_active:
        n_merges = int(np.count_nonzero(distances <= cut_distance))
    if cap_active:
        n_merges = max(n_merges, n - max_clusters)
    n_merges = min(max(n_merges, 0), n - 1)

    if n_merges > 0:
        rows = np.array([m[0] for m in merges[:n_merges]])
        cols = np.array([m[1] for m in merges[:n_merges]])
        graph = coo_matrix((np.ones(n_merges), (rows, cols)), shape=(n, n))
        _, labels = connected_components(graph, directed=False)
    else:
        labels = np.arange(n)
    assignments = _relabel_first_appearance(labels)
    centroids, sizes, masses = cluster_centroids(assignments, values, weights)
    return ClusterResult(assignments, centroids, sizes, masses)


def _farthest_centers(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(points)
    centers = np.zeros((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    dmin = np.sum((points - centers[0])**2, axis=1)
    for c in range(1, k):
        centers[c] = points[int(np.argmax(dmin))]
        dmin = np.minimum(dmin, np.sum((points - centers[c])**2, axis=1))
    return centers


def _plus_plus_centers(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    # first center uniform, further ones with probability proportional to the
    # squared distance to the closest center so far
    n = len(points)
    centers = np.zeros((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    dmin = np.sum((points - centers[0])**2, axis=1)
    for c in range(1, k):
        total = dmin.sum()
        if total > 0:
            pick = int(np.searchsorted(np.cumsum(dmin) / total, rng.random(), side='right'))
            pick = min(pick, n - 1)
        else:
            pick = int(rng.integers(n))
        centers[c] = points[pick]
        dmin = np.minimum(dmin, np.sum((points - centers[c])**2, axis=1))
    return centers


def _lloyd(points: np.ndarray, centers: np.ndarray, max_iter: int) -> Tuple[np.ndarray, List[float]]:
    k = len(centers)
    assignments = None
    history = []
    for _ in range(max_iter):
        new = np.argmin(cdist(points, centers, 'sqeuclidean'), axis=1)
        if assignments is not None and np.array_equal(new, assignments):
            break
        assignments = new
        for c in range(k):
            members = points[assignments == c]
            if len(members) > 0:
                centers[c] = members.mean(axis=0)
        history.append(float(np.sum((points - centers[assignments])**2)))
    else:
        logger.warning("k-means did not converge in %d iterations", max_iter)
    return assignments, history


def kmeans(
        points: np.ndarray,
        k: int,
        seed: int,
        values: Optional[np.ndarray]=None,
        max_iter: int=300,
        n_init: int=10,
        init: str='k-means++') -> ClusterResult:
    """Lloyd's k-means, best of `n_init` restarts

    With 'k-means++' seeding further centers are drawn with probability
    proportional to the squared distance to the nearest center so far. With
    'farthest' they are the points farthest from the centers so far; a single
    stray point then always becomes a center. The first center is drawn
    uniformly in both cases.

    Every restart draws from the generator seeded with `seed`, so the result
    is a function of the inputs. The restart with the lowest final inertia
    wins and its inertia per iteration is kept as `history`. Clusters which
    end up empty are dropped.

    Raises:
        ValueError: if k < 1, k exceeds the number of points, n_init < 1 or
            `init` is unknown
    """
    points = np.asarray(points, dtype=float)
    points = points.reshape(len(points), -1)
    n = len(points)
    if k < 1 or k > n:
        raise ValueError(f"Cannot form {k} clusters from {n} points")
    if n_init < 1:
        raise ValueError(f"k-means needs at least one restart, got {n_init}")
    if init not in KMEANS_INITS:
        raise ValueError(f"Unknown k-means initialization '{init}', expected one of {KMEANS_INITS}")
    if values is None:
        values = points
    values = np.asarray(values, dtype=float).reshape(n, -1)

    seeding = _plus_plus_centers if init == 'k-means++' else _farthest_centers
    rng = np.random.default_rng(seed)
    best_assignments, best_history = None, None
    for _ in range(n_init):
        assignments, history = _lloyd(points, seeding(points, k, rng), max_iter)
        if best_history is None or history[-1] < best_history[-1]:
            best_assignments, best_history = assignments, history

    assignments = _relabel_first_appearance(best_assignments)
    centroids, sizes, masses = cluster_centroids(assignments, values)
    return ClusterResult(assignments, centroids, sizes, masses, best_history)


def precluster_measurements(measurements: np.ndarray, gate: float) -> np.ndarray:
    """Label each measurement with the size of its single-linkage cluster

    Measurements closer than `gate` (through chains of such measurements) are
    assumed to stem from the same target. Runs the stored-matrix
    agglomeration whatever the number of measurements.
    """
    if not gate > 0:
        raise ValueError(f"Pre-clustering gate must be positive, got {gate}")
    measurements = np.asarray(measurements, dtype=float).reshape(-1, 2)
    if len(measurements) == 0:
        return np.zeros(0, dtype=int)
    result = single_linkage(measurements, cut_distance=gate, method='matrix')
    return result.sizes[result.assignments]
