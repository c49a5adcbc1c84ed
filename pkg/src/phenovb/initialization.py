"""Initial hard assignments for the mixture: k-means, DBSCAN (merged to k) or random.

Labels are 0-based; DBSCAN marks noise with :data:`NOISE`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

NOISE = -1
KMEANS_MAX_ITERS = 300
RANDOM_MAX_REDRAWS = 100


class InitMethod(str, enum.Enum):
    KMEANS = "kmeans"
    DBSCAN = "dbscan"
    RANDOM = "random"


@dataclass(frozen=True)
class InitConfig:
    method: InitMethod = InitMethod.KMEANS
    seed: int = 0
    eps: float | None = None
    min_pts: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "method", InitMethod(self.method))
        if self.method is InitMethod.DBSCAN:
            if self.eps is None or self.min_pts is None:
                raise ValueError("DBSCAN initialisation needs eps and min_pts")
            if not self.eps > 0:
                raise ValueError(f"eps must be positive, got {self.eps}")
            if int(self.min_pts) < 1:
                raise ValueError(f"min_pts must be >= 1, got {self.min_pts}")
        if int(self.seed) < 0:
            raise ValueError("seed must be non-negative")


@dataclass(frozen=True)
class Assignment:
    labels: np.ndarray
    centroids: np.ndarray
    source_cluster_count: int

    @property
    def empty_components(self) -> tuple[int, ...]:
        k = self.centroids.shape[0]
        counts = np.bincount(self.labels, minlength=k)
        return tuple(int(i) for i in np.flatnonzero(counts == 0))


@dataclass(frozen=True)
class DbscanResult:
    labels: np.ndarray
    n_clusters: int
    core: np.ndarray

    @property
    def noise(self) -> np.ndarray:
        return self.labels == NOISE


def _check(data, k=None) -> np.ndarray:
    x = np.asarray(data, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("data must be a non-empty (N, D) array")
    if k is not None:
        if k < 1:
            raise ValueError("k must be positive")
        if k > x.shape[0]:
            raise ValueError(f"k={k} exceeds the number of observations N={x.shape[0]}")
    return x


def _sq_dists(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    return ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)


def _group_means(x: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    out = np.full((k, x.shape[1]), np.nan)
    for j in range(k):
        members = labels == j
        if members.any():
            out[j] = x[members].mean(axis=0)
    return out


def kmeans_plusplus(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding; returns the indices of the chosen rows."""
    n = x.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = ((x - x[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            # every remaining point coincides with a centre
            rest = np.setdiff1d(np.arange(n), chosen)
            idx = int(rng.choice(rest))
        chosen.append(idx)
        d2 = np.minimum(d2, ((x - x[idx]) ** 2).sum(axis=1))
    return np.array(chosen)


def lloyd(x: np.ndarray, centers: np.ndarray, max_iters: int = KMEANS_MAX_ITERS):
    """Lloyd iterations until the assignment stops changing."""
    centers = centers.copy()
    labels = np.argmin(_sq_dists(x, centers), axis=1)
    for _ in range(max_iters):
        for j in range(centers.shape[0]):
            members = labels == j
            if members.any():
                centers[j] = x[members].mean(axis=0)
            else:
                # re-seed an emptied cluster at the worst-fitted point
                far = int(np.argmax(((x - centers[labels]) ** 2).sum(axis=1)))
                centers[j] = x[far]
                labels[far] = j
        new_labels = np.argmin(_sq_dists(x, centers), axis=1)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return labels, centers


def within_ss(x: np.ndarray, labels: np.ndarray) -> float:
    """Within-cluster sum of squared distances to the cluster means."""
    total = 0.0
    for j in np.unique(labels):
        pts = x[labels == j]
        total += float(((pts - pts.mean(axis=0)) ** 2).sum())
    return total


def init_kmeans(data, k: int, seed: int = 0) -> Assignment:
    x = _check(data, k)
    rng = np.random.default_rng(seed)
    start = x[kmeans_plusplus(x, k, rng)]
    labels, _ = lloyd(x, start)
    return Assignment(labels=labels, centroids=_group_means(x, labels, k), source_cluster_count=k)


def _neighbourhoods(x: np.ndarray, eps: float, chunk: int = 1024) -> list[np.ndarray]:
    """Indices within ``eps`` (inclusive) of every row, self included."""
    eps2 = eps * eps
    out = []
    for start in range(0, x.shape[0], chunk):
        # cdist sums squared coordinate differences directly, so boundary
        # points are not misplaced by the |a|^2 + |b|^2 - 2ab expansion
        d2 = cdist(x[start:start + chunk], x, "sqeuclidean")
        rows, cols = np.nonzero(d2 <= eps2)
        out.extend(np.split(cols, np.searchsorted(rows, np.arange(1, d2.shape[0]))))
    return out


def init_dbscan(data, eps: float, min_pts: int) -> DbscanResult:
    """Density clustering; a core point has at least ``min_pts`` points
    (itself included) within distance ``eps``.

    Clusters are grown from core points in row order, so a border point
    reachable from several clusters joins the one discovered first.
    """
    x = _check(data)
    if not eps > 0:
        raise ValueError("eps must be positive")
    if min_pts < 1:
        raise ValueError("min_pts must be >= 1")
    nbrs = _neighbourhoods(x, eps)
    core = np.array([len(nb) >= min_pts for nb in nbrs])
    labels = np.full(x.shape[0], NOISE)
    cluster = 0
    for i in range(x.shape[0]):
        if not core[i] or labels[i] != NOISE:
            continue
        labels[i] = cluster
        stack = [i]
        while stack:
            p = stack.pop()
            for q in nbrs[p]:
                if labels[q] == NOISE:
                    labels[q] = cluster
                    if core[q]:
                        stack.append(q)
        cluster += 1
    return DbscanResult(labels=labels, n_clusters=cluster, core=core)


def merge_to_k(raw: DbscanResult, data, k: int, seed: int = 0) -> Assignment:
    """Coerce a DBSCAN clustering to exactly ``k`` groups.

    Surplus clusters are merged pairwise by nearest centroids (centroid
    linkage); missing ones are created by 2-means splits of the largest
    cluster.  Noise points then join the nearest surviving centroid.
    """
    x = _check(data, k)
    groups = [np.flatnonzero(raw.labels == c) for c in range(raw.n_clusters)]
    groups = [g for g in groups if g.size]
    if not groups:
        groups = [np.arange(x.shape[0])]

    while len(groups) > k:
        cents = np.array([x[g].mean(axis=0) for g in groups])
        d2 = _sq_dists(cents, cents)
        d2[np.diag_indices_from(d2)] = np.inf
        i, j = np.unravel_index(int(np.argmin(d2)), d2.shape)
        i, j = min(i, j), max(i, j)
        groups[i] = np.sort(np.concatenate([groups[i], groups[j]]))
        del groups[j]

    rng = np.random.default_rng(seed)
    while len(groups) < k:
        order = sorted(range(len(groups)), key=lambda g: -groups[g].size)
        splittable = [g for g in order if np.unique(x[groups[g]], axis=0).shape[0] >= 2]
        if splittable:
            g = splittable[0]
            members = groups[g]
            start = x[members][kmeans_plusplus(x[members], 2, rng)]
            sub, _ = lloyd(x[members], start)
            groups[g] = members[sub == 0]
            groups.append(members[sub == 1])
            continue
        assigned = np.concatenate(groups)
        spare = np.setdiff1d(np.arange(x.shape[0]), assigned)
        if spare.size == 0:
            raise ValueError(f"cannot form {k} non-empty clusters from this data")
        cents = np.array([x[g].mean(axis=0) for g in groups])
        far = spare[int(np.argmax(_sq_dists(x[spare], cents).min(axis=1)))]
        groups.append(np.array([far]))

    labels = np.full(x.shape[0], NOISE)
    for c, g in enumerate(groups):
        labels[g] = c
    cents = np.array([x[g].mean(axis=0) for g in groups])
    noise = np.flatnonzero(labels == NOISE)
    if noise.size:
        labels[noise] = np.argmin(_sq_dists(x[noise], cents), axis=1)
    return Assignment(labels=labels, centroids=_group_means(x, labels, k),
                      source_cluster_count=raw.n_clusters)


def init_random(data, k: int, seed: int = 0) -> Assignment:
    x = _check(data, k)
    n = x.shape[0]
    rng = np.random.default_rng(seed)
    for _ in range(RANDOM_MAX_REDRAWS):
        labels = rng.integers(0, k, size=n)
        if np.unique(labels).size == k:
            break
    else:
        labels = rng.permutation(np.arange(n) % k)
    return Assignment(labels=labels, centroids=_group_means(x, labels, k), source_cluster_count=k)


def initialize(data, k: int, config: InitConfig) -> Assignment:
    if config.method is InitMethod.KMEANS:
        return init_kmeans(data, k, config.seed)
    if config.method is InitMethod.RANDOM:
        return init_random(data, k, config.seed)
    raw = init_dbscan(data, config.eps, int(config.min_pts))
    return merge_to_k(raw, data, k, seed=config.seed)
