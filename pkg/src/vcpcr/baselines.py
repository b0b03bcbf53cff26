"""Competitor methods: cluster representative lasso (CRL) and cluster elastic net (CEN).

Both work on standardized inputs. Columns of ``Z`` are the objects being
clustered; cluster labels are 0-based.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.cluster.hierarchy import cut_tree, linkage

from . import solvers
from .data import CLASSIFICATION, REGRESSION
from .errors import DataError, InvalidPartition, MaxIterations
from .metrics import UNASSIGNED
from .seeding import rng_for

KMEANS, WARD = "kmeans", "ward"
KMEANS_RESTARTS = 10


@dataclass
class Partition:
    labels: np.ndarray
    K: int
    wcss: float = float("nan")
    heights: np.ndarray | None = field(default=None, repr=False)

    @property
    def sizes(self):
        return np.bincount(self.labels, minlength=self.K)


def _relabel(labels):
    """Renumber labels by order of first appearance."""
    _, first, inv = np.unique(labels, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first))
    return order[inv]


# ---------------------------------------------------------------- K-means

def wcss(points, labels, K):
    """Within-cluster sum of squares; ``points`` is (m, d)."""
    total = 0.0
    for k in range(K):
        members = points[labels == k]
        if len(members):
            total += float(((members - members.mean(axis=0)) ** 2).sum())
    return total


def _centers(points, labels, K):
    counts = np.bincount(labels, minlength=K)
    C = np.eye(K)[labels].T @ points
    nz = counts > 0
    C[nz] /= counts[nz, None]
    return C, counts


def _lloyd(points, labels, K, max_iter=300):
    """Lloyd iterations from an initial assignment; never increases WCSS."""
    labels = labels.copy()
    sqn = (points * points).sum(axis=1)
    rows = np.arange(points.shape[0])
    for _ in range(max_iter):
        C, counts = _centers(points, labels, K)
        D = sqn[:, None] - 2.0 * points @ C.T + (C * C).sum(axis=1)
        for k in np.flatnonzero(counts == 0):
            # reseed an empty cluster with the point farthest from its centre
            d_own = D[rows, labels].copy()
            d_own[counts[labels] <= 1] = -np.inf
            j = int(np.argmax(d_own))
            counts[labels[j]] -= 1
            labels[j] = k
            counts[k] = 1
            C, _ = _centers(points, labels, K)
            D = sqn[:, None] - 2.0 * points @ C.T + (C * C).sum(axis=1)
        best = np.argmin(D, axis=1)
        better = D[rows, best] < D[rows, labels] - 1e-12 * (1.0 + np.abs(D[rows, labels]))
        if not better.any():
            break
        labels[better] = best[better]
    return labels


def _forgy(points, K, rng):
    m = points.shape[0]
    centers = points[rng.choice(m, size=K, replace=False)]
    sqn = (points * points).sum(axis=1)
    D = sqn[:, None] - 2.0 * points @ centers.T + (centers * centers).sum(axis=1)
    return np.argmin(D, axis=1)


def kmeans_columns(Z, K, seed=0, n_restarts=KMEANS_RESTARTS, init_labels=None) -> Partition:
    """K-means on the columns of ``Z`` (Euclidean), best of ``n_restarts``.

    ``init_labels`` adds one extra run started from that assignment; the
    returned WCSS is then never above the WCSS of ``init_labels``.
    """
    Z = np.asarray(Z, dtype=float)
    points = Z.T
    p = points.shape[0]
    if not 1 <= K <= p:
        raise DataError(f"K must lie in 1..{p}")
    rng = rng_for(seed, "kmeans-restarts")
    candidates = []
    if init_labels is not None:
        init = np.asarray(init_labels)
        if init.shape != (p,) or init.min() < 0 or init.max() >= K:
            raise InvalidPartition("init_labels must assign every column to 0..K-1")
        candidates.append(_lloyd(points, init, K))
    for _ in range(n_restarts):
        candidates.append(_lloyd(points, _forgy(points, K, rng), K))
    scores = [wcss(points, lab, K) for lab in candidates]
    i = int(np.argmin(scores))
    return Partition(_relabel(candidates[i]) if init_labels is None else candidates[i],
                     K, scores[i])


# ---------------------------------------------------------------- Ward

def ward_hac(Z, K) -> Partition:
    """Ward agglomerative clustering of the columns of ``Z`` cut at K clusters.

    ``heights`` are scipy's Ward merge heights, ``sqrt(2 * increase in WCSS)``.
    """
    Z = np.asarray(Z, dtype=float)
    p = Z.shape[1]
    if not 1 <= K <= p:
        raise DataError(f"K must lie in 1..{p}")
    if p == 1:
        return Partition(np.zeros(1, dtype=int), 1, 0.0, np.zeros(0))
    tree = linkage(Z.T, method="ward")
    labels = _relabel(cut_tree(tree, n_clusters=K).ravel())
    return Partition(labels, K, wcss(Z.T, labels, K), tree[:, 2].copy())


# ---------------------------------------------------------------- CRL

@dataclass
class CrlFit:
    partition: Partition
    M: np.ndarray
    a: np.ndarray
    b: np.ndarray
    delta: float
    intercept: float = 0.0
    task: str = REGRESSION

    @property
    def cluster_sizes(self):
        return self.partition.sizes

    @property
    def model_size(self):
        return int(self.cluster_sizes[self.a != 0].sum())

    @property
    def labels(self):
        """Cluster labels of variables in selected clusters, ``-1`` elsewhere."""
        lab = self.partition.labels.copy()
        lab[self.a[lab] == 0] = UNASSIGNED
        return lab

    def decision_function(self, Z):
        return np.asarray(Z) @ self.b + self.intercept

    def to_dict(self):
        return {"partition": self.partition.labels, "cluster_sizes": self.cluster_sizes,
                "a": self.a, "b": self.b, "delta": self.delta,
                "intercept": self.intercept, "K_requested": self.partition.K,
                "labels": self.labels}


def cluster_columns(Z, clusterer, K, seed=0):
    if clusterer == KMEANS:
        return kmeans_columns(Z, K, seed)
    if clusterer == WARD:
        return ward_hac(Z, K)
    raise DataError(f"unknown clusterer {clusterer!r}")


def centroids(Z, partition: Partition):
    C, counts = _centers(np.asarray(Z).T, partition.labels, partition.K)
    return C.T


def crl_from_partition(Z, y, partition, deltas, task=REGRESSION):
    """CRL fits for several lasso penalties sharing one column partition."""
    M = centroids(Z, partition)
    sizes = partition.sizes
    fits = []
    if task == CLASSIFICATION:
        for d in deltas:
            lf = solvers.logistic_fit(M, y, penalty=solvers.LASSO, delta=d)
            a = lf.coefficients
            fits.append(CrlFit(partition, M, a, (a / sizes)[partition.labels], d,
                               lf.intercept, task))
        return fits
    for d, lf in zip(deltas, solvers.lasso_path(M, y, deltas)):
        a = lf.coefficients
        fits.append(CrlFit(partition, M, a, (a / sizes)[partition.labels], d))
    return fits


def crl_delta_max(M, y, task=REGRESSION):
    if task == CLASSIFICATION:
        return solvers.logistic_delta_max(M, y)
    return solvers.lasso_delta_max(M, y)


def crl_fit(Z, y, clusterer, K, delta, seed=0, task=REGRESSION) -> CrlFit:
    """Cluster the columns, average each cluster, then lasso on the centroids."""
    if delta < 0:
        raise DataError("delta must be nonnegative")
    partition = cluster_columns(Z, clusterer, K, seed)
    return crl_from_partition(Z, y, partition, [delta], task)[0]


# ---------------------------------------------------------------- CEN

@dataclass
class CenFit:
    b: np.ndarray
    partition: Partition
    delta: float
    lam: float
    objective_trace: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False

    @property
    def model_size(self):
        return int(np.count_nonzero(self.b))

    @property
    def labels(self):
        lab = self.partition.labels.copy()
        lab[self.b == 0] = UNASSIGNED
        return lab

    def decision_function(self, Z):
        return np.asarray(Z) @ self.b

    def to_dict(self):
        return {"b": self.b, "partition": self.partition.labels, "delta": self.delta,
                "lambda": self.lam, "K_requested": self.partition.K,
                "labels": self.labels, "objective_trace": self.objective_trace,
                "iterations": self.iterations, "converged": self.converged}


def cen_objective(Z, y, b, labels, K, delta, lam):
    """0.5||y - Zb||^2 + delta ||b||_1 + (lam/2) * WCSS of the columns z_j b_j.

    The lam/2 factor makes the closed-form coordinate update exact.
    """
    Z = np.asarray(Z, dtype=float)
    r = y - Z @ b
    return float(0.5 * r @ r + delta * np.abs(b).sum()
                 + 0.5 * lam * wcss((Z * b).T, labels, K))


@numba.njit(cache=True)
def _cen_cd(G, c, b, labels, sizes, delta, lam, tol, max_sweeps):
    p = G.shape[0]
    K = sizes.shape[0]
    Gb = G @ b
    GB = np.zeros((p, K))
    for l in range(p):
        if b[l] != 0.0:
            for i in range(p):
                GB[i, labels[l]] += G[i, l] * b[l]
    scale = 0.0
    for j in range(p):
        scale = max(scale, G[j, j])
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        max_step = 0.0
        for j in range(p):
            gjj = G[j, j]
            if gjj == 0.0:
                continue
            k = labels[j]
            pk = sizes[k]
            old = b[j]
            z = c[j] - Gb[j] + gjj * old
            z += lam / pk * (GB[j, k] - gjj * old)
            if z > delta:
                new = (z - delta)
            elif z < -delta:
                new = (z + delta)
            else:
                new = 0.0
            new /= gjj * (1.0 + lam * (pk - 1.0) / pk)
            d = new - old
            if d != 0.0:
                for i in range(p):
                    Gb[i] += G[i, j] * d
                    GB[i, k] += G[i, j] * d
                b[j] = new
                step = abs(d) * np.sqrt(gjj)
                if step > max_step:
                    max_step = step
        if max_step <= tol:
            break
    return sweeps


def cen_fit(Z, y, K, delta, lam, seed=0, initial_partition=None, max_outer=100,
            tol=1e-8, n_restarts=KMEANS_RESTARTS, initial_coefficients=None) -> CenFit:
    """Alternate coordinate descent over b and K-means on the columns z_j b_j.

    ``initial_coefficients`` warm-starts b (zeros by default), e.g. from the
    fit at the previous penalty of a path.
    """
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if delta < 0 or lam < 0:
        raise DataError("delta and lambda must be nonnegative")
    n, p = Z.shape
    if not 1 <= K <= p:
        raise DataError(f"K must lie in 1..{p}")
    if initial_partition is None:
        from .cv import random_balanced_partition

        labels = random_balanced_partition(p, K, seed).labels
    else:
        labels = np.asarray(initial_partition).copy()
    G = np.ascontiguousarray(Z.T @ Z)
    c = Z.T @ y
    b = np.zeros(p) if initial_coefficients is None else np.array(initial_coefficients, float)
    cd_tol = 1e-10 * max(1.0, float(np.sqrt(y @ y)))
    trace = [cen_objective(Z, y, b, labels, K, delta, lam)]
    converged = False
    it = 0
    for it in range(1, max_outer + 1):
        sizes = np.bincount(labels, minlength=K).astype(float)
        sweeps = _cen_cd(G, c, b, labels.astype(np.int64), sizes, float(delta),
                         float(lam), cd_tol, 100_000)
        if sweeps >= 100_000:
            raise MaxIterations(100_000)
        trace.append(cen_objective(Z, y, b, labels, K, delta, lam))
        if not b.any():
            converged = True
            break
        part = kmeans_columns(Z * b, K, seed=seed + it, n_restarts=n_restarts,
                              init_labels=labels)
        labels = part.labels
        trace.append(cen_objective(Z, y, b, labels, K, delta, lam))
        if abs(trace[-3] - trace[-1]) <= tol * max(abs(trace[-3]), 1e-300):
            converged = True
            break
    part = Partition(labels, K, wcss((Z * b).T, labels, K))
    return CenFit(b, part, float(delta), float(lam), trace, it, converged)


def cen_delta_max(Z, y):
    """Smallest CEN sparsity penalty with an all-zero solution (unnormalized loss)."""
    return float(np.max(np.abs(np.asarray(Z).T @ np.asarray(y))))
