"""Weighted sparse orthogonal semi-NMF (variable clustering step).

Factorizes ``X W ~ U V'`` where ``W = diag(w)``, the columns of ``U`` have
unit sample variance and ``V`` is nonnegative with at most one nonzero per
row, penalized by ``lam * sum|V|``. Plain (unweighted) factorization is the
special case ``w = 1``.

Cluster ids are 0-based. A variable whose row of ``V`` is zero is
"unassigned" and carries the label ``-1``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AllVariablesRemoved,
    DataError,
    DegenerateLatent,
    DimensionMismatch,
    EmptyCluster,
    InvalidPartition,
)

log = logging.getLogger(__name__)

UNASSIGNED = -1


@dataclass
class MembershipMatrix:
    values: np.ndarray  # p x K', nonnegative, <= 1 nonzero per row
    clusters: np.ndarray  # original ids of the K' columns

    @property
    def labels(self):
        """Cluster id of each variable, ``-1`` when its row is zero."""
        V = self.values
        if V.shape[1] == 0:
            return np.full(V.shape[0], UNASSIGNED)
        k = np.argmax(V, axis=1)
        out = self.clusters[k].copy()
        out[V[np.arange(V.shape[0]), k] <= 0] = UNASSIGNED
        return out

    @property
    def n_assigned(self):
        return int(np.count_nonzero(self.values.any(axis=1)))

    def pruned(self):
        keep = self.values.any(axis=0)
        if keep.all():
            return self
        return MembershipMatrix(self.values[:, keep], self.clusters[keep])

    def drop(self, cluster_id):
        keep = self.clusters != cluster_id
        return MembershipMatrix(self.values[:, keep], self.clusters[keep])


@dataclass
class LatentMatrix:
    values: np.ndarray  # n x K'
    clusters: np.ndarray


@dataclass
class SosnmfFit:
    V: MembershipMatrix
    U: LatentMatrix
    lam: float
    objective_trace: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    K_requested: int = 0

    @property
    def labels(self):
        return self.V.labels

    @property
    def K_surviving(self):
        return self.V.values.shape[1]


def _check_partition(partition, K=None):
    labels = np.asarray(partition)
    if labels.ndim != 1 or labels.size == 0:
        raise InvalidPartition("partition must be a non-empty 1-D label vector")
    if not np.issubdtype(labels.dtype, np.integer):
        if not np.all(labels == np.round(labels)):
            raise InvalidPartition("partition labels must be integers")
        labels = labels.astype(int)
    if K is None:
        K = int(labels.max()) + 1
    if labels.min() < 0 or labels.max() >= K:
        raise InvalidPartition(f"partition labels must lie in 0..{K - 1}")
    counts = np.bincount(labels, minlength=K)
    if np.any(counts == 0):
        raise EmptyCluster(int(np.flatnonzero(counts == 0)[0]))
    return labels, K


def init_membership(partition, K=None) -> MembershipMatrix:
    """Binary membership matrix with ``v_jk = 1`` iff variable j starts in cluster k."""
    labels, K = _check_partition(partition, K)
    V = np.zeros((labels.size, K))
    V[np.arange(labels.size), labels] = 1.0
    return MembershipMatrix(V, np.arange(K))


def _latent(Xw, V: MembershipMatrix) -> LatentMatrix:
    Vv = V.values
    norms = (Vv * Vv).sum(axis=0)
    if np.any(norms == 0):
        raise DataError("membership matrix has zero columns; prune it first")
    Ut = (Xw @ Vv) / norms
    n = Xw.shape[0]
    sd = Ut.std(axis=0, ddof=1)
    # size of the combination if its members were uncorrelated
    ref = np.sqrt(((Xw * Xw).sum(axis=0) / (n - 1)) @ (Vv * Vv)) / norms
    bad = (sd <= 1e-10 * ref) | (ref == 0)
    if np.any(bad):
        raise DegenerateLatent(int(V.clusters[np.flatnonzero(bad)[0]]))
    return LatentMatrix(Ut / sd, V.clusters.copy())


def update_latent(X, w, V: MembershipMatrix) -> LatentMatrix:
    """Least-squares latent variables for fixed memberships, rescaled to unit variance.

    Supports are disjoint, so column k is the membership-weighted sum of the
    weighted variables of cluster k divided by ``sum_j v_jk^2``.
    """
    X = np.asarray(X, dtype=float)
    w = np.asarray(w, dtype=float)
    if V.values.shape[0] != X.shape[1] or w.shape != (X.shape[1],):
        raise DimensionMismatch("X, w and V disagree on the number of variables")
    return _latent(X * w, V)


def weighted_correlations(Xw, U: LatentMatrix):
    """``w_j * cor(u_k, x_j)`` for every variable j and latent column k."""
    return (Xw.T @ U.values) / (Xw.shape[0] - 1)


def _membership(C, clusters, lam):
    p, K = C.shape
    V = np.zeros((p, K))
    if K:
        k = np.argmax(C, axis=1)  # lowest index wins ties
        rows = np.arange(p)
        V[rows, k] = np.maximum(C[rows, k] - lam, 0.0)
    return MembershipMatrix(V, clusters.copy())


def update_membership(X, w, U: LatentMatrix, lam) -> MembershipMatrix:
    """Per-variable optimal memberships for fixed latent variables."""
    if lam < 0:
        raise DataError("lambda must be nonnegative")
    X = np.asarray(X, dtype=float)
    w = np.asarray(w, dtype=float)
    return _membership(weighted_correlations(X * w, U), U.clusters, lam)


def objective(X, w, U, V, lam):
    """(1/(2(n-1))) ||XW - UV'||_F^2 + lam * sum_j ||v_j||_1."""
    X = np.asarray(X, dtype=float)
    Uv = U.values if isinstance(U, LatentMatrix) else np.asarray(U, dtype=float)
    Vv = V.values if isinstance(V, MembershipMatrix) else np.asarray(V, dtype=float)
    R = X * np.asarray(w, dtype=float) - Uv @ Vv.T
    return float((R * R).sum() / (2 * (X.shape[0] - 1)) + lam * np.abs(Vv).sum())


def check_standardized(X, tol=1e-8):
    n = X.shape[0]
    if np.max(np.abs(X.mean(axis=0)), initial=0.0) > tol:
        raise DataError("X must have mean-centered columns")
    if np.max(np.abs((X * X).sum(axis=0) / (n - 1) - 1.0), initial=0.0) > tol:
        raise DataError("X must have unit sample variance columns")


def _robust_latent(Xw, V):
    """Latent step that drops clusters whose weighted sum is constant."""
    while True:
        if V.values.shape[1] == 0:
            return None, V
        try:
            return _latent(Xw, V), V
        except DegenerateLatent as exc:
            log.debug("dropping degenerate cluster %d", exc.cluster)
            V = V.drop(exc.cluster)


def fit_sosnmf(X, w, initial_partition, lam, K=None, max_iter=200, tol=1e-8,
               check=True) -> SosnmfFit:
    """Alternate latent and membership updates from a binary initial partition.

    Stops when the label vector (unassigned included) repeats, when the
    relative objective change falls below ``tol``, or after ``max_iter``
    iterations. Raises ``AllVariablesRemoved`` if every row of V becomes zero.
    ``objective_trace[0]`` is the objective of the binary start with its
    latent variables; later entries follow each membership update.
    """
    X = np.asarray(X, dtype=float)
    w = np.asarray(w, dtype=float).ravel()
    if w.shape != (X.shape[1],):
        raise DimensionMismatch("weights must have one entry per column of X")
    if lam < 0:
        raise DataError("lambda must be nonnegative")
    if check:
        check_standardized(X)
    V = init_membership(initial_partition, K)
    K_req = V.values.shape[1]
    if V.values.shape[0] != X.shape[1]:
        raise DimensionMismatch("partition length must equal the number of columns of X")
    Xw = X * w
    trace = []
    prev_labels = None
    converged = False
    U = None
    it = 0
    for it in range(1, max_iter + 1):
        V = V.pruned()
        U, V = _robust_latent(Xw, V)
        if U is None:
            raise AllVariablesRemoved(lam)
        if it == 1:
            trace.append(objective(X, w, U, V, lam))  # binary start, first latents
        V = _membership(weighted_correlations(Xw, U), U.clusters, lam)
        if V.n_assigned == 0:
            raise AllVariablesRemoved(lam)
        trace.append(objective(X, w, U, V, lam))
        if len(trace) > 2 and trace[-1] > trace[-2] * (1 + 1e-12) + 1e-15:
            log.debug("objective increased at iteration %d: %.12g -> %.12g",
                      it, trace[-2], trace[-1])
        labels = V.labels
        if prev_labels is not None and np.array_equal(labels, prev_labels):
            converged = True
            break
        if len(trace) > 2 and abs(trace[-2] - trace[-1]) <= tol * max(abs(trace[-2]), 1e-300):
            converged = True
            break
        prev_labels = labels
    keep = V.values.any(axis=0)
    V = MembershipMatrix(V.values[:, keep], V.clusters[keep])
    U = LatentMatrix(U.values[:, keep], U.clusters[keep])
    return SosnmfFit(V, U, float(lam), trace, it, converged, K_req)


def lambda_max(X, w, initial_partition, K=None):
    """Largest useful sparsity level: max_{j,k} w_j cor(u_k, x_j) after one latent update.

    Initial clusters with a constant weighted sum (e.g. all weights zero) are
    dropped as in ``fit_sosnmf``; 0 is returned when none remain.
    """
    X = np.asarray(X, dtype=float)
    w = np.asarray(w, dtype=float).ravel()
    U, _ = _robust_latent(X * w, init_membership(initial_partition, K))
    if U is None:
        return 0.0
    return float(np.max(weighted_correlations(X * w, U)))
