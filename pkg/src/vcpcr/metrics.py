"""Prediction error, model size, support recovery and pairwise cluster recovery."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DimensionMismatch

UNASSIGNED = -1


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self):
        return self.tp + self.tn + self.fp + self.fn


@dataclass
class MetricReport:
    msep: float
    model_size: int
    support_mcc: float | None = None
    cluster_mcc: float | None = None

    def to_dict(self):
        return asdict(self)


def msep(y_true, y_pred):
    y_true = np.asarray(y_true, dtype=float).ravel()
    y_pred = np.asarray(y_pred, dtype=float).ravel()
    if y_true.shape != y_pred.shape:
        raise DimensionMismatch("y_true and y_pred must have equal length")
    if y_true.size == 0:
        raise DimensionMismatch("need at least one test observation")
    d = y_true - y_pred
    return float(d @ d / d.size)


def model_size(b=None, a=None, cluster_sizes=None):
    """Number of active variables.

    Per-variable form ``||b||_0`` when ``b`` is given, otherwise the
    per-cluster form ``sum_k p_k [a_k != 0]``.
    """
    if b is not None:
        return int(np.count_nonzero(np.asarray(b)))
    a = np.asarray(a)
    sizes = np.asarray(cluster_sizes)
    if a.shape != sizes.shape:
        raise DimensionMismatch("a and cluster_sizes must have equal length")
    return int(sizes[a != 0].sum())


def mcc(counts: ConfusionCounts):
    tp, tn, fp, fn = (float(v) for v in (counts.tp, counts.tn, counts.fp, counts.fn))
    denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if denom == 0:
        return 0.0
    return (tp * tn - fp * fn) / math.sqrt(denom)


def confusion(pred, truth):
    pred = np.asarray(pred, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    if pred.shape != truth.shape:
        raise DimensionMismatch("prediction and truth must have equal length")
    return ConfusionCounts(
        int(np.sum(pred & truth)), int(np.sum(~pred & ~truth)),
        int(np.sum(pred & ~truth)), int(np.sum(~pred & truth)))


def support_mcc(b_hat, b_true):
    return mcc(confusion(np.asarray(b_hat) != 0, np.asarray(b_true) != 0))


def _pairs(counts):
    counts = np.asarray(counts, dtype=np.int64)
    return int((counts * (counts - 1) // 2).sum())


def pair_counts(labels_hat, labels_true, link_unassigned=False) -> ConfusionCounts:
    """Confusion counts over all unordered variable pairs.

    A pair is predicted positive when both variables carry the same
    predicted label; variables labelled ``-1`` are unassigned and never
    linked unless ``link_unassigned`` is set, in which case they form one
    extra cluster. Unassigned entries of ``labels_true`` are treated the same
    way.
    """
    h = np.asarray(labels_hat).ravel()
    t = np.asarray(labels_true).ravel()
    if h.shape != t.shape:
        raise DimensionMismatch("label vectors must have equal length")
    p = h.size
    total = p * (p - 1) // 2
    if link_unassigned:
        h_keep = np.ones(p, dtype=bool)
    else:
        h_keep = h != UNASSIGNED
    t_keep = t != UNASSIGNED
    _, h_idx = np.unique(h, return_inverse=True)
    _, t_idx = np.unique(t, return_inverse=True)
    pred_pos = _pairs(np.bincount(h_idx[h_keep]))
    true_pos = _pairs(np.bincount(t_idx[t_keep]))
    both = h_keep & t_keep
    table = np.zeros((h_idx.max() + 1, t_idx.max() + 1), dtype=np.int64)
    np.add.at(table, (h_idx[both], t_idx[both]), 1)
    tp = _pairs(table)
    fp = pred_pos - tp
    fn = true_pos - tp
    return ConfusionCounts(tp, total - tp - fp - fn, fp, fn)


def cluster_pair_mcc(labels_hat, labels_true, link_unassigned=False):
    return mcc(pair_counts(labels_hat, labels_true, link_unassigned))


def classification_mcc(y_true, y_pred):
    return mcc(confusion(np.asarray(y_pred) == 1, np.asarray(y_true) == 1))
