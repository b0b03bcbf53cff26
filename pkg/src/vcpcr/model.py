"""End-to-end VC-PCR: weights, supervised clustering, latent-variable model."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import solvers
from .data import (
    CLASSIFICATION,
    REGRESSION,
    Dataset,
    apply_standardization,
    standardize,
    standardize_response,
)
from .errors import DataError, DimensionMismatch
from .sosnmf import SosnmfFit, fit_sosnmf
from .sosnmf import lambda_max as _lambda_max

IDENTITY, LASSO, RIDGE = "identity", "lasso", "ridge"


@dataclass(frozen=True)
class WeightScheme:
    kind: str = RIDGE
    delta: float = 0.0

    def __post_init__(self):
        if self.kind not in (IDENTITY, LASSO, RIDGE):
            raise DataError(f"unknown weight scheme {self.kind!r}")
        if self.delta < 0:
            raise DataError("delta must be nonnegative")

    def to_dict(self):
        return {"kind": self.kind, "delta": self.delta}


def compute_weights(X, y, scheme: WeightScheme, task=REGRESSION):
    """Diagonal of the supervision matrix.

    ``X`` standardized; ``y`` standardized for regression, binary for
    classification (penalized logistic loss is used there).
    """
    X = np.asarray(X, dtype=float)
    if scheme.kind == IDENTITY:
        return np.ones(X.shape[1])
    if task == CLASSIFICATION:
        fit = solvers.logistic_fit(X, y, penalty=scheme.kind, delta=scheme.delta)
        return fit.coefficients
    if scheme.kind == LASSO:
        return solvers.lasso_fit(X, y, scheme.delta).coefficients
    return solvers.ridge_fit(X, y, scheme.delta).coefficients


def lambda_max(X, w, initial_partition, K=None):
    return _lambda_max(X, w, initial_partition, K)


@dataclass
class VcpcrFit:
    weights: np.ndarray
    sosnmf: SosnmfFit
    M: np.ndarray
    a: np.ndarray
    b: np.ndarray
    task: str
    scheme: WeightScheme
    x_center: np.ndarray
    x_scale: np.ndarray
    y_center: float = 0.0
    y_scale: float = 1.0
    intercept: float = 0.0
    rank_deficient: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def V(self):
        return self.sosnmf.V.values

    @property
    def labels(self):
        return self.sosnmf.labels

    @property
    def model_size(self):
        return int(np.count_nonzero(self.b))

    def decision_function(self, Z):
        """Linear predictor on the standardized scale for standardized rows ``Z``."""
        return np.asarray(Z) @ self.b + self.intercept

    def to_dict(self):
        V = self.sosnmf.V
        rows, cols = np.nonzero(V.values)
        return {
            "method": f"vcpcr-{self.scheme.kind}",
            "scheme": self.scheme.to_dict(),
            "task": self.task,
            "lambda": self.sosnmf.lam,
            "K_requested": self.sosnmf.K_requested,
            "K_surviving": self.sosnmf.K_surviving,
            "weights": self.weights,
            "V": [[int(j), int(V.clusters[k]), float(V.values[j, k])]
                  for j, k in zip(rows, cols)],
            "clusters": V.clusters,
            "labels": self.labels,
            "a": self.a,
            "b": self.b,
            "intercept": self.intercept,
            "objective_trace": self.sosnmf.objective_trace,
            "iterations": self.sosnmf.iterations,
            "converged": self.sosnmf.converged,
            "rank_deficient": self.rank_deficient,
            "x_center": self.x_center,
            "x_scale": self.x_scale,
            "y_center": self.y_center,
            "y_scale": self.y_scale,
        }


def fit_standardized(Z, y, w, initial_partition, lam, task=REGRESSION, K=None,
                     scheme=None, max_iter=200):
    """Steps 1 and 2 on already-standardized inputs.

    Returns ``(sosnmf_fit, M, a, intercept, b, rank_deficient)``.
    """
    sfit = fit_sosnmf(Z, w, initial_partition, lam, K=K, max_iter=max_iter, check=False)
    Vv = sfit.V.values
    M = Z @ Vv
    if task == CLASSIFICATION:
        lfit = solvers.logistic_fit(M, y)
        a, intercept, deficient = lfit.coefficients, lfit.intercept, lfit.separated
    else:
        ofit = solvers.ols_fit(M, y)
        a, intercept, deficient = ofit.coefficients, 0.0, ofit.rank_deficient
    return sfit, M, a, intercept, Vv @ a, deficient


def fit_vcpcr(dataset: Dataset, scheme: WeightScheme, K, initial_partition, lam,
              max_iter=200) -> VcpcrFit:
    xs = standardize(dataset.X)
    ys = standardize_response(dataset.y, dataset.task)
    w = compute_weights(xs.values, ys.values, scheme, dataset.task)
    sfit, M, a, b0, b, deficient = fit_standardized(
        xs.values, ys.values, w, initial_partition, lam, dataset.task, K, scheme, max_iter)
    return VcpcrFit(w, sfit, M, a, b, dataset.task, scheme, xs.center, xs.scale,
                    ys.center, ys.scale, b0, deficient)


def predict(fit: VcpcrFit, X_new):
    """Original-scale predictions (regression) or class-1 probabilities."""
    X_new = np.asarray(X_new, dtype=float)
    if X_new.ndim != 2 or X_new.shape[1] != fit.b.shape[0]:
        raise DimensionMismatch(f"expected {fit.b.shape[0]} columns")
    Z = apply_standardization(X_new, fit.x_center, fit.x_scale)
    eta = fit.decision_function(Z)
    if fit.task == CLASSIFICATION:
        return solvers.sigmoid(eta)
    return fit.y_center + fit.y_scale * eta
