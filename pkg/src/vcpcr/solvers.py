"""Penalized and unpenalized linear / logistic solvers.

Scaling conventions (all regression inputs are assumed centered, so the
intercept is implicit):

* lasso:  (1/(2n)) ||y - Xb||^2 + delta * ||b||_1
* ridge:  (1/(2n)) ||y - Xb||^2 + delta * ||b||^2, i.e. (X'X + 2n delta I) b = X'y
* logistic: (1/n) NLL(b0, b) + penalty, intercept b0 unpenalized
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import DataError, DimensionMismatch, MaxIterations, SingularSystem

NONE, LASSO, RIDGE = "none", "lasso", "ridge"

LASSO_TOL = 1e-8
LASSO_MAX_SWEEPS = 10_000
SEPARATION_CAP = 1e4


@dataclass
class LinearFit:
    coefficients: np.ndarray
    intercept: float = 0.0
    penalty: str = NONE
    delta: float = 0.0
    loss: float = float("nan")
    iterations: int = 0
    converged: bool = True
    rank_deficient: bool = False
    objective_trace: list = field(default_factory=list, repr=False)

    def predict(self, X):
        return np.asarray(X) @ self.coefficients + self.intercept


@dataclass
class LogisticFit:
    coefficients: np.ndarray
    intercept: float
    converged: bool
    iterations: int
    penalty: str = NONE
    delta: float = 0.0
    separated: bool = False
    loss: float = float("nan")
    objective_trace: list = field(default_factory=list, repr=False)

    def decision_function(self, X):
        return np.asarray(X) @ self.coefficients + self.intercept

    def predict_proba(self, X):
        return sigmoid(self.decision_function(X))


def _as_xy(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"X has {X.shape[0]} rows, y has {y.shape[0]}")
    return X, y


# ---------------------------------------------------------------- OLS

def ols_fit(M, y) -> LinearFit:
    M, y = _as_xy(M, y)
    n, K = M.shape
    coef, _, rank, _ = np.linalg.lstsq(M, y, rcond=None)
    r = y - M @ coef
    return LinearFit(coef, 0.0, NONE, 0.0, float(r @ r) / (2 * n),
                     rank_deficient=bool(rank < K))


# ---------------------------------------------------------------- lasso

def soft_threshold(z, delta):
    return np.sign(z) * np.maximum(np.abs(z) - delta, 0.0)


def lasso_delta_max(X, y):
    """Smallest lasso penalty at which every coefficient is zero."""
    X, y = _as_xy(X, y)
    return float(np.max(np.abs(X.T @ y)) / X.shape[0])


def lasso_objective(X, y, b, delta):
    X, y = _as_xy(X, y)
    r = y - X @ b
    return float(r @ r / (2 * X.shape[0]) + delta * np.abs(b).sum())


@numba.njit(cache=True)
def _lasso_sweep(X, r, b, sq, delta, n):
    p = X.shape[1]
    max_step = 0.0
    for j in range(p):
        if sq[j] == 0.0:
            continue
        old = b[j]
        z = 0.0
        for i in range(n):
            z += X[i, j] * r[i]
        z = z / n + sq[j] * old
        if z > delta:
            new = (z - delta) / sq[j]
        elif z < -delta:
            new = (z + delta) / sq[j]
        else:
            new = 0.0
        d = new - old
        if d != 0.0:
            for i in range(n):
                r[i] -= X[i, j] * d
            b[j] = new
            step = abs(d) * math.sqrt(sq[j])
            if step > max_step:
                max_step = step
    return max_step


@numba.njit(cache=True)
def _lasso_cd(X, y, b, delta, tol, max_sweeps, trace):
    n = X.shape[0]
    p = X.shape[1]
    sq = np.empty(p)
    for j in range(p):
        s = 0.0
        for i in range(n):
            s += X[i, j] * X[i, j]
        sq[j] = s / n
    r = y - X @ b
    scale = math.sqrt(max(y @ y / n, 1e-300))
    obj = 0.5 * (r @ r) / n + delta * np.abs(b).sum()
    trace[0] = obj
    sweeps = 0
    obj_ok = False
    while sweeps < max_sweeps:
        max_step = _lasso_sweep(X, r, b, sq, delta, n)
        sweeps += 1
        new_obj = 0.5 * (r @ r) / n + delta * np.abs(b).sum()
        if sweeps < trace.shape[0]:
            trace[sweeps] = new_obj
        obj_ok = obj - new_obj <= tol * max(abs(obj), 1e-300)
        obj = new_obj
        if obj_ok and max_step <= tol * scale:
            break
    return sweeps, obj, obj_ok


def lasso_fit(X, y, delta, b0=None, tol=LASSO_TOL, max_sweeps=LASSO_MAX_SWEEPS) -> LinearFit:
    """Coordinate-descent lasso; ``b0`` is an optional warm start."""
    X, y = _as_xy(X, y)
    if delta < 0:
        raise DataError("delta must be nonnegative")
    if delta >= lasso_delta_max(X, y):
        # zero is optimal; skip the sweep so rounding cannot leave 1e-16 residues
        b = np.zeros(X.shape[1])
        return LinearFit(b, 0.0, LASSO, float(delta), lasso_objective(X, y, b, delta), 0)
    b = np.zeros(X.shape[1]) if b0 is None else np.array(b0, dtype=float)
    trace = np.full(min(max_sweeps, 2000) + 1, np.nan)
    sweeps, obj, obj_ok = _lasso_cd(np.ascontiguousarray(X), y, b, float(delta),
                                    float(tol), int(max_sweeps), trace)
    if not obj_ok:
        raise MaxIterations(max_sweeps)
    return LinearFit(b, 0.0, LASSO, float(delta), float(obj), int(sweeps),
                     objective_trace=trace[~np.isnan(trace)].tolist())


def lasso_path(X, y, deltas, tol=LASSO_TOL):
    """Warm-started fits along ``deltas`` (processed from largest to smallest)."""
    X, y = _as_xy(X, y)
    deltas = np.asarray(deltas, dtype=float)
    order = np.argsort(-deltas, kind="stable")
    fits = [None] * len(deltas)
    b = np.zeros(X.shape[1])
    for i in order:
        fit = lasso_fit(X, y, deltas[i], b0=b, tol=tol)
        b = fit.coefficients.copy()
        fits[i] = fit
    return fits


# ---------------------------------------------------------------- ridge

def ridge_path(X, y, deltas):
    """Ridge coefficients for every delta, as a (len(deltas), p) array."""
    X, y = _as_xy(X, y)
    n = X.shape[0]
    deltas = np.atleast_1d(np.asarray(deltas, dtype=float))
    if np.any(deltas < 0):
        raise DataError("delta must be nonnegative")
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    Uty = U.T @ y
    tiny = s.max(initial=0.0) * max(X.shape) * np.finfo(float).eps
    out = np.empty((len(deltas), X.shape[1]))
    for i, d in enumerate(deltas):
        if d == 0 and (X.shape[1] > n or np.any(s <= tiny)):
            raise SingularSystem("X'X is singular; ridge needs delta > 0")
        out[i] = Vt.T @ (s * Uty / (s * s + 2 * n * d))
    return out


def ridge_fit(X, y, delta) -> LinearFit:
    X, y = _as_xy(X, y)
    b = ridge_path(X, y, [delta])[0]
    r = y - X @ b
    loss = float(r @ r / (2 * X.shape[0]) + delta * b @ b)
    return LinearFit(b, 0.0, RIDGE, float(delta), loss)


# ---------------------------------------------------------------- logistic

def sigmoid(t):
    t = np.asarray(t, dtype=float)
    return np.exp(-np.logaddexp(0.0, -t))


def logistic_nll(X, y, b0, b):
    X, y = _as_xy(X, y)
    eta = X @ b + b0
    return float(np.sum(np.logaddexp(0.0, eta) - y * eta))


def _penalized(nll, b, penalty, delta, n):
    if penalty == RIDGE:
        return nll / n + delta * (b @ b)
    if penalty == LASSO:
        return nll / n + delta * np.abs(b).sum()
    return nll / n


@numba.njit(cache=True)
def _weighted_lasso_cd(X, z, wts, b0, b, delta, tol, max_sweeps):
    # minimizes (1/(2n)) sum_i w_i (z_i - b0 - x_i'b)^2 + delta ||b||_1
    n, p = X.shape
    wsum = wts.sum()
    sq = np.empty(p)
    for j in range(p):
        s = 0.0
        for i in range(n):
            s += wts[i] * X[i, j] * X[i, j]
        sq[j] = s / n
    r = z - b0 - X @ b
    for sweep in range(max_sweeps):
        max_step = 0.0
        step0 = (wts @ r) / wsum
        b0 += step0
        r -= step0
        max_step = abs(step0)
        for j in range(p):
            if sq[j] == 0.0:
                continue
            old = b[j]
            g = 0.0
            for i in range(n):
                g += wts[i] * X[i, j] * r[i]
            g = g / n + sq[j] * old
            if g > delta:
                new = (g - delta) / sq[j]
            elif g < -delta:
                new = (g + delta) / sq[j]
            else:
                new = 0.0
            d = new - old
            if d != 0.0:
                for i in range(n):
                    r[i] -= X[i, j] * d
                b[j] = new
                step = abs(d) * math.sqrt(sq[j])
                if step > max_step:
                    max_step = step
        if max_step <= tol:
            break
    return b0


def logistic_fit(M, y, penalty=NONE, delta=0.0, max_iter=100, tol=1e-10,
                 max_halvings=20, cap=SEPARATION_CAP) -> LogisticFit:
    """Logistic regression with intercept by IRLS / Newton with step halving.

    ``penalty="lasso"`` uses proximal Newton steps whose inner weighted
    lasso problem is solved by coordinate descent.
    """
    M, y = _as_xy(M, y)
    if not np.all((y == 0) | (y == 1)):
        raise DataError("logistic regression needs a binary {0, 1} response")
    if y.min() == y.max():
        raise DataError("logistic regression needs both classes present")
    if delta < 0:
        raise DataError("delta must be nonnegative")
    n, K = M.shape
    ybar = y.mean()
    b0 = math.log(ybar / (1 - ybar))
    b = np.zeros(K)
    obj = _penalized(logistic_nll(M, y, b0, b), b, penalty, delta, n)
    trace = [obj]
    if penalty == LASSO and delta >= logistic_delta_max(M, y):
        return LogisticFit(b, float(b0), True, 0, penalty, float(delta), False, float(obj), trace)
    A = np.column_stack([np.ones(n), M])
    converged = separated = False
    it = 0
    for it in range(1, max_iter + 1):
        eta = b0 + M @ b
        prob = sigmoid(eta)
        wts = np.maximum(prob * (1 - prob), 1e-10)
        if penalty == LASSO:
            z = eta + (y - prob) / wts
            nb = b.copy()
            nb0 = _weighted_lasso_cd(np.ascontiguousarray(M), z, wts, b0, nb,
                                     float(delta), 1e-12, 10_000)
            d0, d = nb0 - b0, nb - b
        else:
            g = A.T @ (prob - y)
            H = A.T @ (A * wts[:, None])
            if penalty == RIDGE:
                g[1:] += 2 * n * delta * b
                H[1:, 1:] += 2 * n * delta * np.eye(K)
            if np.max(np.abs(g)) <= tol * max(1.0, n):
                converged = True
                it -= 1
                break
            try:
                step = np.linalg.solve(H, -g)
            except np.linalg.LinAlgError:
                step = np.linalg.lstsq(H, -g, rcond=None)[0]
            d0, d = step[0], step[1:]
        t = 1.0
        for _ in range(max_halvings + 1):
            nb0, nb = b0 + t * d0, b + t * d
            new = _penalized(logistic_nll(M, y, nb0, nb), nb, penalty, delta, n)
            if new <= obj + 1e-14 * max(1.0, abs(obj)):
                break
            t *= 0.5
        else:
            converged = True
            break
        moved = max(abs(nb0 - b0), float(np.max(np.abs(nb - b), initial=0.0)))
        b0, b = nb0, nb
        change = obj - new
        obj = new
        trace.append(obj)
        if np.linalg.norm(b) > cap:
            separated = True
            break
        if penalty == LASSO and (moved <= 1e-10 or change <= 1e-14 * max(1.0, abs(obj))):
            converged = True
            break
        if penalty != LASSO and moved <= 1e-12 * max(1.0, np.abs(b).max(initial=0.0)):
            converged = True
            break
    if penalty == NONE and not separated and np.any(b):
        # the likelihood has no maximizer when every point lies on the correct
        # side of the fitted hyperplane; the gradient test stops early there
        margin = (2 * y - 1) * (b0 + M @ b)
        if margin.min() > 0:
            separated = True
            scale = cap / np.linalg.norm(b)
            b0, b = b0 * scale, b * scale
            obj = _penalized(logistic_nll(M, y, b0, b), b, penalty, delta, n)
    if separated:
        warnings.warn("possible complete separation: coefficient norm exceeded "
                      f"{cap:g}; returning the capped fit", RuntimeWarning, stacklevel=2)
    return LogisticFit(b, float(b0), converged, it, penalty, float(delta),
                       separated, float(obj), trace)


def logistic_delta_max(X, y):
    """Smallest logistic-lasso penalty giving an all-zero slope vector."""
    X, y = _as_xy(X, y)
    return float(np.max(np.abs(X.T @ (y - y.mean()))) / X.shape[0])
