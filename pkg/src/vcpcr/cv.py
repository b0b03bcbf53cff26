"""Nested cross-validation over hyperparameter grids.

For each outer fold the remaining samples are split into inner folds. Every
inner training set is standardized on its own and the held-out inner fold is
transformed with those parameters. All hyperparameters except the one that
controls model size (``lambda`` for VC-PCR, ``delta`` for CRL and CEN) are
selected by mean inner error, the model is refit on the whole outer training
set and scored on the outer fold. Scores are averaged over outer folds, then
over random initializations, separately for each value of the fixed
hyperparameter.

Data-dependent grids are described by ratios: ``lambda / lambda_max`` for
VC-PCR and ``delta / delta_max`` for the lasso-type penalties, so a "fixed
hyperparameter value" means the same grid position in every fold.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import baselines, solvers
from .data import (
    CLASSIFICATION,
    REGRESSION,
    Dataset,
    apply_standardization,
    standardize,
    standardize_response,
)
from .errors import DataError, ModelError, TooFewSamples
from .files import dumps
from .metrics import classification_mcc, cluster_pair_mcc, msep, support_mcc
from .model import compute_weights, fit_standardized, WeightScheme
from .seeding import child_seed, rng_for
from .sosnmf import lambda_max

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GridSpec:
    n_lambda: int = 10
    lambda_min_ratio: float = 0.01
    n_delta: int = 10
    delta_min_ratio: float = 1e-3
    ridge_delta_range: tuple = (1e-3, 1e2)
    cen_lambda_range: tuple = (1e-2, 1e2)
    K_grid: tuple = (4, 5, 6)
    n_inits: int = 5
    outer_folds: int = 10
    inner_folds: int = 5
    seed: int = 0

    def __post_init__(self):
        if min(self.n_lambda, self.n_delta) < 1 or not self.K_grid:
            raise DataError("grids must be non-empty")
        if min(self.outer_folds, self.inner_folds) < 2:
            raise DataError("fold counts must be at least 2")
        if self.n_inits < 1:
            raise DataError("n_inits must be at least 1")
        object.__setattr__(self, "K_grid", tuple(int(k) for k in self.K_grid))
        object.__setattr__(self, "ridge_delta_range", tuple(self.ridge_delta_range))
        object.__setattr__(self, "cen_lambda_range", tuple(self.cen_lambda_range))

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def to_dict(self):
        return asdict(self)

    def lambda_ratios(self):
        return np.geomspace(1.0, self.lambda_min_ratio, self.n_lambda)

    def delta_ratios(self):
        return np.geomspace(1.0, self.delta_min_ratio, self.n_delta)

    def ridge_deltas(self):
        lo, hi = self.ridge_delta_range
        return np.geomspace(hi, lo, self.n_delta)

    def cen_lambdas(self):
        lo, hi = self.cen_lambda_range
        return np.geomspace(lo, hi, self.n_lambda)


@dataclass
class BenchmarkRow:
    method: str
    fixed_hp_name: str
    fixed_hp_value: float
    model_size: float
    msep: float
    support_mcc: float | None
    cluster_mcc: float | None
    cluster_mcc_linked: float | None
    n_folds: int
    n_inits: int
    dataset: str = ""
    class_mcc: float | None = None

    def to_dict(self):
        return asdict(self)


@dataclass
class CellModel:
    """A fitted model on standardized inputs, reduced to what scoring needs."""
    b: np.ndarray
    intercept: float
    labels: np.ndarray
    size: int

    def decision_function(self, Z):
        return Z @ self.b + self.intercept


def make_folds(n, k, seed):
    """``k`` disjoint sorted index arrays covering ``0..n-1``, sizes within one."""
    if k < 1 or k > n:
        raise TooFewSamples(f"cannot split {n} samples into {k} folds")
    perm = rng_for(seed, "folds").permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k)]


def random_balanced_partition(p, K, seed):
    """Uniformly shuffled labels ``0..K-1`` with cluster sizes within one."""
    if not 1 <= K <= p:
        raise DataError(f"K must lie in 1..{p}")
    labels = rng_for(seed, "partitions").permutation(np.arange(p) % K)
    return baselines.Partition(labels, K)


def lambda_grid_for(Z, w, partition, n=10, min_ratio=0.01):
    """``n`` geometric values from lambda_max down to ``min_ratio * lambda_max``."""
    labels = partition.labels if isinstance(partition, baselines.Partition) else partition
    lm = lambda_max(Z, w, labels)
    return np.geomspace(lm, lm * min_ratio, n)


# ---------------------------------------------------------------- methods

class _Context:
    """Standardized training data plus per-training-set caches."""

    def __init__(self, dataset: Dataset, rows, grids: GridSpec, seed):
        self.rows = rows
        self.xs = standardize(dataset.X[rows])
        self.ys = standardize_response(dataset.y[rows], dataset.task)
        self.Z = self.xs.values
        self.y = self.ys.values
        self.task = dataset.task
        self.grids = grids
        self.seed = seed
        self.cache = {}

    def transform(self, dataset, rows):
        Z = apply_standardization(dataset.X[rows], self.xs.center, self.xs.scale)
        y = dataset.y[rows]
        if self.task == REGRESSION:
            y = (y - self.ys.center) / self.ys.scale
        return Z, y

    def partition(self, K, init):
        key = ("partition", K, init)
        if key not in self.cache:
            s = child_seed(self.seed, f"partition/K={K}/init={init}")
            self.cache[key] = random_balanced_partition(self.Z.shape[1], K, s).labels
        return self.cache[key]

    def null_model(self):
        p = self.Z.shape[1]
        b0 = 0.0
        if self.task == CLASSIFICATION:
            m = self.y.mean()
            b0 = float(np.log(m / (1 - m)))
        return CellModel(np.zeros(p), b0, np.full(p, -1), 0)


class VcpcrMethod:
    fixed_hp = "lambda/lambda_max"

    def __init__(self, kind):
        if kind not in ("ridge", "lasso", "identity"):
            raise DataError(f"unknown VC-PCR weight scheme {kind!r}")
        self.kind = kind
        self.name = f"vcpcr-{kind}"

    def fixed_values(self, grids):
        return grids.lambda_ratios()

    def combos(self, grids):
        Ks = sorted(grids.K_grid)
        if self.kind == "identity":
            return [{"K": K} for K in Ks]
        # larger delta first: preferred on ties
        return [{"delta_index": d, "K": K} for d in range(grids.n_delta) for K in Ks]

    def n_inits(self, grids):
        return grids.n_inits

    def _weights(self, ctx, di):
        key = ("weights", di)
        if key in ctx.cache:
            return ctx.cache[key]
        g = ctx.grids
        if self.kind == "ridge":
            deltas = g.ridge_deltas()
        else:
            if ctx.task == CLASSIFICATION:
                dmax = solvers.logistic_delta_max(ctx.Z, ctx.y)
            else:
                dmax = solvers.lasso_delta_max(ctx.Z, ctx.y)
            deltas = dmax * g.delta_ratios()
        if ctx.task == REGRESSION and self.kind == "ridge":
            W = solvers.ridge_path(ctx.Z, ctx.y, deltas)
        elif ctx.task == REGRESSION:
            W = np.array([f.coefficients for f in solvers.lasso_path(ctx.Z, ctx.y, deltas)])
        else:
            W = np.array([compute_weights(ctx.Z, ctx.y, WeightScheme(self.kind, d), ctx.task)
                          for d in deltas])
        for i, d in enumerate(deltas):
            ctx.cache[("weights", i)] = W[i]
            ctx.cache[("delta", i)] = float(d)
        return ctx.cache[key]

    def path(self, ctx, combo, init):
        ratios = self.fixed_values(ctx.grids)
        K = combo["K"]
        part = ctx.partition(K, init)
        if self.kind == "identity":
            w = np.ones(ctx.Z.shape[1])
        else:
            w = self._weights(ctx, combo["delta_index"])
        try:
            lm = lambda_max(ctx.Z, w, part, K)
        except ModelError:
            return [None] * len(ratios)
        if not lm > 0:
            return [None] * len(ratios)
        out = []
        for r in ratios:
            try:
                sfit, _, a, b0, b, _ = fit_standardized(ctx.Z, ctx.y, w, part, lm * r, ctx.task, K)
            except ModelError:
                out.append(None)
                continue
            out.append(CellModel(b, b0, sfit.labels, int(np.count_nonzero(b))))
        return out


class CrlMethod:
    fixed_hp = "delta/delta_max"

    def __init__(self, clusterer):
        if clusterer not in (baselines.KMEANS, baselines.WARD):
            raise DataError(f"unknown CRL clusterer {clusterer!r}")
        self.clusterer = clusterer
        self.name = f"crl-{clusterer}"

    def fixed_values(self, grids):
        return grids.delta_ratios()

    def combos(self, grids):
        return [{"K": K} for K in sorted(grids.K_grid)]

    def n_inits(self, grids):
        return grids.n_inits if self.clusterer == baselines.KMEANS else 1

    def path(self, ctx, combo, init):
        K = combo["K"]
        key = ("crl-partition", self.clusterer, K, init)
        if key not in ctx.cache:
            s = child_seed(ctx.seed, f"kmeans/K={K}/init={init}")
            ctx.cache[key] = baselines.cluster_columns(ctx.Z, self.clusterer, K, s)
        part = ctx.cache[key]
        M = baselines.centroids(ctx.Z, part)
        dmax = baselines.crl_delta_max(M, ctx.y, ctx.task)
        deltas = dmax * self.fixed_values(ctx.grids)
        try:
            fits = baselines.crl_from_partition(ctx.Z, ctx.y, part, deltas, ctx.task)
        except ModelError:
            return [None] * len(deltas)
        return [CellModel(f.b, f.intercept, f.labels, f.model_size) for f in fits]


class CenMethod:
    fixed_hp = "delta/delta_max"
    name = "cen"

    def fixed_values(self, grids):
        return grids.delta_ratios()

    def combos(self, grids):
        return [{"lambda_index": li, "K": K}
                for li in range(grids.n_lambda) for K in sorted(grids.K_grid)]

    def n_inits(self, grids):
        return grids.n_inits

    def path(self, ctx, combo, init):
        if ctx.task != REGRESSION:
            raise DataError("CEN is only defined for regression")
        K = combo["K"]
        lam = float(ctx.grids.cen_lambdas()[combo["lambda_index"]])
        part = ctx.partition(K, init)
        dmax = baselines.cen_delta_max(ctx.Z, ctx.y)
        out = []
        b0, labels = None, part
        # warm start along the path, largest delta first
        for r in self.fixed_values(ctx.grids):
            try:
                f = baselines.cen_fit(ctx.Z, ctx.y, K, dmax * r, lam,
                                      seed=child_seed(ctx.seed, f"cen/K={K}/init={init}"),
                                      initial_partition=labels, initial_coefficients=b0)
            except ModelError:
                out.append(None)
                continue
            b0, labels = f.b, f.partition.labels
            out.append(CellModel(f.b, 0.0, f.labels, f.model_size))
        return out


class OlsMethod:
    """Unpenalized least squares on all variables (a p < n control)."""
    fixed_hp = "none"
    name = "ols"

    def fixed_values(self, grids):
        return np.array([0.0])

    def combos(self, grids):
        return [{}]

    def n_inits(self, grids):
        return 1

    def path(self, ctx, combo, init):
        fit = solvers.ols_fit(ctx.Z, ctx.y)
        p = ctx.Z.shape[1]
        return [CellModel(fit.coefficients, 0.0, np.full(p, -1), p)]


METHODS = ("vcpcr-ridge", "vcpcr-lasso", "vcpcr-identity", "crl-kmeans", "crl-ward", "cen")


def get_method(name):
    if name.startswith("vcpcr-"):
        return VcpcrMethod(name.split("-", 1)[1])
    if name.startswith("crl-"):
        return CrlMethod(name.split("-", 1)[1])
    if name == "cen":
        return CenMethod()
    if name == "ols":
        return OlsMethod()
    raise DataError(f"unknown method {name!r}; choose from {', '.join(METHODS)}")


# ---------------------------------------------------------------- harness

def _score(model, Z, y, task):
    if model is None:
        return np.inf
    eta = model.decision_function(Z)
    if task == CLASSIFICATION:
        return -classification_mcc(y, (eta > 0).astype(float))
    return msep(y, eta)


def _select(scores, sizes):
    """Index of the best combination: lowest score, then smallest size, then order."""
    order = np.lexsort((np.arange(len(scores)), sizes, scores))
    return int(order[0])


@dataclass
class CvResult:
    rows: list
    details: list = field(default_factory=list)

    def to_jsonl(self):
        return "".join(dumps(r.to_dict()) + "\n" for r in self.rows)


_KEYS = ("msep", "size", "support", "cluster", "cluster_linked", "class_mcc")


def _outer_fold(dataset, method, grids, seed, truth, m, test, audit=None):
    """Inner selection and outer evaluation for one outer fold."""
    fixed = method.fixed_values(grids)
    combos = method.combos(grids)
    n_inits = method.n_inits(grids)
    train = np.setdiff1d(np.arange(dataset.n), test)
    if len(train) < grids.inner_folds:
        raise TooFewSamples("outer training set smaller than the inner fold count")
    inner = make_folds(len(train), grids.inner_folds, child_seed(seed, f"inner-folds/{m}"))
    scores = np.zeros((n_inits, len(fixed), len(combos)))
    sizes = np.zeros_like(scores)
    for local in inner:
        itest = train[local]
        itrain = np.setdiff1d(train, itest)
        if audit is not None:
            audit("inner", m, itrain, itest)
        ctx = _Context(dataset, itrain, grids, seed)
        Zte, yte = ctx.transform(dataset, itest)
        for i in range(n_inits):
            for c, combo in enumerate(combos):
                for fi, model in enumerate(method.path(ctx, combo, i)):
                    scores[i, fi, c] += _score(model, Zte, yte, dataset.task)
                    sizes[i, fi, c] += 0 if model is None else model.size
    scores /= len(inner)
    sizes /= len(inner)

    if audit is not None:
        audit("outer", m, train, test)
    ctx = _Context(dataset, train, grids, seed)
    Zte, yte = ctx.transform(dataset, test)
    res = {k: np.full((n_inits, len(fixed)), np.nan) for k in _KEYS}
    details = []
    paths = {}
    for i in range(n_inits):
        for fi, fv in enumerate(fixed):
            c = _select(scores[i, fi], sizes[i, fi])
            if (i, c) not in paths:
                paths[(i, c)] = method.path(ctx, combos[c], i)
            model = paths[(i, c)][fi]
            failed = model is None
            if failed:
                model = ctx.null_model()
            eta = model.decision_function(Zte)
            if dataset.task == CLASSIFICATION:
                err = msep(yte, solvers.sigmoid(eta))
                res["class_mcc"][i, fi] = classification_mcc(yte, (eta > 0).astype(float))
            else:
                err = msep(yte, eta)
            res["msep"][i, fi] = err
            res["size"][i, fi] = model.size
            row = {"init": i, "outer_fold": m, "fixed_index": fi,
                   "fixed_value": float(fv), "selected": combos[c],
                   "inner_score": float(scores[i, fi, c]), "msep": err,
                   "model_size": int(model.size), "refit_failed": failed}
            if truth is not None:
                row["support_mcc"] = res["support"][i, fi] = support_mcc(model.b, truth.b)
                row["cluster_mcc"] = res["cluster"][i, fi] = cluster_pair_mcc(
                    model.labels, truth.labels)
                row["cluster_mcc_linked"] = res["cluster_linked"][i, fi] = cluster_pair_mcc(
                    model.labels, truth.labels, link_unassigned=True)
            details.append(row)
    return res, details


def _outer_job(args):
    return _outer_fold(*args)


def nested_cv(dataset: Dataset, method, grids: GridSpec, seed=None, truth=None,
              audit=None, dataset_name="", jobs=1) -> CvResult:
    """Run nested cross-validation for one method.

    ``truth`` (anything with ``b`` and ``labels``) enables support and
    cluster recovery scores. ``audit(stage, outer_fold, fit_rows, eval_rows)``
    is called before every standardization with the rows it is fitted on and
    the rows it is evaluated on. ``jobs > 1`` runs outer folds in worker
    processes; results are identical to a serial run.
    """
    if isinstance(method, str):
        method = get_method(method)
    seed = grids.seed if seed is None else seed
    n = dataset.n
    if n < grids.outer_folds:
        raise TooFewSamples(f"n={n} is smaller than {grids.outer_folds} outer folds")
    if isinstance(method, CenMethod) and dataset.task != REGRESSION:
        raise DataError("CEN is only defined for regression")
    fixed = method.fixed_values(grids)
    outer = make_folds(n, grids.outer_folds, child_seed(seed, "outer-folds"))
    tasks = [(dataset, method, grids, seed, truth, m, test) for m, test in enumerate(outer)]
    if jobs > 1 and audit is None:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_outer_job, tasks))
    else:
        results = [_outer_fold(*t, audit=audit) for t in tasks]

    details = [d for _, ds in results for d in ds]
    cols = {}
    for k in _KEYS:
        v = np.stack([r[k] for r, _ in results], axis=1)  # init x fold x fixed
        if np.all(np.isnan(v)):
            cols[k] = [None] * len(fixed)
        else:
            cols[k] = [float(x) for x in v.mean(axis=1).mean(axis=0)]
    rows = [BenchmarkRow(method.name, method.fixed_hp, float(fv), cols["size"][fi],
                         cols["msep"][fi], cols["support"][fi], cols["cluster"][fi],
                         cols["cluster_linked"][fi], len(outer), method.n_inits(grids),
                         dataset_name, cols["class_mcc"][fi])
            for fi, fv in enumerate(fixed)]
    return CvResult(rows, details)
