"""Acceptance criteria 1-10, one pass/fail line each in the terminal summary."""

import time

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from vcpcr import baselines, solvers
from vcpcr.cv import GridSpec, nested_cv, random_balanced_partition
from vcpcr.data import standardize, standardize_response
from vcpcr.metrics import ConfusionCounts, cluster_pair_mcc, mcc, msep
from vcpcr.model import WeightScheme, compute_weights, fit_vcpcr, lambda_max
from vcpcr.simulation import SimSpec, canonical_specs, generate_dataset
from vcpcr.sosnmf import LatentMatrix, init_membership, update_latent, update_membership

import conftest
from conftest import standardized

REPLICATES = 10
ALLOWED_FAILURES = 2


def record(number, ok, detail):
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)


def row_objective(xw, U, lam, k, v):
    r = xw - U[:, k] * v
    return r @ r / (2 * (len(xw) - 1)) + lam * v


def test_criterion_01_membership_matches_brute_force():
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    obj_gap, v_gap, mismatches, instances = 0.0, 0.0, 0, 0
    while instances < 120:
        n, p, K = int(rng.integers(4, 13)), int(rng.integers(2, 11)), int(rng.integers(1, 4))
        if K > p:
            continue
        X = standardized(n, p, rng, corr=rng.uniform(0, 1.5))
        w = rng.standard_normal(p)
        part = rng.permutation(np.arange(p) % K)
        U = update_latent(X, w, init_membership(part)).values
        lam = rng.uniform(0, 1.2) * lambda_max(X, w, part)
        V = update_membership(X, w, LatentMatrix(U, np.arange(U.shape[1])), lam).values
        for j in range(p):
            xw = w[j] * X[:, j]
            best_k, best_v, best_f = None, 0.0, xw @ xw / (2 * (n - 1))
            for k in range(U.shape[1]):
                res = minimize_scalar(lambda v: row_objective(xw, U, lam, k, v), bounds=(0, 10),
                                      method="bounded", options={"xatol": 1e-13})
                if res.fun < best_f - 1e-12:
                    best_k, best_v, best_f = k, res.x, res.fun
            got_k = int(np.argmax(V[j])) if V[j].any() else None
            mismatches += got_k != best_k
            got_v = V[j].max()
            got_f = row_objective(xw, U, lam, got_k, got_v) if got_k is not None else \
                xw @ xw / (2 * (n - 1))
            obj_gap = max(obj_gap, abs(got_f - best_f))
            v_gap = max(v_gap, abs(got_v - best_v))
        instances += 1
    elapsed = time.perf_counter() - start
    # the bounded scalar search resolves the minimizer only to about sqrt(machine eps),
    # so the objective is compared at 1e-10 and the membership value at that resolution
    ok = mismatches == 0 and obj_gap <= 1e-10 and v_gap <= 1e-6 and elapsed < 10
    record(1, ok, f"{instances} instances, {mismatches} assignment mismatches, objective gap "
                  f"{obj_gap:.1e}, membership gap {v_gap:.1e}, {elapsed:.1f}s")
    assert ok


def test_criterion_02_structural_invariants():
    rng = np.random.default_rng(202)
    checks = {"rows": 0.0, "gram": 0.0, "var": 0.0, "pred": 0.0, "descent": 0}
    fits = 0
    specs = canonical_specs(seed=5)
    for i, spec in enumerate(specs):
        ds, _ = generate_dataset(spec)
        Z, y = standardize(ds.X).values, standardize_response(ds.y).values
        for scheme in (WeightScheme("ridge", 1.0),
                       WeightScheme("lasso", 0.05 * solvers.lasso_delta_max(Z, y)),
                       WeightScheme("identity")):
            w = compute_weights(Z, y, scheme)
            for K in (4, 5, 6):
                part = random_balanced_partition(ds.p, K, int(rng.integers(1 << 30))).labels
                lm = lambda_max(Z, w, part)
                for ratio in (0.1, 0.4):
                    fit = fit_vcpcr(ds, scheme, K, part, ratio * lm)
                    V = fit.V
                    G = V.T @ V
                    u = fit.sosnmf.U.values
                    trace = fit.sosnmf.objective_trace
                    checks["rows"] = max(checks["rows"], int(((V != 0).sum(axis=1) > 1).sum()))
                    checks["gram"] = max(checks["gram"],
                                         np.abs(G[~np.eye(len(G), dtype=bool)]).max(initial=0))
                    checks["var"] = max(checks["var"], np.abs(u.var(axis=0, ddof=1) - 1).max())
                    checks["pred"] = max(checks["pred"], np.abs(Z @ fit.b - fit.M @ fit.a).max())
                    checks["descent"] += trace[-1] > trace[0]
                    fits += 1
    ok = (checks["rows"] == 0 and checks["gram"] == 0 and checks["var"] <= 1e-8
          and checks["pred"] <= 1e-10 and checks["descent"] == 0)
    record(2, ok, f"{fits} fits; multi-membership rows {checks['rows']}, off-diagonal "
                  f"{checks['gram']:.0e}, var gap {checks['var']:.1e}, prediction gap "
                  f"{checks['pred']:.1e}, objective increases {checks['descent']}")
    assert ok


def test_criterion_03_lambda_max():
    rng = np.random.default_rng(303)
    bad = 0
    for _ in range(50):
        n, p, K = int(rng.integers(5, 30)), int(rng.integers(3, 25)), int(rng.integers(1, 5))
        K = min(K, p)
        X = standardized(n, p, rng, corr=rng.uniform(0, 2))
        w = rng.standard_normal(p)
        part = rng.permutation(np.arange(p) % K)
        U = update_latent(X, w, init_membership(part))
        lm = lambda_max(X, w, part)
        bad += update_membership(X, w, U, lm).values.any()
        bad += not update_membership(X, w, U, 0.99 * lm).values.any()
    record(3, bad == 0, f"50 triples, {bad} violations")
    assert bad == 0


def test_criterion_04_noise_calibration():
    worst = 0.0
    for spec in canonical_specs():
        _, truth = generate_dataset(spec)
        worst = max(worst, abs(truth.b @ truth.Sigma @ truth.b / truth.sigma_eps2 - 10))
    s6 = generate_dataset(SimSpec(3, 50, 0.6))[1].sigma_eps2
    s3 = generate_dataset(SimSpec(3, 50, 0.3))[1].sigma_eps2
    ok = worst <= 1e-10 and abs(s6 - 6.8) <= 1e-12 and abs(s3 - 4.4) <= 1e-12
    record(4, ok, f"max SNR gap {worst:.1e}, sigma2 {s6:.12g} and {s3:.12g}")
    assert ok


@pytest.fixture(scope="module")
def replicates():
    """Nested CV of ridge, identity and CRL-kmeans on 10 config-3 replicates."""
    out = []
    for r in range(REPLICATES):
        ds, truth = generate_dataset(SimSpec(3, 50, 0.6, seed=r))
        grids = GridSpec(seed=r)
        start = time.perf_counter()
        rows = {m: nested_cv(ds, m, grids, truth=truth).rows
                for m in ("vcpcr-ridge", "vcpcr-identity", "crl-kmeans")}
        rows["seconds"] = time.perf_counter() - start
        out.append(rows)
    return out


def best(rows, key, lowest=False):
    vals = [getattr(r, key) for r in rows]
    i = int(np.argmin(vals) if lowest else np.argmax(vals))
    return vals[i], rows[i]


def test_criterion_05a_ridge_support_recovery(replicates):
    fails, notes = 0, []
    for rep in replicates:
        value, row = best(rep["vcpcr-ridge"], "support_mcc")
        fails += not (value >= 0.8 and 15 <= row.model_size <= 30)
        notes.append(f"{value:.2f}@s={row.model_size:.1f}")
    slow = max(rep["seconds"] for rep in replicates)
    ok = fails <= ALLOWED_FAILURES and slow < 300
    record(5, ok, f"(a) best support MCC per replicate {', '.join(notes)}; {fails} failures; "
                  f"slowest replicate {slow:.0f}s")
    assert ok


def test_criterion_05b_ridge_cluster_recovery(replicates):
    fails, notes, linked = 0, [], []
    for rep in replicates:
        ridge, _ = best(rep["vcpcr-ridge"], "cluster_mcc")
        crl, _ = best(rep["crl-kmeans"], "cluster_mcc")
        fails += not ridge - crl >= 0.05
        notes.append(f"{ridge:.3f}/{crl:.3f}")
        linked.append(f"{best(rep['vcpcr-ridge'], 'cluster_mcc_linked')[0]:.2f}/"
                      f"{best(rep['crl-kmeans'], 'cluster_mcc_linked')[0]:.2f}")
    ok = fails <= ALLOWED_FAILURES
    record(5, ok, f"(b) best cluster MCC ridge/crl {', '.join(notes)}; {fails} failures "
                  f"[with unassigned linked: {', '.join(linked)}]")
    assert ok


def test_criterion_05c_ridge_prediction(replicates):
    fails, notes = 0, []
    for rep in replicates:
        ridge, _ = best(rep["vcpcr-ridge"], "msep", lowest=True)
        crl, _ = best(rep["crl-kmeans"], "msep", lowest=True)
        fails += ridge > crl
        notes.append(f"{ridge:.3f}/{crl:.3f}")
    ok = fails <= ALLOWED_FAILURES
    record(5, ok, f"(c) min MSEP ridge/crl {', '.join(notes)}; {fails} failures")
    assert ok


def test_criterion_06_identity_degrades(replicates):
    gaps = [best(rep["vcpcr-ridge"], "support_mcc")[0]
            - best(rep["vcpcr-identity"], "support_mcc")[0] for rep in replicates]
    ok = float(np.mean(gaps)) >= 0.1
    record(6, ok, f"mean best support MCC gap ridge - identity {np.mean(gaps):.3f}")
    assert ok


def test_criterion_07_cen_descent_and_lasso_limit():
    rng = np.random.default_rng(707)
    worst_rise, worst_gap = 0.0, 0.0
    for _ in range(20):
        n, p, K = int(rng.integers(10, 25)), int(rng.integers(4, 12)), int(rng.integers(2, 4))
        Z = standardized(n, p, rng, corr=rng.uniform(0, 1))
        y = Z[:, :2].sum(axis=1) + rng.standard_normal(n)
        seed = int(rng.integers(1000))
        fit = baselines.cen_fit(Z, y, K, 0.1 * baselines.cen_delta_max(Z, y),
                                rng.uniform(0.1, 5), seed=seed)
        t = np.asarray(fit.objective_trace)
        worst_rise = max(worst_rise, float(np.max(np.diff(t) / np.abs(t[:-1]), initial=0)))
        delta = 0.2 * solvers.lasso_delta_max(Z, y)
        cen = baselines.cen_fit(Z, y, K, n * delta, 0.0, seed=seed)
        lasso = solvers.lasso_fit(Z, y, delta).coefficients
        worst_gap = max(worst_gap, float(np.abs(cen.b - lasso).max()))
    ok = worst_rise <= 1e-8 and worst_gap <= 1e-6
    record(7, ok, f"20 instances, max relative rise {worst_rise:.1e}, lasso gap {worst_gap:.1e}")
    assert ok


def test_criterion_08_clustering_oracles():
    import itertools
    rng = np.random.default_rng(808)
    worst = 0.0
    for _ in range(20):
        centers = rng.standard_normal((2, 3)) * 3
        pts = centers[rng.permutation([0, 0, 0, 1, 1, 1])] + 0.7 * rng.standard_normal((6, 3))
        opt = min(baselines.wcss(pts, np.array((0,) + m), 2)
                  for m in itertools.product([0, 1], repeat=5) if any(m))
        got = baselines.kmeans_columns(pts.T, 2, seed=int(rng.integers(1000))).wcss
        worst = max(worst, abs(got - opt) / opt)
    # x = 0, 1, 3, 7, 8.5 merged by hand with squared-distance Lance-Williams updates:
    # {0,1} at 1, {7,8.5} at 2.25, then 3 joins {0,1} at (2*9 + 2*4 - 1)/3 = 25/3;
    # the last merge cost is 2|A||B|/(|A|+|B|) times the squared centroid gap
    x = np.array([0.0, 1.0, 3.0, 7.0, 8.5])
    a, b = x[:3], x[3:]
    final = 2 * len(a) * len(b) / (len(a) + len(b)) * (a.mean() - b.mean()) ** 2
    hand = np.sqrt([1.0, 2.25, 25 / 3, final])
    heights = baselines.ward_hac(x[None, :], 2).heights
    gap = float(np.abs(heights - hand).max())
    ok = worst <= 1e-12 and gap <= 1e-10
    record(8, ok, f"k-means worst relative WCSS gap {worst:.1e}; Ward height gap {gap:.1e}")
    assert ok


def test_criterion_09_metric_oracles():
    gaps = [
        abs(mcc(ConfusionCounts(2, 3, 1, 0)) - 6 / np.sqrt(72)),
        abs(cluster_pair_mcc([0, 0, 0, 1], [0, 0, 1, 1]) - 0.0),
        abs(msep([1, 2], [0, 0]) - 2.5),
        abs(msep([1.0, -2.0, 0.5], [1.0, -2.0, 0.5])),
        abs(msep([1.0, -2.0, 0.5], [1.3, -1.7, 0.8]) - 0.09),
    ]
    ok = max(gaps) <= 1e-12
    record(9, ok, f"max gap {max(gaps):.1e}")
    assert ok


def test_criterion_10_cv_hygiene():
    ds, truth = generate_dataset(SimSpec(3, 50, 0.6, seed=21))
    grids = GridSpec(n_lambda=4, K_grid=(5,), n_inits=2, seed=21)
    violations, calls, outer = 0, 0, {}
    log = []

    def audit(stage, m, fit_rows, eval_rows):
        log.append((stage, m, set(fit_rows.tolist()), set(eval_rows.tolist())))

    first = nested_cv(ds, "vcpcr-ridge", grids, truth=truth, audit=audit)
    for stage, m, fit_rows, eval_rows in log:
        if stage == "outer":
            outer[m] = eval_rows
    for stage, m, fit_rows, eval_rows in log:
        calls += 1
        violations += bool(fit_rows & eval_rows)
        if stage == "inner":
            violations += bool((fit_rows | eval_rows) & outer[m])
    second = nested_cv(ds, "vcpcr-ridge", grids, truth=truth)
    same = first.to_jsonl().encode() == second.to_jsonl().encode()
    ok = violations == 0 and same and len(outer) == grids.outer_folds
    record(10, ok, f"{calls} audited standardizations, {violations} leaks; "
                   f"repeat run byte-identical: {same}")
    assert ok
