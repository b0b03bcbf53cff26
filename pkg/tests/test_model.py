import dataclasses
import json

import numpy as np
import pytest

from vcpcr import solvers
from vcpcr.cv import random_balanced_partition
from vcpcr.data import CLASSIFICATION, Dataset, standardize, standardize_response
from vcpcr.errors import AllVariablesRemoved, DimensionMismatch
from vcpcr.files import dumps
from vcpcr.metrics import msep
from vcpcr.model import WeightScheme, compute_weights, fit_vcpcr, lambda_max, predict
from vcpcr.simulation import SimSpec, generate_dataset
from vcpcr.sosnmf import fit_sosnmf

from conftest import orthonormal_standardized


@pytest.fixture(scope="module")
def sim():
    return generate_dataset(SimSpec(3, 50, 0.6, seed=3))


def ridge_fit_at(ds, ratio, K=5, seed=0, delta=1.0):
    xs, ys = standardize(ds.X), standardize_response(ds.y)
    part = random_balanced_partition(ds.p, K, seed).labels
    scheme = WeightScheme("ridge", delta)
    w = compute_weights(xs.values, ys.values, scheme)
    lm = lambda_max(xs.values, w, part, K)
    return fit_vcpcr(ds, scheme, K, part, ratio * lm), xs


def test_identity_weights_are_ones(rng):
    w = compute_weights(rng.standard_normal((5, 4)), rng.standard_normal(5), WeightScheme("identity"))
    np.testing.assert_array_equal(w, np.ones(4))


def test_lasso_weights_at_delta_max_remove_everything(sim):
    ds, _ = sim
    Z, y = standardize(ds.X).values, standardize_response(ds.y).values
    scheme = WeightScheme("lasso", solvers.lasso_delta_max(Z, y))
    assert not compute_weights(Z, y, scheme).any()
    with pytest.raises(AllVariablesRemoved):
        fit_vcpcr(ds, scheme, 5, random_balanced_partition(ds.p, 5, 0).labels, 1e-6)


def test_ridge_weight_largest_on_relevant_orthonormal_predictor(rng):
    n = 30
    Q = orthonormal_standardized(n, 6, rng)
    y = 3 * Q[:, 2] + 0.1 * rng.standard_normal(n)
    w = compute_weights(Q, y, WeightScheme("ridge", 0.5))
    expected = Q.T @ y / ((n - 1) + 2 * n * 0.5)
    np.testing.assert_allclose(w, expected, rtol=1e-10)
    assert np.argmax(np.abs(w)) == 2


def test_prediction_identity_and_support(sim):
    ds, _ = sim
    for ratio in (0.2, 0.4, 0.7):
        fit, xs = ridge_fit_at(ds, ratio)
        Z = xs.values
        assert np.max(np.abs(Z @ fit.b - fit.M @ fit.a)) <= 1e-10
        np.testing.assert_array_equal(fit.b != 0, fit.V.any(axis=1))
        assert fit.model_size == int(fit.V.any(axis=1).sum())


def test_predict_reproduces_fitted_values(sim):
    ds, _ = sim
    fit, xs = ridge_fit_at(ds, 0.3)
    fitted = fit.y_center + fit.y_scale * (fit.M @ fit.a)
    np.testing.assert_allclose(predict(fit, ds.X), fitted, atol=1e-10)
    with pytest.raises(DimensionMismatch):
        predict(fit, ds.X[:, :10])


def test_zero_coefficients_predict_the_training_mean(sim):
    ds, _ = sim
    fit, _ = ridge_fit_at(ds, 0.3)
    null = dataclasses.replace(fit, b=np.zeros_like(fit.b))
    np.testing.assert_allclose(predict(null, ds.X[:7]), ds.y.mean(), rtol=1e-12)


def test_held_out_msep(sim):
    ds, _ = sim
    train, test = np.arange(40), np.arange(40, 50)
    fit, _ = ridge_fit_at(ds.subset(train), 0.3)
    pred = predict(fit, ds.X[test])
    assert msep(ds.y[test], pred) == pytest.approx(np.mean((ds.y[test] - pred) ** 2), rel=1e-14)


def test_single_cluster_at_zero_lambda_is_weighted_average(rng):
    n, p = 25, 6
    X = rng.standard_normal((n, 1)) * 2 + rng.standard_normal((n, p))
    y = X.sum(axis=1) + rng.standard_normal(n)
    ds = Dataset(X, y)
    fit = fit_vcpcr(ds, WeightScheme("identity"), 1, np.zeros(p, dtype=int), 0.0)
    assert fit.V.shape == (p, 1) and np.all(fit.V > 0)
    Z = standardize(X).values
    np.testing.assert_allclose(fit.M[:, 0], Z @ fit.V[:, 0], atol=1e-12)
    # memberships are the correlations with the latent variable
    u = fit.sosnmf.U.values[:, 0]
    np.testing.assert_allclose(fit.V[:, 0], Z.T @ u / (n - 1), atol=1e-12)
    np.testing.assert_allclose(fit.b, fit.V[:, 0] * fit.a[0], atol=1e-14)


def test_identity_weight_selection_shrinks_with_lambda(rng):
    n = 40
    blocks = [rng.standard_normal((n, 1)) + 0.6 * rng.standard_normal((n, 5)) for _ in range(3)]
    X = np.hstack(blocks)
    ds = Dataset(X, X[:, 0] + rng.standard_normal(n))
    Z = standardize(X).values
    part = random_balanced_partition(15, 3, 5).labels
    lm = lambda_max(Z, np.ones(15), part)
    counts = []
    for lam in np.geomspace(0.01, 0.99, 12) * lm:
        counts.append(fit_vcpcr(ds, WeightScheme("identity"), 3, part, lam).model_size)
    increases = np.diff(counts)
    assert np.all(increases <= 1), counts


def test_weight_scaling_invariance(rng):
    n, p = 30, 10
    Z = standardize(rng.standard_normal((n, 1)) + rng.standard_normal((n, p))).values
    w = rng.standard_normal(p)
    part = [0, 1, 2] * 3 + [0]
    c = 3.7
    assert lambda_max(Z, c * w, part) == pytest.approx(c * lambda_max(Z, w, part), rel=1e-12)
    lam = 0.3 * lambda_max(Z, w, part)
    a = fit_sosnmf(Z, w, part, lam)
    b = fit_sosnmf(Z, c * w, part, c * lam)
    np.testing.assert_array_equal(a.labels, b.labels)
    np.testing.assert_allclose(b.V.values, c * a.V.values, rtol=1e-10)


def test_classification_pipeline(rng):
    n, p = 60, 12
    X = rng.standard_normal((n, 1)) + rng.standard_normal((n, p))
    y = (X[:, :4].sum(axis=1) + rng.standard_normal(n) > 0).astype(float)
    ds = Dataset(X, y, CLASSIFICATION)
    part = random_balanced_partition(p, 3, 0).labels
    Z = standardize(X).values
    scheme = WeightScheme("ridge", 0.1)
    w = compute_weights(Z, y, scheme, CLASSIFICATION)
    fit = fit_vcpcr(ds, scheme, 3, part, 0.3 * lambda_max(Z, w, part))
    prob = predict(fit, X)
    assert np.all((prob > 0) & (prob < 1))
    assert np.max(np.abs(Z @ fit.b - fit.M @ fit.a)) <= 1e-10
    assert np.mean((prob > 0.5) == y) > 0.6


def test_fit_serializes(sim):
    ds, _ = sim
    fit, _ = ridge_fit_at(ds, 0.3)
    d = json.loads(dumps(fit.to_dict()))
    for key in ("weights", "V", "a", "b", "lambda", "scheme", "K_requested", "K_surviving",
                "objective_trace"):
        assert key in d
    V = np.zeros((ds.p, len(d["clusters"])))
    col = {c: i for i, c in enumerate(d["clusters"])}
    for j, k, v in d["V"]:
        V[j, col[k]] = v
    np.testing.assert_allclose(V @ np.asarray(d["a"]), d["b"], atol=1e-14)
