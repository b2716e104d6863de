from __future__ import annotations

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lmtp_engine.errors import LearnerError, SignatureError
from lmtp_engine.learners import (
    LearnerSpec,
    fit_learner,
    make_folds,
    project_simplex,
    resolve_features,
    stack_superlearner,
)


def test_gaussian_glm_exact_line():
    x = np.linspace(-3, 3, 50)
    m = fit_learner(LearnerSpec("gaussian-glm"), x[:, None], 2 * x)
    np.testing.assert_allclose(m.coefficients, [0.0, 2.0], atol=1e-8)


def test_binomial_constant_features_predict_mean():
    rng = np.random.default_rng(1)
    y = rng.integers(0, 2, 300).astype(float)
    X = np.ones((300, 1))
    m = fit_learner(LearnerSpec("binomial-glm"), X, y)
    np.testing.assert_allclose(m.predict(X), y.mean(), atol=1e-8)
    assert m.ridge_fallback


def test_knn_k1_interpolates():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(40, 3))
    y = rng.normal(size=40)
    m = fit_learner(LearnerSpec("knn", k=1), X, y)
    np.testing.assert_allclose(m.predict(X), y)


def test_knn_ties_lowest_index():
    X = np.zeros((3, 1))
    m = fit_learner(LearnerSpec("knn", k=1), X, np.array([5.0, 7.0, 9.0]))
    assert m.predict(np.zeros((1, 1)))[0] == 5.0


def test_tree_respects_min_leaf():
    x = np.arange(100.0)
    y = (x > 49.5).astype(float)
    m = fit_learner(LearnerSpec("tree", max_depth=3, min_leaf=10), x[:, None], y)
    np.testing.assert_allclose(m.predict(np.array([[10.0], [90.0]])), [0.0, 1.0])


def test_saturated_equals_cell_means():
    rng = np.random.default_rng(3)
    X = rng.integers(0, 3, (2000, 2)).astype(float)
    y = rng.integers(0, 2, 2000).astype(float)
    m = fit_learner(LearnerSpec("glm", saturated=True), X, y, task="binomial")
    df = pd.DataFrame({"a": X[:, 0], "b": X[:, 1], "y": y})
    means = df.groupby(["a", "b"])["y"].transform("mean").to_numpy()
    np.testing.assert_allclose(m.predict(X), means, atol=1e-12)


def test_fractional_binomial_targets():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(500, 2))
    y = rng.uniform(size=500)
    m = fit_learner(LearnerSpec("binomial-glm"), X, y)
    p = m.predict(X)
    assert np.all((p >= 0) & (p <= 1))
    assert abs(p.mean() - y.mean()) < 1e-8


def test_empty_predictions_and_signature():
    m = fit_learner(LearnerSpec("glm"), np.ones((5, 2)) + np.eye(5, 2), np.arange(5.0))
    assert m.predict(np.zeros((0, 2))).shape == (0,)
    with pytest.raises(SignatureError):
        m.predict(np.zeros((3, 3)))
    named = fit_learner(LearnerSpec("glm"), pd.DataFrame({"a": [0, 1, 2.], "b": [1, 0, 1.]}),
                        [0, 1, 2.])
    with pytest.raises(SignatureError):
        named.predict(pd.DataFrame({"b": [1.0], "a": [0.0]}))


def test_modified_column_changes_only_through_coefficient():
    rng = np.random.default_rng(5)
    X = rng.integers(0, 2, (400, 2)).astype(float)
    y = 1 + 0.5 * X[:, 0] - 2 * X[:, 1] + rng.normal(size=400)
    m = fit_learner(LearnerSpec("gaussian-glm"), X, y)
    X1 = X.copy()
    X1[:, 1] = 1
    np.testing.assert_allclose(m.predict(X1) - m.predict(X), m.coefficients[2] * (1 - X[:, 1]))


def test_nonfinite_inputs_rejected():
    with pytest.raises(LearnerError):
        fit_learner(LearnerSpec("glm"), np.array([[np.nan]]), [1.0])


def test_folds():
    f = make_folds(10, 5, 0)
    assert sorted(f.sizes()) == [2] * 5
    assert np.array_equal(f.fold, make_folds(10, 5, 0).fold)
    assert sorted(make_folds(7, 5, 1).sizes(), reverse=True) == [2, 2, 1, 1, 1]
    with pytest.raises(LearnerError):
        make_folds(3, 5, 0)


def test_superlearner_prefers_true_model():
    rng = np.random.default_rng(6)
    n = 5000
    X = pd.DataFrame({"x": rng.normal(size=n), "noise": rng.normal(size=n)})
    y = 1 + 2 * X["x"].to_numpy() + rng.normal(size=n)
    specs = [LearnerSpec("gaussian-glm", features=("x",), name="true"),
             LearnerSpec("gaussian-glm", features=("noise",), name="noise")]
    wts, ens = stack_superlearner(specs, X, y, k=5)
    assert wts.weights[0] >= 0.9
    assert abs(wts.weights.sum() - 1) <= 1e-12


def test_single_and_duplicate_candidates():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(300, 2))
    y = X @ [1.0, -1.0] + rng.normal(size=300)
    wts, _ = stack_superlearner([LearnerSpec("glm")], X, y)
    assert wts.weights.tolist() == [1.0]
    wts2, ens2 = stack_superlearner([LearnerSpec("glm"), LearnerSpec("glm")], X, y)
    assert abs(wts2.weights.sum() - 1) <= 1e-12
    single = fit_learner(LearnerSpec("glm"), X, y)
    np.testing.assert_allclose(ens2.predict(X), single.predict(X), atol=1e-10)


def test_ensemble_never_worse_than_best_candidate():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(600, 2))
    y = np.sin(2 * X[:, 0]) + rng.normal(scale=0.3, size=600)
    wts, _ = stack_superlearner([LearnerSpec("glm"), LearnerSpec("knn", k=15),
                                 LearnerSpec("tree", max_depth=3)], X, y)
    assert wts.ensemble_risk <= wts.cv_risk.min() + 1e-10


def test_resolve_features():
    avail = ["W", "L_0", "A_0", "L_1", "A_1"]
    assert resolve_features(["L", "A[-1]"], (), avail, 1, baseline=["W"]) == ["L_1", "A_0"]
    assert resolve_features(None, ("L_*",), avail, 1, baseline=["W"]) == ["W", "A_0", "A_1"]
    assert resolve_features((), (), avail, 1) == []


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(1, 3), min_size=8, max_size=20), st.integers(0, 10_000))
def test_integer_weights_equal_replication(wts, seed):
    rng = np.random.default_rng(seed)
    n = len(wts)
    X = rng.normal(size=(n, 2))
    y = (rng.uniform(size=n) < 0.5).astype(float)
    y[:2] = [0, 1]
    w = np.array(wts, dtype=float)
    rep = np.repeat(np.arange(n), wts)
    for spec in (LearnerSpec("gaussian-glm"), LearnerSpec("binomial-glm", ridge=0.1)):
        a = fit_learner(spec, X, y, w)
        b = fit_learner(spec, X[rep], y[rep])
        np.testing.assert_allclose(a.predict(X), b.predict(X), atol=1e-7)


@settings(max_examples=50, deadline=None)
@given(st.integers(20, 300), st.integers(0, 10_000))
def test_binomial_score_equation(n, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 2))
    y = (rng.uniform(size=n) < 1 / (1 + np.exp(-X[:, 0]))).astype(float)
    if y.min() == y.max():
        y[0] = 1 - y[0]
    m = fit_learner(LearnerSpec("binomial-glm", ridge=1e-3), X, y)
    assert abs(m.predict(X).mean() - y.mean()) < 1e-8


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=1, max_size=8))
def test_simplex_projection(v):
    p = project_simplex(np.array(v))
    assert np.all(p >= 0)
    assert abs(p.sum() - 1) < 1e-12


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 60), st.integers(2, 6), st.integers(0, 99))
def test_fold_partition(n, k, seed):
    k = min(k, n)
    f = make_folds(n, k, seed)
    s = f.sizes()
    assert s.sum() == n and s.max() - s.min() <= 1
