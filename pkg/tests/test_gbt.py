import numpy as np

from rctsynth.gbt import GradientBoostedTrees


def test_axis_aligned_signal_is_learned():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(1500, 6))
    y = (X[:, 2] > 0.3).astype(float)
    model = GradientBoostedTrees(n_trees=40).fit(X[:1000], y[:1000])
    assert (model.predict(X[1000:]) == y[1000:]).mean() > 0.97


def test_probabilities_track_signal_strength():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(4000, 4))
    p = 1 / (1 + np.exp(-(1.2 * X[:, 0] - 0.8 * X[:, 1])))
    y = (rng.random(4000) < p).astype(float)
    model = GradientBoostedTrees().fit(X[:3000], y[:3000])
    phat = model.predict_proba(X[3000:])
    assert np.all((phat > 0) & (phat < 1))
    assert np.corrcoef(phat, p[3000:])[0, 1] > 0.85


def test_missing_values_routed_by_learned_direction():
    rng = np.random.default_rng(2)
    n = 4000
    x = rng.normal(size=(n, 3))
    # label depends on whether feature 0 is missing: the router must learn
    # to send NaNs toward the positive side
    miss = rng.random(n) < 0.4
    y = (miss | (x[:, 1] > 1.5)).astype(float)
    X = x.copy()
    X[miss, 0] = np.nan
    model = GradientBoostedTrees(n_trees=30).fit(X[:3000], y[:3000])
    acc = (model.predict(X[3000:]) == y[3000:]).mean()
    assert acc > 0.97


def test_all_missing_column_is_harmless():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(500, 3))
    X[:, 2] = np.nan
    y = (X[:, 0] > 0).astype(float)
    model = GradientBoostedTrees(n_trees=20).fit(X, y)
    assert (model.predict(X) == y).mean() > 0.95


def test_deterministic_fit():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(400, 5))
    y = (X[:, 0] + X[:, 1] > 0).astype(float)
    a = GradientBoostedTrees(n_trees=15).fit(X, y).decision_function(X)
    b = GradientBoostedTrees(n_trees=15).fit(X, y).decision_function(X)
    assert np.array_equal(a, b)
