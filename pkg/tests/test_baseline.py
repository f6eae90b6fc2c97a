import numpy as np
import pytest

from rctsynth.baseline import (
    ConstantColumnError,
    TreatmentDistribution,
    fit_copula,
    nearest_psd_correlation,
    sample_copula,
    sample_treatment,
)
from rctsynth.demo import make_demo_table
from rctsynth.metrics import ks_complement
from rctsynth.table import ColumnSchema, make_table


def baseline_only(columns: dict, kinds: dict | None = None, levels: dict | None = None):
    kinds = kinds or {}
    levels = levels or {}
    schema = tuple(
        ColumnSchema(name, kinds.get(name, "continuous"), "baseline", levels.get(name))
        for name in columns
    )
    return make_table(schema, columns)


def test_independent_normals_give_near_zero_correlation():
    rng = np.random.default_rng(0)
    t = baseline_only({"a": rng.normal(size=50000), "b": rng.normal(size=50000)})
    model = fit_copula(t)
    assert abs(model.correlation[0, 1]) < 0.02


def test_comonotone_pair_gives_near_unit_correlation():
    rng = np.random.default_rng(1)
    x = rng.normal(size=20000)
    t = baseline_only({"a": x, "b": np.exp(x)})
    model = fit_copula(t)
    assert model.correlation[0, 1] > 0.99


def test_single_column_model_is_identity():
    rng = np.random.default_rng(2)
    t = baseline_only({"a": rng.normal(size=100)})
    model = fit_copula(t)
    assert model.correlation.shape == (1, 1)
    assert model.correlation[0, 0] == 1.0


def test_constant_column_errors():
    t = baseline_only({"a": np.ones(50), "b": np.arange(50.0)})
    with pytest.raises(ConstantColumnError):
        fit_copula(t)


def test_correlation_matrix_symmetric_psd():
    t = make_demo_table(n=500)
    model = fit_copula(t)
    c = model.correlation
    assert np.max(np.abs(c - c.T)) < 1e-12
    assert np.linalg.eigvalsh(c).min() >= -1e-10
    assert np.allclose(np.diag(c), 1.0)


def test_nearest_psd_repairs_indefinite_matrix():
    c = np.array([[1.0, 0.9, -0.9], [0.9, 1.0, 0.9], [-0.9, 0.9, 1.0]])
    fixed = nearest_psd_correlation(c)
    assert np.linalg.eigvalsh(fixed).min() >= 0
    assert np.allclose(np.diag(fixed), 1.0)


def test_sample_count_matches_requested_n():
    t = make_demo_table()
    model = fit_copula(t)
    syn = sample_copula(model, 1342, np.random.default_rng(0))
    assert syn.n_rows == 1342
    assert syn.all_observed()


def test_single_column_sampling_is_marginal_bootstrap():
    rng = np.random.default_rng(3)
    vals = rng.normal(10, 2, size=400)
    t = baseline_only({"a": vals})
    model = fit_copula(t)
    syn = sample_copula(model, 20000, np.random.default_rng(4))
    assert vals.min() <= syn.columns["a"].min()
    assert syn.columns["a"].max() <= vals.max()
    assert abs(syn.columns["a"].mean() - vals.mean()) < 0.1


def test_gaussian_copula_spearman_identity():
    # for a Gaussian copula, spearman = (6/pi) * arcsin(rho/2)
    rho = 0.9
    rng = np.random.default_rng(5)
    n = 60000
    z = rng.multivariate_normal([0, 0], [[1, rho], [rho, 1]], size=n)
    t = baseline_only({"a": z[:, 0], "b": np.expm1(z[:, 1])})
    model = fit_copula(t)
    syn = sample_copula(model, 100000, np.random.default_rng(6))
    from scipy.stats import spearmanr

    target = 6.0 / np.pi * np.arcsin(model.correlation[0, 1] / 2.0)
    got = spearmanr(syn.columns["a"], syn.columns["b"]).statistic
    assert abs(got - target) < 0.02


def test_marginal_fidelity_continuous_ks():
    t = make_demo_table(n=1342)
    model = fit_copula(t)
    syn = sample_copula(model, 13420, np.random.default_rng(7))
    for name in ("age", "weight", "cd4_baseline"):
        assert 1.0 - ks_complement(t.columns[name], syn.columns[name]) < 0.03


def test_categorical_marginals_match_frequencies():
    t = make_demo_table(n=1342)
    model = fit_copula(t)
    syn = sample_copula(model, 100000, np.random.default_rng(8))
    for name in ("karnof", "art_history", "gender"):
        levels = np.unique(t.columns[name])
        for lv in levels:
            real_f = np.mean(t.columns[name] == lv)
            syn_f = np.mean(syn.columns[name] == lv)
            assert abs(real_f - syn_f) < 0.02


def test_treatment_sampling_frequencies_and_determinism():
    dist = TreatmentDistribution(("0", "1", "2", "3"), (0.25, 0.25, 0.25, 0.25))
    draws = sample_treatment(dist, 100000, np.random.default_rng(9))
    for k in range(4):
        assert abs(np.mean(draws == k) - 0.25) < 0.01
    point = TreatmentDistribution(("0", "1", "2", "3"), (1.0, 0.0, 0.0, 0.0))
    assert np.all(sample_treatment(point, 500, np.random.default_rng(10)) == 0)
    a = sample_treatment(dist, 100, np.random.default_rng(11))
    b = sample_treatment(dist, 100, np.random.default_rng(11))
    assert np.array_equal(a, b)


def test_copula_fit_requires_enough_rows():
    t = make_demo_table(n=20)
    with pytest.raises(ValueError):
        fit_copula(t)
