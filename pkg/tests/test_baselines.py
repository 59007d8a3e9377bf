import numpy as np
import pytest
from scipy import stats
from sklearn.metrics import adjusted_rand_score

from cgpr import baselines
from cgpr.baselines import SpectralConfig
from cgpr.errors import ConfigError, DimensionError


def two_blobs(seed, n_per=40, p=5, sep=6.0, sd=0.5):
    rng = np.random.default_rng(seed)
    centers = np.zeros((2, p))
    centers[0, 0], centers[1, 0] = -sep / 2, sep / 2
    labels = np.repeat([0, 1], n_per)
    X = centers[labels] + sd * rng.standard_normal((2 * n_per, p))
    perm = rng.permutation(2 * n_per)
    return X[perm], labels[perm]


@pytest.mark.parametrize("seed", range(3))
def test_two_blobs_recovered(seed):
    X, truth = two_blobs(seed)
    res = baselines.spectral_cluster(X, SpectralConfig(n_clust=2, seed=seed))
    assert adjusted_rand_score(truth, res.labels) == 1.0


def test_normalized_affinity_spectrum_in_unit_interval(rng):
    X = rng.standard_normal((60, 4))
    A, sigma2 = baselines.affinity(X)
    L, floored = baselines.normalized_affinity(A)
    ev = np.linalg.eigvalsh(L)
    assert floored == 0
    assert np.all(np.abs(ev) <= 1 + 1e-8)
    # D^{1/2} 1 is the top eigenvector with eigenvalue 1
    d = A.sum(axis=1)
    v = np.sqrt(d)
    np.testing.assert_allclose(L @ v, v, rtol=1e-10)


def test_affinity_by_hand():
    X = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]])
    # pairwise squared distances 1, 4, 5 -> median 4
    A, sigma2 = baselines.affinity(X)
    assert sigma2 == 4.0
    assert A[0, 1] == pytest.approx(np.exp(-1 / 8))
    assert A[1, 2] == pytest.approx(np.exp(-5 / 8))
    assert np.all(np.diag(A) == 0)
    A2, s2 = baselines.affinity(X, sigma2=0.5)
    assert s2 == 0.5 and A2[0, 2] == pytest.approx(np.exp(-4.0))


def test_isolated_point_is_floored():
    X = np.array([[0.0], [0.1], [1e3]])
    A, _ = baselines.affinity(X, sigma2=0.01)
    L, floored = baselines.normalized_affinity(A)
    assert floored == 1 and np.all(np.isfinite(L))


def test_embedding_rows_unit_norm_and_sign_convention(rng):
    X, _ = two_blobs(7)
    res = baselines.spectral_cluster(X, SpectralConfig(n_clust=3, seed=0))
    np.testing.assert_allclose(np.linalg.norm(res.embedding, axis=1), 1.0)
    assert np.all(np.diff(res.eigenvalues) <= 0)
    # deterministic across calls
    again = baselines.spectral_cluster(X, SpectralConfig(n_clust=3, seed=0))
    np.testing.assert_array_equal(res.labels, again.labels)


def test_ridge_primal_and_dual_match_closed_form(rng):
    for n, p in ((30, 5), (8, 20)):
        X = rng.standard_normal((n, p))
        y = rng.standard_normal(n)
        fit = baselines.ridge_fit(X, y, 0.7)
        Xc, yc = X - X.mean(0), y - y.mean()
        coef = np.linalg.inv(Xc.T @ Xc + 0.7 * np.eye(p)) @ Xc.T @ yc
        np.testing.assert_allclose(fit.coef, coef, rtol=1e-9, atol=1e-12)
        assert fit.intercept == pytest.approx(y.mean() - X.mean(0) @ coef)


def test_ridge_zero_is_least_squares(rng):
    X = rng.standard_normal((25, 3))
    beta = np.array([1.0, -2.0, 0.5])
    y = X @ beta + 4.0
    fit = baselines.ridge_fit(X, y, 0.0)
    np.testing.assert_allclose(fit.coef, beta, atol=1e-12)
    assert fit.intercept == pytest.approx(4.0)
    single = baselines.ridge_fit(X[:1], y[:1], 1.0)
    assert single.intercept == y[0] and np.all(single.coef == 0)


def test_dsl_given_labels_and_routing(rng):
    X, labels = two_blobs(3, p=3)
    y = np.where(labels == 0, 1.0 + X[:, 1], -1.0 - 2 * X[:, 2])
    model = baselines.fit_dsl(X, y, ridge=0.0, labels=labels)
    pred, ids = baselines.predict_dsl(model, X)
    np.testing.assert_array_equal(ids, labels)
    np.testing.assert_allclose(pred, y, atol=1e-10)
    assert model.residual_sd < 1e-10


def test_dsl_end_to_end_and_errors(rng):
    X, labels = two_blobs(5)
    y = labels * 3.0 + 0.1 * rng.standard_normal(len(labels))
    model = baselines.fit_dsl(X, y, SpectralConfig(n_clust=2))
    pred, _ = baselines.predict_dsl(model, X)
    assert np.mean((pred - y) ** 2) < 0.05
    lo, hi = baselines.plugin_interval(model, pred)
    np.testing.assert_allclose(hi - lo, 2 * stats.norm.ppf(0.975) * model.residual_sd)
    assert model.residual_sd == pytest.approx(np.std(y - pred, ddof=1))
    with pytest.raises(DimensionError):
        baselines.predict_dsl(model, X[:, :2])
    with pytest.raises(DimensionError):
        baselines.fit_dsl(X, y[:-1])
    with pytest.raises(ConfigError):
        baselines.fit_dsl(X, y, ridge=-1.0)
    with pytest.raises(ConfigError):
        baselines.spectral_cluster(X[:3], SpectralConfig(n_clust=4))
    with pytest.raises(ConfigError):
        SpectralConfig(n_clust=0)


def test_one_cluster_is_plain_linear_regression(rng):
    X = rng.standard_normal((30, 4))
    y = X @ np.array([1.0, 0.0, -1.0, 2.0]) + 0.3 * rng.standard_normal(30)
    model = baselines.fit_dsl(X, y, SpectralConfig(n_clust=1), ridge=0.0)
    assert np.all(model.assignments == 0)
    Xs = rng.standard_normal((5, 4))
    A = np.column_stack([np.ones(30), X])
    beta = np.linalg.lstsq(A, y, rcond=None)[0]
    np.testing.assert_allclose(baselines.predict_dsl(model, Xs)[0], beta[0] + Xs @ beta[1:], atol=1e-10)


def test_far_apart_blobs_and_permuted_rows():
    X, truth = two_blobs(11, sep=100 * 0.5)
    res = baselines.spectral_cluster(X, SpectralConfig(n_clust=2))
    assert adjusted_rand_score(truth, res.labels) == 1.0
    perm = np.random.default_rng(2).permutation(len(X))
    again = baselines.spectral_cluster(X[perm], SpectralConfig(n_clust=2))
    assert adjusted_rand_score(res.labels[perm], again.labels) == 1.0


def test_two_slopes_match_per_cluster_least_squares(rng):
    X, labels = two_blobs(4, p=2)
    y = np.where(labels == 0, 2.0 * X[:, 1], -3.0 * X[:, 1]) + 0.1 * rng.standard_normal(len(labels))
    model = baselines.fit_dsl(X, y, SpectralConfig(n_clust=2), ridge=0.0)
    for c, fit in enumerate(model.per_cluster):
        rows = model.assignments == c
        A = np.column_stack([np.ones(rows.sum()), X[rows]])
        beta = np.linalg.lstsq(A, y[rows], rcond=None)[0]
        np.testing.assert_allclose(fit.coef, beta[1:], atol=1e-10)
        assert fit.intercept == pytest.approx(beta[0], abs=1e-10)


def test_routing_of_training_and_held_out_points():
    X, _ = two_blobs(6)
    model = baselines.fit_dsl(X, np.zeros(len(X)), SpectralConfig(n_clust=2))
    # a training point is routed to the cluster it was assigned to
    np.testing.assert_array_equal(baselines.route(model, X), model.assignments)
    Xs, truth = two_blobs(60)
    assert adjusted_rand_score(truth, baselines.route(model, Xs)) == 1.0
