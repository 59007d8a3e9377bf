"""Distributed supervised learning (DSL) baseline.

Spectral clustering of the raw features (Ng-Jordan-Weiss normalized
affinity, k-means on row-normalized leading eigenvectors), then an
independent ridge regression inside each cluster.  Test points are routed
to the cluster with the nearest training centroid in feature space.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy import linalg, stats
from sklearn.cluster import KMeans

from .errors import ConfigError, DimensionError
from .kernel import sq_dists

log = logging.getLogger(__name__)

DEFAULT_N_CLUST = 10
DEFAULT_RIDGE = 1.0
DEFAULT_COMPRESSED_M = 60


@dataclass(frozen=True)
class SpectralConfig:
    n_clust: int = DEFAULT_N_CLUST
    sigma2: Optional[float] = None  # None: median pairwise squared distance
    kmeans_restarts: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.n_clust < 1:
            raise ConfigError("n_clust must be at least 1")
        if self.kmeans_restarts < 1:
            raise ConfigError("kmeans_restarts must be at least 1")
        if self.sigma2 is not None and not self.sigma2 > 0:
            raise ConfigError("sigma2 must be positive")


@dataclass(frozen=True, eq=False)
class SpectralResult:
    labels: np.ndarray
    embedding: np.ndarray = field(repr=False)  # row-normalized eigenvectors
    eigenvalues: np.ndarray = field(repr=False)
    sigma2: float = 1.0
    floored_rows: int = 0


def affinity(X, sigma2=None):
    """Gaussian affinity with a zero diagonal; returns ``(A, sigma2)``."""
    D = sq_dists(X)
    if sigma2 is None:
        off = D[np.triu_indices_from(D, k=1)]
        sigma2 = float(np.median(off)) if off.size else 1.0
        if not sigma2 > 0:
            sigma2 = 1.0
    A = np.exp(-D / (2.0 * sigma2))
    np.fill_diagonal(A, 0.0)
    return A, sigma2


def normalized_affinity(A):
    """``D^{-1/2} A D^{-1/2}``; zero row sums are floored and counted."""
    d = A.sum(axis=1)
    floor = np.finfo(float).tiny
    n_floored = int(np.sum(d < floor))
    if n_floored:
        log.warning("%d isolated points in the affinity graph; row sums floored", n_floored)
    s = 1.0 / np.sqrt(np.maximum(d, floor))
    L = s[:, None] * A * s[None, :]
    return 0.5 * (L + L.T), n_floored


def _fix_signs(S):
    # first entry with non-negligible magnitude made positive, per column
    for j in range(S.shape[1]):
        col = S[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if nz.size and col[nz[0]] < 0:
            S[:, j] = -col
    return S


def spectral_cluster(X, cfg: SpectralConfig = SpectralConfig()) -> SpectralResult:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[0]
    if cfg.n_clust > n:
        raise ConfigError(f"n_clust={cfg.n_clust} exceeds n={n}")
    A, sigma2 = affinity(X, cfg.sigma2)
    L, n_floored = normalized_affinity(A)
    k = cfg.n_clust
    evals, evecs = linalg.eigh(L, subset_by_index=[n - k, n - 1])
    order = np.argsort(evals)[::-1]
    evals, S = evals[order], _fix_signs(evecs[:, order].copy())
    norms = np.linalg.norm(S, axis=1, keepdims=True)
    S = S / np.where(norms > 0, norms, 1.0)
    if k == 1:
        labels = np.zeros(n, dtype=int)
    else:
        km = KMeans(n_clusters=k, n_init=cfg.kmeans_restarts, random_state=cfg.seed)
        labels = km.fit_predict(S)
    return SpectralResult(labels, S, evals, sigma2, n_floored)


@dataclass
class ClusterFit:
    coef: np.ndarray = field(repr=False)
    intercept: float = 0.0
    size: int = 0


@dataclass(eq=False)
class ClusterModel:
    assignments: np.ndarray = field(repr=False)
    centroids: np.ndarray = field(repr=False)  # raw-feature centroids, one row per cluster
    per_cluster: List[ClusterFit] = field(repr=False)
    ridge: float = DEFAULT_RIDGE
    residual_sd: float = 0.0


def ridge_fit(X, y, ridge):
    """Ridge regression with an unpenalized intercept.

    Uses the dual form when there are more features than rows; ``ridge=0``
    gives the minimum-norm least-squares solution.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if n == 1:
        return ClusterFit(np.zeros(p), float(y[0]), 1)
    xm, ym = X.mean(axis=0), float(y.mean())
    Xc, yc = X - xm, y - ym
    if ridge == 0:
        coef = np.linalg.lstsq(Xc, yc, rcond=None)[0]
    elif p > n:
        coef = Xc.T @ linalg.solve(Xc @ Xc.T + ridge * np.eye(n), yc, assume_a="pos")
    else:
        coef = linalg.solve(Xc.T @ Xc + ridge * np.eye(p), Xc.T @ yc, assume_a="pos")
    return ClusterFit(coef, ym - float(xm @ coef), n)


def fit_dsl(X, y, cfg: SpectralConfig = SpectralConfig(), ridge=DEFAULT_RIDGE, labels=None) -> ClusterModel:
    """Cluster, then fit one ridge model per cluster.

    Pass ``labels`` to skip clustering and use a given partition.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.shape[0]:
        raise DimensionError("X and y disagree on the number of rows")
    if ridge < 0:
        raise ConfigError("ridge must be non-negative")
    if labels is None:
        labels = spectral_cluster(X, cfg).labels
    labels = np.asarray(labels)
    ids = np.unique(labels)
    # relabel to 0..k-1
    assignments = np.searchsorted(ids, labels)
    fits, centroids = [], []
    for c in range(ids.size):
        rows = assignments == c
        fits.append(ridge_fit(X[rows], y[rows], ridge))
        centroids.append(X[rows].mean(axis=0))
    model = ClusterModel(assignments, np.array(centroids), fits, ridge)
    resid = y - predict_dsl(model, X, clusters=assignments)[0]
    model.residual_sd = float(np.std(resid, ddof=1)) if y.size > 1 else 0.0
    return model


def route(model: ClusterModel, Xs):
    return np.argmin(sq_dists(np.atleast_2d(Xs), model.centroids), axis=1)


def predict_dsl(model: ClusterModel, Xs, clusters=None):
    """Predictions and the cluster each test row was routed to.

    ``clusters`` overrides the centroid routing (used on training rows).
    """
    Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
    if Xs.shape[1] != model.centroids.shape[1]:
        raise DimensionError("test features do not match the fitted model")
    ids = route(model, Xs) if clusters is None else np.asarray(clusters)
    pred = np.empty(Xs.shape[0])
    for c, f in enumerate(model.per_cluster):
        rows = ids == c
        if rows.any():
            pred[rows] = Xs[rows] @ f.coef + f.intercept
    return pred, ids


def plugin_interval(model: ClusterModel, pred, level=0.95):
    """Normal plug-in interval: prediction +- z * residual s.d."""
    z = stats.norm.ppf(0.5 + level / 2.0)
    return pred - z * model.residual_sd, pred + z * model.residual_sd
