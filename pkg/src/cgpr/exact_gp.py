"""Conjugate GP regression on compressed features, Jeffreys-prior limit.

Model: ``y = mu + eps`` with ``mu | s2 ~ N(0, s2 K)``, ``eps ~ N(0, s2 I)`` and
``p(s2) ~ 1/s2``.  Everything below follows from one Cholesky factor of
``K + I``:

* ``s2 | y ~ IG(n/2, b)`` with ``b = y'(K+I)^{-1}y / 2``
* ``mu | y ~ t_n(K(K+I)^{-1}y, (2b/n) K(K+I)^{-1})``
* ``y* | y ~ t_n(K*(K+I)^{-1}y, (2b/n)(I + K** - K*(K+I)^{-1}K*'))``

``K(K+I)^{-1}`` is evaluated as ``I - (K+I)^{-1}`` so ``K`` itself is never
inverted.  The second argument of ``t_n`` is a scale matrix; the covariance
is ``n / (n - 2)`` times it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg, stats
from scipy.special import gammaln

from .errors import DataError, DimensionError, NumericalError
from .kernel import check_bandwidth, cross_gram, gram

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True, eq=False)
class PredictiveDistribution:
    """Per-point Student-t predictive: ``location + scale * t_df``."""

    df: int
    locations: np.ndarray
    scales: np.ndarray
    full_scale: Optional[np.ndarray] = field(default=None, repr=False)

    def interval(self, level=0.95):
        q = stats.t.ppf(0.5 + level / 2.0, self.df)
        return self.locations - q * self.scales, self.locations + q * self.scales


@dataclass(frozen=True, eq=False)
class GPPosterior:
    n: int
    a: float
    b: float
    lam: float
    Z: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    chol: np.ndarray = field(repr=False)  # lower factor of K + I
    y_solve: np.ndarray = field(repr=False)  # (K + I)^{-1} y
    degenerate: bool = False

    @property
    def scale_factor(self):
        return 2.0 * self.b / self.n

    def solve(self, rhs):
        return linalg.cho_solve((self.chol, True), rhs, check_finite=False)

    def logdet(self):
        return 2.0 * float(np.sum(np.log(np.diag(self.chol))))


def _check_centered(y):
    scale = max(float(np.max(np.abs(y))), 1.0)
    if abs(float(np.mean(y))) > 1e-10 * scale:
        raise DataError("response must be centered before fitting")


def _cholesky_plus_identity(K):
    A = K + np.eye(K.shape[0])
    try:
        return linalg.cholesky(A, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise NumericalError(
            "Cholesky of K + I failed",
            {"cond_estimate": float(np.linalg.cond(A)), "n": K.shape[0]},
        ) from exc


def fit(Z, y, lam, validate=True) -> GPPosterior:
    """Posterior for one (projection, bandwidth) member.

    ``Z`` is the compressed training design, ``y`` the centered response.
    ``validate=False`` skips the ``n >= 2`` and centering checks.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    lam = check_bandwidth(lam)
    n = y.shape[0]
    if Z.shape[0] != n:
        raise DimensionError(f"Z has {Z.shape[0]} rows but y has {n} entries")
    if validate:
        if n < 2:
            raise DataError("need at least two training points")
        _check_centered(y)

    L = _cholesky_plus_identity(gram(Z, lam).K)
    alpha = linalg.cho_solve((L, True), y, check_finite=False)
    b = 0.5 * float(y @ alpha)
    return GPPosterior(
        n=n, a=n / 2.0, b=b, lam=lam, Z=Z, y=y, chol=L, y_solve=alpha, degenerate=not b > 0
    )


def posterior_mu(post: GPPosterior):
    """Location vector and scale matrix of the t posterior of ``mu``."""
    mean = post.y - post.y_solve
    inv = post.solve(np.eye(post.n))
    S = np.eye(post.n) - inv
    S = 0.5 * (S + S.T)
    return mean, post.scale_factor * S


def predict(post: GPPosterior, Zs, lam=None, want_full=False) -> PredictiveDistribution:
    Zs = np.atleast_2d(np.asarray(Zs, dtype=float))
    if Zs.shape[1] != post.Z.shape[1]:
        raise DimensionError(
            f"test design has {Zs.shape[1]} columns, model was fit on {post.Z.shape[1]}"
        )
    lam = post.lam if lam is None else check_bandwidth(lam)
    Ks = cross_gram(Zs, post.Z, lam)
    loc = Ks @ post.y_solve
    V = linalg.solve_triangular(post.chol, Ks.T, lower=True, check_finite=False)
    var = post.scale_factor * (2.0 - np.einsum("ij,ij->j", V, V))
    full = None
    if want_full:
        full = post.scale_factor * (np.eye(Zs.shape[0]) + gram(Zs, lam).K - V.T @ V)
        full = 0.5 * (full + full.T)
    return PredictiveDistribution(post.n, loc, np.sqrt(np.maximum(var, 0.0)), full)


def evidence(logdet, quad, n):
    """Log marginal likelihood from ``log|M|`` and ``y'M^{-1}y``.

    Shared by the exact and low-rank paths; ``M`` is ``K + I`` or its
    low-rank stand-in.
    """
    if not quad > 0:
        return -math.inf
    half = 0.5 * n
    return -0.5 * logdet + half * math.log(2.0) + gammaln(half) - half * math.log(quad) - half * LOG_2PI


def log_marginal(post: GPPosterior, y=None) -> float:
    """``log P(D | member)``; ``-inf`` when the response is identically zero."""
    if y is None:
        quad = 2.0 * post.b
    else:
        y = np.asarray(y, dtype=float).ravel()
        if y.shape[0] != post.n:
            raise DimensionError("y length does not match the posterior")
        quad = float(y @ post.solve(y))
    return evidence(post.logdet(), quad, post.n)
