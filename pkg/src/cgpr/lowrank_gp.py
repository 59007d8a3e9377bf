"""Large-n approximation: compress the sample dimension with a Gaussian map.

With ``Phi`` an ``m_phi x n`` N(0, 1) matrix, ``U = K Phi'`` and
``A = Phi K Phi'``, the rank-``m_phi`` smoother satisfies
``H2 K = K H2' = H2 K H2' = U A^{-1} U'``.  Writing ``A = L L'`` and
``V = U L^{-T}`` this is ``V V'``, and the diagonal correction is
``H1 = diag(K - V V') + I``.  All n x n solves go through
``W = (H1 + V V')^{-1}`` via Sherman-Woodbury-Morrison:

* ``b2 = y'Wy / 2``
* posterior mean ``V V' W y``, scale ``(2 b2 / n)(K - V V' W V V')``
* predictive location ``K* W y``, scale ``(2 b2 / n)(I + K** - K* W K*')``

No dense n x n matrix is factorized; ``K`` is streamed in row blocks to
form ``U``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .compress import SAMPLE, ProjectionMatrix
from .errors import DataError, DimensionError, NumericalError
from .exact_gp import PredictiveDistribution, _check_centered, evidence
from .kernel import check_bandwidth, cross_gram, gram

log = logging.getLogger(__name__)

DEFAULT_M_PHI = 150
# relative to the mean diagonal; the plain factor is tried first
JITTER_LADDER = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)
_BLOCK_ROWS = 1024


class DiagPlusLowRank:
    """``diag(h) + V V'`` with solves and log-determinant in O(n r^2)."""

    def __init__(self, h, V):
        h = np.asarray(h, dtype=float)
        V = np.asarray(V, dtype=float)
        if V.ndim != 2 or V.shape[0] != h.shape[0]:
            raise DimensionError("V must have one row per diagonal entry")
        if np.any(h <= 0):
            raise DataError("diagonal part must be strictly positive")
        self.h = h
        self.V = V
        self._Vh = V / h[:, None]
        M = np.eye(V.shape[1]) + V.T @ self._Vh
        try:
            self._Mchol = linalg.cholesky(M, lower=True, check_finite=False)
        except linalg.LinAlgError as exc:
            raise NumericalError("Woodbury core matrix is not positive definite") from exc

    def solve(self, rhs):
        rhs = np.asarray(rhs, dtype=float)
        vec = rhs.ndim == 1
        R = rhs[:, None] if vec else rhs
        if R.shape[0] != self.h.shape[0]:
            raise DimensionError("right-hand side has the wrong number of rows")
        t = linalg.cho_solve((self._Mchol, True), self.V.T @ (R / self.h[:, None]), check_finite=False)
        out = R / self.h[:, None] - self._Vh @ t
        return out[:, 0] if vec else out

    def logdet(self):
        return float(np.sum(np.log(self.h))) + 2.0 * float(np.sum(np.log(np.diag(self._Mchol))))


def swm_solve(h, U, C, rhs):
    """Solve ``(diag(h) + U C U') x = rhs`` through an r x r core.

    ``C`` must be symmetric positive semidefinite; it is factored once as
    ``C = L L'`` and the problem is handed to :class:`DiagPlusLowRank` with
    ``V = U L``.
    """
    h = np.asarray(h, dtype=float)
    U = np.atleast_2d(np.asarray(U, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    if U.shape != (h.shape[0], C.shape[0]) or C.shape[0] != C.shape[1]:
        raise DimensionError("inconsistent shapes for diag(h) + U C U'")
    w, Q = linalg.eigh(C)
    if w.min() < -1e-12 * max(abs(w).max(), 1.0):
        raise NumericalError("core matrix C is not positive semidefinite", {"min_eig": float(w.min())})
    V = U @ (Q * np.sqrt(np.clip(w, 0.0, None)))
    return DiagPlusLowRank(h, V).solve(rhs)


@dataclass(frozen=True, eq=False)
class LowRankPosterior:
    n: int
    m_phi: int
    a: float
    b: float
    lam: float
    Z: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    phi: ProjectionMatrix = field(repr=False)
    U: np.ndarray = field(repr=False)
    V: np.ndarray = field(repr=False)  # V V' = U C U'
    h: np.ndarray = field(repr=False)  # diagonal of H1
    W: DiagPlusLowRank = field(repr=False)
    y_solve: np.ndarray = field(repr=False)  # W y
    jitter: float = 0.0
    degenerate: bool = False

    @property
    def scale_factor(self):
        return 2.0 * self.b / self.n

    def solve(self, rhs):
        return self.W.solve(rhs)


def kernel_times(Z, lam, R, block_rows=_BLOCK_ROWS):
    """``gram(Z, lam).K @ R`` without holding the full n x n Gram matrix."""
    n = Z.shape[0]
    out = np.empty((n, R.shape[1]))
    for start in range(0, n, block_rows):
        stop = min(start + block_rows, n)
        out[start:stop] = cross_gram(Z[start:stop], Z, lam) @ R
    return out


def _factor_core(A):
    scale = float(np.mean(np.diag(A)))
    if not scale > 0:
        raise NumericalError("Phi K Phi' has a non-positive diagonal", {"mean_diag": scale})
    eye = np.eye(A.shape[0])
    for rel in JITTER_LADDER:
        try:
            return linalg.cholesky(A + rel * scale * eye, lower=True, check_finite=False), rel * scale
        except linalg.LinAlgError:
            log.debug("Phi K Phi' not PD at relative jitter %g", rel)
    raise NumericalError(
        "Phi K Phi' is not positive definite after maximum jitter",
        {"max_relative_jitter": JITTER_LADDER[-1], "mean_diag": scale, "m_phi": A.shape[0]},
    )


def fit_lowrank(Z, y, lam, phi: ProjectionMatrix, validate=True) -> LowRankPosterior:
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    lam = check_bandwidth(lam)
    n = y.shape[0]
    if Z.shape[0] != n:
        raise DimensionError(f"Z has {Z.shape[0]} rows but y has {n} entries")
    if phi.spec.kind != SAMPLE or phi.cols != n:
        raise DimensionError(f"need a sample-kind Phi with {n} columns")
    if phi.rows > n:
        raise DimensionError("Phi must have at most n rows")
    if validate:
        if n < 2:
            raise DataError("need at least two training points")
        _check_centered(y)

    P = phi.entries
    U = kernel_times(Z, lam, P.T)
    A = P @ U
    A = 0.5 * (A + A.T)
    LA, jitter = _factor_core(A)
    V = linalg.solve_triangular(LA, U.T, lower=True, check_finite=False).T
    resid = 1.0 - np.einsum("ij,ij->i", V, V)
    h = 1.0 + np.clip(resid, 0.0, 1.0)
    W = DiagPlusLowRank(h, V)
    alpha = W.solve(y)
    b = 0.5 * float(y @ alpha)
    return LowRankPosterior(
        n=n, m_phi=phi.rows, a=n / 2.0, b=b, lam=lam, Z=Z, y=y, phi=phi, U=U, V=V, h=h,
        W=W, y_solve=alpha, jitter=jitter, degenerate=not b > 0,
    )


def posterior_mu_lowrank(post: LowRankPosterior, full=False):
    """Posterior location of ``mu`` and its scale (diagonal, or full if asked)."""
    V = post.V
    mean = V @ (V.T @ post.y_solve)
    WV = post.solve(V)
    G = V.T @ WV
    VG = V @ G
    if full:
        S = gram(post.Z, post.lam).K - VG @ V.T
        return mean, post.scale_factor * 0.5 * (S + S.T)
    return mean, post.scale_factor * (1.0 - np.einsum("ij,ij->i", VG, V))


def predict_lowrank(post: LowRankPosterior, Zs, lam=None, want_full=False) -> PredictiveDistribution:
    Zs = np.atleast_2d(np.asarray(Zs, dtype=float))
    if Zs.shape[1] != post.Z.shape[1]:
        raise DimensionError(
            f"test design has {Zs.shape[1]} columns, model was fit on {post.Z.shape[1]}"
        )
    lam = post.lam if lam is None else check_bandwidth(lam)
    Ks = cross_gram(Zs, post.Z, lam)
    loc = Ks @ post.y_solve
    WKt = post.solve(Ks.T)
    var = post.scale_factor * (2.0 - np.einsum("ij,ji->i", Ks, WKt))
    full = None
    if want_full:
        full = post.scale_factor * (np.eye(Zs.shape[0]) + gram(Zs, lam).K - Ks @ WKt)
        full = 0.5 * (full + full.T)
    return PredictiveDistribution(post.n, loc, np.sqrt(np.maximum(var, 0.0)), full)


def log_marginal_lowrank(post: LowRankPosterior, y=None) -> float:
    if y is None:
        quad = 2.0 * post.b
    else:
        y = np.asarray(y, dtype=float).ravel()
        if y.shape[0] != post.n:
            raise DimensionError("y length does not match the posterior")
        quad = float(y @ post.solve(y))
    return evidence(post.W.logdet(), quad, post.n)
