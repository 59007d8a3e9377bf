"""Random compression maps.

Two kinds of map are supported:

* ``feature`` -- an ``m x p`` matrix with i.i.d. N(0, 1) draws whose rows are
  then orthonormalized.  Applied to each feature vector before the kernel.
* ``sample`` -- an ``m_phi x n`` matrix of raw N(0, 1) draws used by the
  low-rank GP to compress the sample dimension.  Not orthonormalized.

A matrix is a pure function of ``(kind, rows, cols, seed)``, so model files
only need to store the spec.  Draws come from numpy's counter-based Philox
bit generator keyed by a ``SeedSequence`` built from those four values, and
normals use numpy's ziggurat sampler (``Generator.standard_normal``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import linalg
from scipy.spatial.distance import pdist

from .errors import ConfigError, DimensionError, NumericalError

FEATURE = "feature"
SAMPLE = "sample"
_KIND_CODES = {FEATURE: 1, SAMPLE: 2}

# |R_jj| below this fraction of the largest pivot counts as rank deficient
_RANK_TOL = 1e-10
_MAX_REGENERATIONS = 8
_SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class ProjectionSpec:
    kind: str
    rows: int
    cols: int
    seed: int

    def __post_init__(self):
        if self.kind not in _KIND_CODES:
            raise ConfigError(f"unknown projection kind {self.kind!r}")
        if self.rows < 1 or self.cols < 1:
            raise ConfigError(f"projection dims must be positive, got {self.rows}x{self.cols}")
        if self.kind == FEATURE and self.rows > self.cols:
            raise DimensionError(
                f"feature projection needs rows <= cols for orthonormal rows, got {self.rows}x{self.cols}"
            )
        if not 0 <= int(self.seed) <= _SEED_MASK:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    def to_dict(self):
        return {"kind": self.kind, "rows": self.rows, "cols": self.cols, "seed": int(self.seed)}

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], int(d["rows"]), int(d["cols"]), int(d["seed"]))


@dataclass(frozen=True, eq=False)
class ProjectionMatrix:
    spec: ProjectionSpec
    entries: np.ndarray = field(repr=False)
    regenerations: int = 0

    @property
    def rows(self):
        return self.spec.rows

    @property
    def cols(self):
        return self.spec.cols


def _rng(spec, attempt):
    ss = np.random.SeedSequence(
        entropy=int(spec.seed),
        spawn_key=(_KIND_CODES[spec.kind], spec.rows, spec.cols, attempt),
    )
    return np.random.Generator(np.random.Philox(ss))


def _cholesky_qr2(G):
    # two passes of Q <- L^{-1} Q with L L' = Q Q'; fine for the well
    # conditioned wide Gaussian matrices drawn here.  L^{-1} is formed
    # explicitly (m x m) since one GEMM beats a wide triangular solve.
    Q = G
    eye = np.eye(G.shape[0])
    for _ in range(2):
        try:
            L = linalg.cholesky(Q @ Q.T, lower=True, check_finite=False)
        except linalg.LinAlgError:
            return None
        d = np.diag(L)
        if np.min(d) <= _RANK_TOL * np.max(d):
            return None
        Q = linalg.solve_triangular(L, eye, lower=True, check_finite=False) @ Q
    return Q


def _orthonormalize_rows(G):
    """Return ``G`` with orthonormal rows, or None if ``G`` is rank deficient.

    The result is the one Gram-Schmidt produces (``G = T Q`` with ``T``
    lower triangular, positive diagonal).  Wide matrices use Cholesky-QR
    twice; near-square ones use Householder QR of ``G.T`` with signs fixed.
    """
    if 4 * G.shape[0] <= G.shape[1]:
        Q = _cholesky_qr2(G)
        if Q is not None:
            return np.ascontiguousarray(Q)
    Q, R = np.linalg.qr(G.T)
    d = np.diag(R)
    if np.min(np.abs(d)) <= _RANK_TOL * np.max(np.abs(d)):
        return None
    signs = np.where(d < 0, -1.0, 1.0)
    return np.ascontiguousarray((Q * signs).T)


def generate(spec: ProjectionSpec) -> ProjectionMatrix:
    """Build the projection matrix determined by ``spec``.

    Feature-kind draws that come out rank deficient are redrawn from a
    perturbed sub-stream; the number of redraws is kept on the result.
    """
    if spec.kind == SAMPLE:
        G = _rng(spec, 0).standard_normal((spec.rows, spec.cols))
        G.setflags(write=False)
        return ProjectionMatrix(spec, G)

    for attempt in range(_MAX_REGENERATIONS):
        G = _rng(spec, attempt).standard_normal((spec.rows, spec.cols))
        Q = _orthonormalize_rows(G)
        if Q is not None:
            Q.setflags(write=False)
            return ProjectionMatrix(spec, Q, regenerations=attempt)
    raise NumericalError(
        "could not draw a full-rank feature projection",
        {"spec": spec.to_dict(), "attempts": _MAX_REGENERATIONS},
    )


def apply(P: ProjectionMatrix, X) -> np.ndarray:
    """Compress the rows of ``X``: row ``i`` of the result is ``P @ X[i]``."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != P.cols:
        raise DimensionError(f"X has {X.shape[1]} columns, projection expects {P.cols}")
    return X @ P.entries.T


class DistortionResult(NamedTuple):
    fraction: float
    n_pairs: int
    vacuous: bool


def distortion_check(P: ProjectionMatrix, X, kappa: float) -> DistortionResult:
    """Fraction of point pairs whose compressed distance stays in the JL band.

    A pair passes when
    ``(1-kappa) sqrt(m/p) |xi-xj| < |P xi - P xj| < (1+kappa) sqrt(m/p) |xi-xj|``.
    Pairs at zero distance are skipped; with no pairs left the fraction is 1.0
    and ``vacuous`` is set.
    """
    if not 0.0 < kappa < 1.0:
        raise ConfigError("kappa must lie in (0, 1)")
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise DimensionError("need a 2-D X with at least two rows")
    Z = apply(P, X)
    d_raw = pdist(X)
    d_cmp = pdist(Z)
    keep = d_raw > 0
    if not keep.any():
        return DistortionResult(1.0, 0, True)
    scaled = np.sqrt(P.rows / P.cols) * d_raw[keep]
    d_cmp = d_cmp[keep]
    ok = ((1 - kappa) * scaled < d_cmp) & (d_cmp < (1 + kappa) * scaled)
    return DistortionResult(float(ok.mean()), int(keep.sum()), False)
