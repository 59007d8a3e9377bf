"""Squared-exponential kernel, ``k(u, v) = exp(-lam * |u - v|^2)``.

``lam`` is an inverse squared length-scale.  No jitter is added here; the
GP solvers only ever factor ``K + I`` (or a diagonal-plus-low-rank form with
a unit floor), which is well conditioned on its own.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError


def check_bandwidth(lam) -> float:
    lam = float(lam)
    if not (lam > 0 and math.isfinite(lam)):
        raise ConfigError(f"bandwidth must be positive and finite, got {lam!r}")
    return lam


@dataclass(frozen=True, eq=False)
class GramKernel:
    K: np.ndarray = field(repr=False)
    lam: float


def kval(u, v, lam) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise DimensionError(f"vectors differ in shape: {u.shape} vs {v.shape}")
    d = u - v
    return math.exp(-check_bandwidth(lam) * float(d @ d))


def sq_dists(A, B=None):
    """Pairwise squared Euclidean distances via |a|^2 + |b|^2 - 2 a.b.

    With ``B`` omitted the result is symmetric to the bit and has an exact
    zero diagonal.
    """
    A = np.asarray(A, dtype=float)
    a2 = np.einsum("ij,ij->i", A, A)
    if B is None:
        D = a2[:, None] + a2[None, :] - 2.0 * (A @ A.T)
        np.maximum(D, 0.0, out=D)
        # mirror the upper triangle so the result is exactly symmetric
        iu = np.triu_indices_from(D, k=1)
        D.T[iu] = D[iu]
        np.fill_diagonal(D, 0.0)
        return D
    B = np.asarray(B, dtype=float)
    if A.shape[1] != B.shape[1]:
        raise DimensionError(f"column mismatch: {A.shape[1]} vs {B.shape[1]}")
    b2 = np.einsum("ij,ij->i", B, B)
    D = a2[:, None] + b2[None, :] - 2.0 * (A @ B.T)
    np.maximum(D, 0.0, out=D)
    return D


def gram(Z, lam) -> GramKernel:
    """Gram matrix of the rows of ``Z``."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    lam = check_bandwidth(lam)
    D = sq_dists(Z)
    D *= -lam
    return GramKernel(np.exp(D, out=D), lam)


def cross_gram(Zs, Z, lam) -> np.ndarray:
    """Kernel between test rows ``Zs`` (n_pred x m) and training rows ``Z``."""
    Zs = np.atleast_2d(np.asarray(Zs, dtype=float))
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    lam = check_bandwidth(lam)
    D = sq_dists(Zs, Z)
    D *= -lam
    return np.exp(D, out=D)
