"""Model averaging over random projections and bandwidths.

Each member draws its own feature projection of dimension ``m`` and its own
bandwidth, fits a conjugate GP (exact or low-rank) on the compressed
features, and is weighted by its marginal likelihood under equal prior
model probabilities.  Predictions are mixtures of the members' Student-t
predictives.

Members only keep a compact record (compressed design, bandwidth, ``b``,
solve vector); factorizations are rebuilt on demand at prediction time,
which keeps memory at O(s n m) and makes reloaded models bit-identical to
in-memory ones.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np
from scipy import linalg
from scipy.special import stdtr, stdtrit

from . import compress, exact_gp, lowrank_gp
from .errors import CGPRError, ConfigError, DataError, DimensionError, NumericalError
from .kernel import sq_dists
from .simdata import Centering

log = logging.getLogger(__name__)

EXACT = "exact"
LOWRANK = "lowrank"
MODES = (EXACT, LOWRANK)

WORKERS_ENV = "CGPR_WORKERS"
DEFAULT_SUBSAMPLE_CAP = 1000
MIN_WEIGHT = 1e-300
QUANTILE_TOL = 1e-8

# spawn keys separating the random streams derived from one seed
_LAMBDA_KEY = 11
_PHI_KEY = 23


def _seed64(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1, np.uint64)[0])


def default_workers():
    raw = os.environ.get(WORKERS_ENV)
    if not raw:
        return 1
    try:
        w = int(raw)
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    if w < 1:
        raise ConfigError(f"{WORKERS_ENV} must be positive")
    return w


@dataclass(frozen=True)
class GridPolicy:
    stride: int = 1
    m_phi: int = lowrank_gp.DEFAULT_M_PHI
    subsample_cap: int = DEFAULT_SUBSAMPLE_CAP
    per_member_phi: bool = False

    def __post_init__(self):
        if self.stride < 1:
            raise ConfigError("grid stride must be positive")
        if self.m_phi < 1:
            raise ConfigError("m_phi must be positive")
        if self.subsample_cap < 2:
            raise ConfigError("subsample cap must be at least 2")

    def window(self, n, p, mode):
        return grid_window(n, p, mode, self.m_phi)


def grid_window(n, p, mode, m_phi=lowrank_gp.DEFAULT_M_PHI):
    """``[ceil(2 ln p), min(n, p)]`` (exact) or ``[ceil(2 ln p), min(m_phi, p)]``."""
    if p < 2:
        raise ConfigError("need p >= 2 to build the projection grid")
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}")
    lo = math.ceil(2.0 * math.log(p))
    hi = min(n, p) if mode == EXACT else min(m_phi, p)
    if lo > hi:
        raise ConfigError(f"empty projection window [{lo}, {hi}] for n={n}, p={p}, mode={mode}")
    return lo, hi


@dataclass(frozen=True)
class MemberConfig:
    index: int
    m: int
    seed: int
    mode: str
    lam: Optional[float] = None


def build_grid(n, p, mode=EXACT, stride=1, seed=0, m_phi=lowrank_gp.DEFAULT_M_PHI) -> List[MemberConfig]:
    lo, hi = grid_window(n, p, mode, m_phi)
    if stride < 1:
        raise ConfigError("grid stride must be positive")
    ms = list(range(lo, hi + 1, stride))
    children = np.random.SeedSequence(seed).spawn(len(ms))
    return [MemberConfig(i, m, _seed64(c), mode) for i, (m, c) in enumerate(zip(ms, children))]


def draw_lambda(Z, seed, subsample_cap=DEFAULT_SUBSAMPLE_CAP) -> float:
    """Uniform draw on ``[3/d_max, 3/d_min]``.

    ``d_max``/``d_min`` are the largest and smallest non-zero squared
    pairwise distances among (a seeded subsample of at most
    ``subsample_cap``) rows of ``Z``.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(_LAMBDA_KEY,)))
    if Z.shape[0] > subsample_cap:
        Z = Z[np.sort(rng.choice(Z.shape[0], subsample_cap, replace=False))]
    D = sq_dists(Z)[np.triu_indices(Z.shape[0], k=1)]
    D = D[D > 0]
    if D.size == 0:
        raise ConfigError("all compressed points coincide; cannot set a bandwidth")
    lo, hi = 3.0 / D.max(), 3.0 / D.min()
    return float(rng.uniform(lo, hi))


@dataclass(eq=False)
class Member:
    config: MemberConfig
    log_ml: float
    b: float
    Z: np.ndarray = field(repr=False)
    y_solve: np.ndarray = field(repr=False)
    regenerations: int = 0
    Z_pred: Optional[np.ndarray] = field(default=None, repr=False)  # compressed X_pred, if given at fit


@dataclass(eq=False)
class EnsembleModel:
    mode: str
    n: int
    p: int
    members: List[Member]
    weights: np.ndarray
    centering: Centering
    y: np.ndarray = field(repr=False)  # centered training response
    phi_spec: Optional[compress.ProjectionSpec] = None
    per_member_phi: bool = False
    dropped: List[dict] = field(default_factory=list)

    @property
    def log_ml(self):
        return np.array([m.log_ml for m in self.members])

    def phi_for(self, member: Member):
        if self.mode != LOWRANK:
            return None
        spec = self.phi_spec
        if self.per_member_phi:
            spec = replace(spec, seed=_seed64(np.random.SeedSequence(member.config.seed, spawn_key=(_PHI_KEY,))))
        return compress.generate(spec)

    def posterior(self, member: Member):
        """Rebuild the member's posterior from its stored record."""
        lam = member.config.lam
        if self.mode == EXACT:
            return exact_gp.fit(member.Z, self.y, lam, validate=False)
        return lowrank_gp.fit_lowrank(member.Z, self.y, lam, self.phi_for(member), validate=False)

    def projection(self, member: Member):
        return compress.generate(compress.ProjectionSpec(compress.FEATURE, member.config.m, self.p, member.config.seed))


def model_weights(log_ml) -> np.ndarray:
    """Posterior model probabilities under equal priors (log-sum-exp normalized)."""
    log_ml = np.asarray(log_ml, dtype=float)
    if log_ml.size == 0 or not np.any(np.isfinite(log_ml)):
        raise NumericalError("no member has a finite marginal likelihood")
    finite = np.where(np.isfinite(log_ml), log_ml, -np.inf)
    # shift by the max (log-sum-exp), then normalize the exponentials
    # explicitly so the weights sum to one to rounding at any scale
    w = np.exp(finite - finite.max())
    return w / w.sum()


def _fit_member(cfg: MemberConfig, Xc, yc, phi_spec, policy: GridPolicy, Xpc=None):
    P = compress.generate(compress.ProjectionSpec(compress.FEATURE, cfg.m, Xc.shape[1], cfg.seed))
    Z = compress.apply(P, Xc)
    Z_pred = None if Xpc is None else compress.apply(P, Xpc)
    lam = draw_lambda(Z, cfg.seed, policy.subsample_cap)
    cfg = replace(cfg, lam=lam)
    if cfg.mode == EXACT:
        post = exact_gp.fit(Z, yc, lam, validate=False)
        lml = exact_gp.log_marginal(post)
    else:
        spec = phi_spec
        if policy.per_member_phi:
            spec = replace(spec, seed=_seed64(np.random.SeedSequence(cfg.seed, spawn_key=(_PHI_KEY,))))
        post = lowrank_gp.fit_lowrank(Z, yc, lam, compress.generate(spec), validate=False)
        lml = lowrank_gp.log_marginal_lowrank(post)
    return Member(cfg, lml, post.b, Z, post.y_solve, P.regenerations, Z_pred)


def _run(fn, items, workers):
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _validate_xy(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DimensionError("X must be n x p with one response per row")
    if X.shape[0] < 3:
        raise DataError("need at least three training points")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise DataError("training data contain non-finite values")
    return X, y


def fit_ensemble(X, y, policy: GridPolicy = GridPolicy(), mode=EXACT, master_seed=0, workers=None,
                 grid: Optional[List[MemberConfig]] = None, X_pred=None) -> EnsembleModel:
    """Center the data, fit every grid member and weight them.

    ``X_pred`` (optional) is compressed alongside the training data so that
    ``predict_ensemble(model)`` can skip regenerating the projections.

    Members that fail numerically are dropped (recorded in ``dropped``) and
    the weights renormalized over the survivors.  In low-rank mode with
    ``policy.m_phi >= n`` the sample compression would be the identity, so
    the exact path is used instead.
    """
    X, y = _validate_xy(X, y)
    n, p = X.shape
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}")
    if mode == LOWRANK and policy.m_phi >= n:
        log.warning("m_phi=%d >= n=%d: sample compression is the identity, fitting exact GP", policy.m_phi, n)
        mode = EXACT
    workers = default_workers() if workers is None else workers

    x_means = X.mean(axis=0)
    y_mean = float(y.mean())
    Xc = X - x_means
    yc = y - y_mean
    Xpc = None
    if X_pred is not None:
        X_pred = np.atleast_2d(np.asarray(X_pred, dtype=float))
        if X_pred.shape[1] != p:
            raise DimensionError(f"X_pred has {X_pred.shape[1]} features, expected {p}")
        Xpc = X_pred - x_means

    if grid is None:
        grid = build_grid(n, p, mode, policy.stride, master_seed, policy.m_phi)
    grid = [replace(g, mode=mode) for g in grid]
    phi_spec = None
    if mode == LOWRANK:
        phi_seed = _seed64(np.random.SeedSequence(master_seed, spawn_key=(_PHI_KEY,)))
        phi_spec = compress.ProjectionSpec(compress.SAMPLE, policy.m_phi, n, phi_seed)

    def work(cfg):
        try:
            return _fit_member(cfg, Xc, yc, phi_spec, policy, Xpc)
        except (CGPRError, linalg.LinAlgError) as exc:
            return exc

    results = _run(work, grid, workers)
    members, dropped = [], []
    for cfg, res in zip(grid, results):
        if isinstance(res, Exception):
            info = {"index": cfg.index, "m": cfg.m, "error": str(res)}
            info.update(getattr(res, "diagnostics", {}))
            log.warning("dropping member %d (m=%d): %s", cfg.index, cfg.m, res)
            dropped.append(info)
        elif not math.isfinite(res.log_ml):
            log.warning("dropping member %d (m=%d): degenerate response", cfg.index, cfg.m)
            dropped.append({"index": cfg.index, "m": cfg.m, "error": "zero-signal response"})
        else:
            members.append(res)
    if not members:
        raise NumericalError("every ensemble member failed", {"dropped": dropped})

    return EnsembleModel(
        mode=mode, n=n, p=p, members=members, weights=model_weights([m.log_ml for m in members]),
        centering=Centering(y_mean, x_means), y=yc, phi_spec=phi_spec,
        per_member_phi=policy.per_member_phi, dropped=dropped,
    )


@dataclass(frozen=True, eq=False)
class EnsemblePrediction:
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float
    df: int
    weights: np.ndarray = field(repr=False)
    locations: np.ndarray = field(repr=False)  # s x n_pred, centered scale
    scales: np.ndarray = field(repr=False)
    y_mean: float = 0.0


def mixture_cdf(x, weights, locs, scales, df):
    """CDF of ``sum_l w_l * (loc_l + scale_l * t_df)`` at each column's ``x``."""
    return np.sum(weights[:, None] * stdtr(df, (x[None, :] - locs) / scales), axis=0)


def mixture_quantile(q, weights, locs, scales, df, tol=QUANTILE_TOL, max_iter=200):
    """Per-column quantile of a weighted mixture of location-scale t laws.

    Bisection on the mixture CDF, bracketed by the extreme component
    quantiles, until the CDF is within ``tol`` of ``q`` and the bracket has
    collapsed to rounding level.
    """
    weights = np.asarray(weights, dtype=float)
    locs = np.atleast_2d(np.asarray(locs, dtype=float))
    scales = np.atleast_2d(np.asarray(scales, dtype=float))
    keep = weights > MIN_WEIGHT
    weights, locs, scales = weights[keep] / weights[keep].sum(), locs[keep], scales[keep]
    scales = np.maximum(scales, np.finfo(float).tiny)
    tq = stdtrit(df, q)
    comp_q = locs + scales * tq
    lo = comp_q.min(axis=0)
    hi = comp_q.max(axis=0)
    pad = 1e-12 * (1.0 + np.abs(lo) + np.abs(hi))
    lo, hi = lo - pad, hi + pad
    out = np.full(lo.shape, np.nan)
    active = np.ones(lo.shape, dtype=bool)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        F = mixture_cdf(mid, weights, locs, scales, df)
        # a column stops at the point that met the tolerance, not its bracket
        hit = active & (np.abs(F - q) < tol * 1e-3)
        out[hit] = mid[hit]
        active &= ~hit
        below = F < q
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        active &= (hi - lo) > 4 * np.finfo(float).eps * (1.0 + np.abs(mid))
        if not active.any():
            break
    rest = np.isnan(out)
    out[rest] = 0.5 * (lo[rest] + hi[rest])
    return out


def predict_ensemble(model: EnsembleModel, Xs=None, level=0.95, workers=None) -> EnsemblePrediction:
    """Mixture predictive at the rows of ``Xs`` (raw, uncentered features).

    With ``Xs=None`` the test design passed to ``fit_ensemble`` as
    ``X_pred`` is used.  Interval endpoints are the ``(1 -+ level)/2``
    quantiles of the weighted t mixture.
    """
    if not 0.0 < level < 1.0:
        raise ConfigError("level must lie in (0, 1)")
    if Xs is None:
        if any(m.Z_pred is None for m in model.members):
            raise ConfigError("no test design given and none was compressed at fit time")
        n_pred = model.members[0].Z_pred.shape[0]
    else:
        Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
        if Xs.shape[1] != model.p:
            raise DimensionError(f"test data have {Xs.shape[1]} features, model expects {model.p}")
        Xsc = Xs - model.centering.x_means
        n_pred = Xs.shape[0]
    workers = default_workers() if workers is None else workers

    def work(item):
        member, w = item
        if w <= MIN_WEIGHT:
            return np.zeros(n_pred), np.ones(n_pred)
        Zs = member.Z_pred if Xs is None else compress.apply(model.projection(member), Xsc)
        post = model.posterior(member)
        if model.mode == EXACT:
            pd = exact_gp.predict(post, Zs)
        else:
            pd = lowrank_gp.predict_lowrank(post, Zs)
        return pd.locations, pd.scales

    out = _run(work, list(zip(model.members, model.weights)), workers)
    locs = np.array([o[0] for o in out])
    scales = np.array([o[1] for o in out])
    w = model.weights
    mean = w @ locs
    tail = 0.5 * (1.0 - level)
    lower = mixture_quantile(tail, w, locs, scales, model.n)
    upper = mixture_quantile(1.0 - tail, w, locs, scales, model.n)
    ym = model.centering.y_mean
    return EnsemblePrediction(mean + ym, lower + ym, upper + ym, level, model.n, w, locs, scales, ym)
