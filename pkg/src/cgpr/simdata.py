"""Swiss-roll manifold regression benchmarks.

Latent coordinates ``t ~ U(3pi/2, 9pi/2)`` and ``h ~ U(0, h_max)`` give the
noise-free features ``(t cos t, h, t sin t, 0, ..., 0)`` in R^p; every
coordinate then gets independent N(0, tau^2) noise.  The response is
``sin(5 pi t) + h^2`` plus N(0, 0.02^2) noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import ConfigError, DataError

T_LOW = 1.5 * math.pi
T_HIGH = 4.5 * math.pi
RESPONSE_NOISE_SD = 0.02

SMALL_N = "small_n"
LARGE_N = "large_n"


@dataclass(frozen=True)
class SwissRollConfig:
    n: int
    p: int
    tau: float
    h_max: float = 3.0
    response_noise_sd: float = RESPONSE_NOISE_SD
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("n must be at least 1")
        if self.p < 3:
            raise ConfigError("p must be at least 3")
        if self.tau < 0 or self.response_noise_sd < 0:
            raise ConfigError("noise levels must be non-negative")
        if not self.h_max > 0:
            raise ConfigError("h_max must be positive")


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    latent: Optional[np.ndarray] = field(default=None, repr=False)  # columns t, h

    def __post_init__(self):
        if self.X.ndim != 2 or self.y.ndim != 1 or self.X.shape[0] != self.y.shape[0]:
            raise DataError("X must be n x p and y of length n")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.y))):
            raise DataError("dataset contains non-finite values")

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    def subset(self, idx):
        lat = None if self.latent is None else self.latent[idx]
        return Dataset(self.X[idx], self.y[idx], lat)


@dataclass(frozen=True)
class Centering:
    y_mean: float
    x_means: np.ndarray = field(repr=False)


def _streams(seed):
    # independent latent / feature-noise / response-noise streams
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3)]


def gen_swiss_roll(cfg: SwissRollConfig, feature_noise_seed=None) -> Dataset:
    """Draw ``cfg.n`` rows.

    ``feature_noise_seed`` replaces the feature-noise stream only, leaving
    the latent draws and the response untouched.
    """
    latent_rng, noise_rng, resp_rng = _streams(cfg.seed)
    if feature_noise_seed is not None:
        noise_rng = np.random.default_rng(feature_noise_seed)
    t = latent_rng.uniform(T_LOW, T_HIGH, cfg.n)
    h = latent_rng.uniform(0.0, cfg.h_max, cfg.n)

    if cfg.tau > 0:
        X = noise_rng.normal(0.0, cfg.tau, (cfg.n, cfg.p))
    else:
        X = np.zeros((cfg.n, cfg.p))
    X[:, 0] += t * np.cos(t)
    X[:, 1] += h
    X[:, 2] += t * np.sin(t)

    y = response_surface(t, h)
    if cfg.response_noise_sd > 0:
        y = y + resp_rng.normal(0.0, cfg.response_noise_sd, cfg.n)
    return Dataset(X, y, np.column_stack([t, h]))


def response_surface(t, h):
    return np.sin(5.0 * np.pi * np.asarray(t)) + np.asarray(h) ** 2


def center(ds: Dataset):
    x_means = ds.X.mean(axis=0)
    y_mean = float(ds.y.mean())
    return Dataset(ds.X - x_means, ds.y - y_mean, ds.latent), Centering(y_mean, x_means)


def uncenter(ds: Dataset, stats: Centering) -> Dataset:
    return Dataset(ds.X + stats.x_means, ds.y + stats.y_mean, ds.latent)


def split(ds: Dataset, n_train):
    """First ``n_train`` rows for training, the rest for testing."""
    if not 0 < n_train < ds.n:
        raise ConfigError(f"n_train must be in (0, {ds.n})")
    return ds.subset(slice(0, n_train)), ds.subset(slice(n_train, None))


def random_split(ds: Dataset, n_test, seed):
    """Random train/test partition, e.g. 648/50 on a 698-row dataset."""
    if not 0 < n_test < ds.n:
        raise ConfigError(f"n_test must be in (0, {ds.n})")
    perm = np.random.default_rng(seed).permutation(ds.n)
    return ds.subset(np.sort(perm[n_test:])), ds.subset(np.sort(perm[:n_test]))


_TABLES = {
    SMALL_N: dict(n=100, taus=(0.02, 0.05, 0.10), h_max=3.0),
    LARGE_N: dict(n=5000, taus=(0.03, 0.06, 0.10), h_max=5.0),
}


def scenario_matrix(table: str, seed=0):
    """The six (p, tau) settings of the small-n or large-n study, in table order."""
    try:
        spec = _TABLES[table]
    except KeyError:
        raise ConfigError(f"unknown scenario table {table!r}") from None
    return [
        SwissRollConfig(n=spec["n"], p=p, tau=tau, h_max=spec["h_max"], seed=seed)
        for tau in spec["taus"]
        for p in (10000, 20000)
    ]


def with_seed(cfg: SwissRollConfig, seed) -> SwissRollConfig:
    return replace(cfg, seed=seed)
