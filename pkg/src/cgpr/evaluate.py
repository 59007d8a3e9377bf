"""Prediction metrics and replicate summaries."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .errors import DataError, DimensionError

BOOTSTRAP_RESAMPLES = 50


@dataclass
class ReplicateResult:
    mspe: float
    coverage: float
    median_pi_length: float
    runtime_seconds: float

    def to_dict(self):
        return asdict(self)


@dataclass
class SummaryResult:
    mean_mspe: float
    bootstrap_se: Optional[float]
    coverage: dict
    pi_length: dict
    replicates: int

    def to_dict(self):
        return asdict(self)


def mspe(pred, truth) -> float:
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape or pred.size == 0:
        raise DimensionError("pred and truth must be non-empty and the same length")
    return float(np.mean((pred - truth) ** 2))


def interval_metrics(lower, upper, truth):
    """Coverage fraction and median width of the intervals ``[lower, upper]``."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if not (lower.shape == upper.shape == truth.shape) or truth.size == 0:
        raise DimensionError("lower, upper and truth must be non-empty and the same length")
    if np.any(lower > upper):
        raise DataError("interval lower bound exceeds upper bound")
    covered = (truth >= lower) & (truth <= upper)
    return float(covered.mean()), float(np.median(upper - lower))


def bootstrap_se(values, B=BOOTSTRAP_RESAMPLES, seed=0) -> float:
    """Standard error of the mean of replicate-level metrics.

    Draw ``B`` resamples of ``values`` with replacement, average each, and
    return the standard deviation of those averages.
    """
    values = np.asarray(values, dtype=float).ravel()
    if values.size < 2:
        raise DataError("bootstrap needs at least two values")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, values.size, size=(B, values.size))
    means = values[idx].mean(axis=1)
    return float(np.std(means, ddof=1))


def _five_number(x):
    q = np.quantile(x, [0.0, 0.25, 0.5, 0.75, 1.0])
    return dict(zip(("min", "q1", "median", "q3", "max"), map(float, q)))


def summarize(results, B=BOOTSTRAP_RESAMPLES, seed=0) -> SummaryResult:
    """Aggregate replicates; the bootstrap SE is ``None`` with fewer than two."""
    if not results:
        raise DataError("no replicate results to summarize")
    m = np.array([r.mspe for r in results])
    cov = np.array([r.coverage for r in results])
    lengths = np.array([r.median_pi_length for r in results])
    se = bootstrap_se(m, B=B, seed=seed) if len(results) >= 2 else None
    return SummaryResult(
        mean_mspe=float(m.mean()),
        bootstrap_se=se,
        coverage=_five_number(cov),
        pi_length=_five_number(lengths),
        replicates=len(results),
    )

