"""Replicated swiss-roll benchmarks for the compressed GP and the DSL baseline."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import baselines, compress, ensemble, evaluate, simdata
from .errors import CGPRError, ConfigError

log = logging.getLogger(__name__)

CGP = "cgp"
DSL = "dsl"
METHODS = (CGP, DSL)
DEFAULT_N_PRED = 100
DEFAULT_REPS = 10

SCENARIOS = {
    "table2": (simdata.SMALL_N, ensemble.EXACT),
    "table4": (simdata.LARGE_N, ensemble.LOWRANK),
}


@dataclass
class BenchmarkConfig:
    scenarios: List[simdata.SwissRollConfig]
    reps: int = DEFAULT_REPS
    methods: tuple = (CGP,)
    mode: str = ensemble.EXACT
    policy: ensemble.GridPolicy = field(default_factory=ensemble.GridPolicy)
    n_pred: int = DEFAULT_N_PRED
    level: float = 0.95
    master_seed: int = 0
    workers: Optional[int] = None
    dsl: baselines.SpectralConfig = field(default_factory=baselines.SpectralConfig)
    dsl_ridge: float = baselines.DEFAULT_RIDGE
    dsl_compress_m: Optional[int] = None  # compress features before DSL, e.g. 60

    def __post_init__(self):
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise ConfigError(f"unknown methods: {sorted(bad)}")
        if self.reps < 1 or self.n_pred < 1:
            raise ConfigError("reps and n_pred must be positive")


def scenario_configs(name, n=None, p=None, tau=None, h_max=3.0):
    """Scenario list and default GP mode for a named scenario set."""
    if name in SCENARIOS:
        table, mode = SCENARIOS[name]
        return simdata.scenario_matrix(table), mode
    if name == "custom":
        if n is None or p is None or tau is None:
            raise ConfigError("custom scenario needs n, p and tau")
        return [simdata.SwissRollConfig(n=n, p=p, tau=tau, h_max=h_max)], ensemble.EXACT
    raise ConfigError(f"unknown scenario {name!r}")


def _run_cgp(train, test, bc: BenchmarkConfig, seed, timings):
    t0 = time.perf_counter()
    model = ensemble.fit_ensemble(train.X, train.y, bc.policy, bc.mode, seed, bc.workers, X_pred=test.X)
    t1 = time.perf_counter()
    pred = ensemble.predict_ensemble(model, level=bc.level, workers=bc.workers)
    t2 = time.perf_counter()
    timings.update(fit=t1 - t0, predict=t2 - t1)
    return pred.mean, pred.lower, pred.upper


def _run_dsl(train, test, bc: BenchmarkConfig, seed, timings):
    t0 = time.perf_counter()
    Xtr, Xte = train.X, test.X
    if bc.dsl_compress_m:
        P = compress.generate(compress.ProjectionSpec(compress.FEATURE, bc.dsl_compress_m, train.p, seed))
        Xtr, Xte = compress.apply(P, Xtr), compress.apply(P, Xte)
    cfg = baselines.SpectralConfig(bc.dsl.n_clust, bc.dsl.sigma2, bc.dsl.kmeans_restarts, seed % (2**32))
    model = baselines.fit_dsl(Xtr, train.y, cfg, bc.dsl_ridge)
    t1 = time.perf_counter()
    pred, _ = baselines.predict_dsl(model, Xte)
    lower, upper = baselines.plugin_interval(model, pred, bc.level)
    timings.update(fit=t1 - t0, predict=time.perf_counter() - t1)
    return pred, lower, upper


_RUNNERS = {CGP: _run_cgp, DSL: _run_dsl}


def run_replicate(scn: simdata.SwissRollConfig, bc: BenchmarkConfig, data_seed, model_seed, method=CGP):
    """Generate one train/test draw, fit ``method`` and score it.

    Returns ``(ReplicateResult, timings)``.
    """
    t0 = time.perf_counter()
    cfg = simdata.with_seed(simdata.SwissRollConfig(scn.n + bc.n_pred, scn.p, scn.tau, scn.h_max,
                                                    scn.response_noise_sd), data_seed)
    train, test = simdata.split(simdata.gen_swiss_roll(cfg), scn.n)
    timings = {"generate": time.perf_counter() - t0}
    mean, lower, upper = _RUNNERS[method](train, test, bc, model_seed, timings)
    cov, length = evaluate.interval_metrics(lower, upper, test.y)
    res = evaluate.ReplicateResult(
        mspe=evaluate.mspe(mean, test.y), coverage=cov, median_pi_length=length,
        runtime_seconds=timings["fit"] + timings["predict"],
    )
    return res, timings


@dataclass
class BenchmarkResult:
    rows: List[dict]
    summaries: List[dict]


def run_benchmark(bc: BenchmarkConfig) -> BenchmarkResult:
    """Scenarios x replicates x methods.

    Replicate ``r`` of scenario ``k`` uses the same data for every method.
    Failures are recorded on the row and the sweep continues.
    """
    rows, summaries = [], []
    scen_seeds = np.random.SeedSequence(bc.master_seed).spawn(len(bc.scenarios))
    for k, (scn, sseed) in enumerate(zip(bc.scenarios, scen_seeds)):
        rep_seeds = sseed.spawn(bc.reps)
        per_method = {m: [] for m in bc.methods}
        for r, rs in enumerate(rep_seeds):
            data_seed, model_seed = (int(s) for s in rs.generate_state(2, np.uint64))
            for method in bc.methods:
                row = {"scenario": k, "n": scn.n, "p": scn.p, "tau": scn.tau, "h_max": scn.h_max,
                       "method": method, "replicate": r, "error": ""}
                try:
                    res, timings = run_replicate(scn, bc, data_seed, model_seed, method)
                except CGPRError as exc:
                    log.error("scenario %d rep %d %s failed: %s", k, r, method, exc)
                    row.update(mspe=np.nan, coverage=np.nan, median_pi_length=np.nan,
                               runtime_seconds=np.nan, t_generate=np.nan, t_fit=np.nan,
                               t_predict=np.nan, error=str(exc))
                else:
                    per_method[method].append(res)
                    row.update(res.to_dict())
                    row.update({f"t_{k_}": v for k_, v in timings.items()})
                    log.info("scenario %d (p=%d, tau=%g) rep %d %s: mspe=%.4f cov=%.3f",
                             k, scn.p, scn.tau, r, method, res.mspe, res.coverage)
                rows.append(row)
        for method, results in per_method.items():
            s = {"scenario": k, "n": scn.n, "p": scn.p, "tau": scn.tau, "h_max": scn.h_max,
                 "method": method}
            if results:
                s.update(evaluate.summarize(results, seed=bc.master_seed).to_dict())
            else:
                s.update(mean_mspe=None, bootstrap_se=None, coverage=None, pi_length=None, replicates=0)
            s["bootstrap_se_flag"] = "" if s.get("bootstrap_se") is not None else "insufficient replicates"
            summaries.append(s)
    return BenchmarkResult(rows, summaries)
