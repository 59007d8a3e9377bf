"""Command-line interface: ``cgpr simulate | fit | predict | benchmark``.

Exit codes: 0 success, 2 configuration error, 3 data/I-O error, 4 numerical
failure.  Worker count defaults to ``$CGPR_WORKERS`` (else 1).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, baselines, benchmark, ensemble, io, lowrank_gp, plotting, simdata
from .errors import CGPRError, DataError

log = logging.getLogger("cgpr")

CSV_FORMAT_VERSION = 1
RESULTS_FORMAT_VERSION = 1


def _manifest(args):
    flags = {k: v for k, v in vars(args).items() if k != "func"}
    return {
        "tool": "cgpr",
        "tool_version": __version__,
        "command": args.command,
        "flags": flags,
        "seed": getattr(args, "seed", None),
        "formats": {"csv": CSV_FORMAT_VERSION, "model": io.MODEL_VERSION, "results": RESULTS_FORMAT_VERSION},
    }


def cmd_simulate(args):
    cfg = simdata.SwissRollConfig(n=args.n + args.n_test, p=args.p, tau=args.tau, h_max=args.hmax,
                                  seed=args.seed)
    ds = simdata.gen_swiss_roll(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    parts = {"train.csv": ds}
    if args.n_test:
        train, test = simdata.split(ds, args.n)
        parts = {"train.csv": train, "test.csv": test}
    for name, part in parts.items():
        io.write_dataset(out / name, part, write_latent=not args.no_latent)
        io.write_json(io.manifest_path(out / name), _manifest(args))
        log.info("wrote %s (%d rows, %d features)", out / name, part.n, part.p)
    return 0


def _policy(args):
    return ensemble.GridPolicy(stride=args.stride, m_phi=args.m_phi, subsample_cap=args.subsample_cap,
                               per_member_phi=args.per_member_phi)


def cmd_fit(args):
    ds = io.read_dataset(args.train)
    model = ensemble.fit_ensemble(ds.X, ds.y, _policy(args), args.mode, args.seed, args.workers)
    io.save_model(args.model, model, _manifest(args))
    log.info("%5s %4s %14s %14s %10s", "idx", "m", "lambda", "log_ml", "weight")
    for mem, w in zip(model.members, model.weights):
        c = mem.config
        log.info("%5d %4d %14.6g %14.6f %10.6f", c.index, c.m, c.lam, mem.log_ml, w)
    log.info("fitted %d members (%d dropped), mode=%s -> %s",
             len(model.members), len(model.dropped), model.mode, args.model)
    return 0


def cmd_predict(args):
    model = io.load_model(args.model)
    ds = io.read_dataset(args.data, require_y=False)
    if ds.p != model.p:
        raise DataError(f"{args.data} has {ds.p} features but the model was fit with {model.p}")
    pred = ensemble.predict_ensemble(model, ds.X, level=args.level, workers=args.workers)
    io.write_predictions(args.out, pred.mean, pred.lower, pred.upper)
    io.write_json(io.manifest_path(args.out), _manifest(args))
    log.info("wrote %d predictions to %s", ds.n, args.out)
    return 0


_ROW_FIELDS = ["scenario", "n", "p", "tau", "h_max", "method", "replicate", "mspe", "coverage",
               "median_pi_length", "runtime_seconds", "t_generate", "t_fit", "t_predict", "error"]
_SUMMARY_FIELDS = ["scenario", "n", "p", "tau", "h_max", "method", "replicates", "mean_mspe",
                   "bootstrap_se", "bootstrap_se_flag", "coverage_median", "pi_length_median"]


def _json_safe(obj):
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _write_csv(path, fields, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in fields})


def cmd_benchmark(args):
    scen, default_mode = benchmark.scenario_configs(args.scenario, args.n, args.p, args.tau, args.hmax)
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    bc = benchmark.BenchmarkConfig(
        scenarios=scen, reps=args.reps, methods=methods, mode=args.mode or default_mode,
        policy=_policy(args), n_pred=args.n_pred, level=args.level, master_seed=args.seed,
        workers=args.workers,
        dsl=baselines.SpectralConfig(n_clust=args.n_clust, kmeans_restarts=args.kmeans_restarts),
        dsl_ridge=args.dsl_ridge, dsl_compress_m=args.dsl_compress_m,
    )
    result = benchmark.run_benchmark(bc)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "replicates.csv", _ROW_FIELDS, result.rows)
    flat = []
    for s in result.summaries:
        f = dict(s)
        f["coverage_median"] = (s.get("coverage") or {}).get("median")
        f["pi_length_median"] = (s.get("pi_length") or {}).get("median")
        flat.append(f)
    _write_csv(out / "summary.csv", _SUMMARY_FIELDS, flat)
    figures = [] if args.no_figures else plotting.report_figures(result, out / "figures", args.level)
    doc = {
        "manifest": _manifest(args),
        "mode": bc.mode,
        "replicates": result.rows,
        "summaries": result.summaries,
        "figures": [str(p.relative_to(out)) for p in figures],
    }
    (out / "results.json").write_text(json.dumps(_json_safe(doc), indent=2, sort_keys=True) + "\n")
    for s in result.summaries:
        se = s.get("bootstrap_se")
        log.info("scenario %d p=%d tau=%g %s: MSPE %s (se %s)", s["scenario"], s["p"], s["tau"], s["method"],
                 "n/a" if s.get("mean_mspe") is None else f"{s['mean_mspe']:.4f}",
                 "n/a" if se is None else f"{se:.4f}")
    return 0


def _add_grid_flags(p):
    p.add_argument("--stride", type=int, default=1, help="step between projection dimensions")
    p.add_argument("--m-phi", type=int, default=lowrank_gp.DEFAULT_M_PHI, help="rows of the sample compression")
    p.add_argument("--subsample-cap", type=int, default=ensemble.DEFAULT_SUBSAMPLE_CAP)
    p.add_argument("--per-member-phi", action="store_true", help="draw a separate sample compression per member")
    p.add_argument("--workers", type=int, default=None)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--log-level", default="INFO")
    parser = argparse.ArgumentParser(prog="cgpr", description=__doc__.splitlines()[0], parents=[common])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="write swiss-roll train/test CSVs")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--hmax", type=float, default=3.0)
    p.add_argument("--n-test", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".")
    p.add_argument("--no-latent", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", parents=[common], help="fit a model-averaged compressed GP")
    p.add_argument("--train", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--mode", choices=ensemble.MODES, default=ensemble.EXACT)
    p.add_argument("--seed", type=int, default=0)
    _add_grid_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", parents=[common], help="predictive means and intervals")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("benchmark", parents=[common], help="replicated swiss-roll experiments")
    p.add_argument("--scenario", choices=["table2", "table4", "custom"], default="table2")
    p.add_argument("--reps", type=int, default=benchmark.DEFAULT_REPS)
    p.add_argument("--methods", default="cgp")
    p.add_argument("--mode", choices=ensemble.MODES, default=None)
    p.add_argument("--n", type=int)
    p.add_argument("--p", type=int)
    p.add_argument("--tau", type=float)
    p.add_argument("--hmax", type=float, default=3.0)
    p.add_argument("--n-pred", type=int, default=benchmark.DEFAULT_N_PRED)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="benchmark_out")
    p.add_argument("--n-clust", type=int, default=baselines.DEFAULT_N_CLUST)
    p.add_argument("--kmeans-restarts", type=int, default=10)
    p.add_argument("--dsl-ridge", type=float, default=baselines.DEFAULT_RIDGE)
    p.add_argument("--dsl-compress-m", type=int, default=None,
                   help=f"compress features before DSL (e.g. {baselines.DEFAULT_COMPRESSED_M})")
    p.add_argument("--no-figures", action="store_true")
    _add_grid_flags(p)
    p.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)
    try:
        return args.func(args)
    except CGPRError as exc:
        log.error("%s", exc)
        return exc.exit_code
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
