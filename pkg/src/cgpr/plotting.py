"""Figures for benchmark reports.

Every function writes a PNG and returns its path; nothing is shown
interactively.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _scenario_label(row):
    return f"p={row['p']}\ntau={row['tau']:g}"


def _grouped(rows, metric):
    """{method: [(label, values), ...]} in scenario order, failed rows skipped."""
    out = {}
    for r in rows:
        v = r.get(metric)
        if v is None or not np.isfinite(v):
            continue
        groups = out.setdefault(r["method"], {})
        groups.setdefault(r["scenario"], (_scenario_label(r), []))[1].append(v)
    return {m: [g[k] for k in sorted(g)] for m, g in out.items()}


def boxplot_metric(rows, metric, path, ylabel, reference=None):
    grouped = _grouped(rows, metric)
    if not grouped:
        return None
    methods = sorted(grouped)
    labels = [lab for lab, _ in grouped[methods[0]]]
    width = 0.8 / len(methods)
    fig, ax = plt.subplots(figsize=(max(5.0, 1.3 * len(labels) * len(methods)), 4.0))
    for i, method in enumerate(methods):
        data = [vals for _, vals in grouped[method]]
        pos = np.arange(len(data)) + (i - (len(methods) - 1) / 2) * width
        bp = ax.boxplot(data, positions=pos, widths=width * 0.9, patch_artist=True)
        for patch in bp["boxes"]:
            patch.set_facecolor(f"C{i}")
            patch.set_alpha(0.6)
        ax.plot([], [], color=f"C{i}", lw=6, alpha=0.6, label=method.upper())
    if reference is not None:
        ax.axhline(reference, color="k", ls="--", lw=1)
    ax.set_xticks(np.arange(len(labels)))
    ax.set_xticklabels(labels, fontsize=8)
    ax.set_ylabel(ylabel)
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def mspe_bars(summaries, path):
    """Mean MSPE per scenario with bootstrap standard-error bars."""
    ok = [s for s in summaries if s.get("mean_mspe") is not None]
    if not ok:
        return None
    methods = sorted({s["method"] for s in ok})
    scen = sorted({s["scenario"] for s in ok})
    labels = {s["scenario"]: _scenario_label(s) for s in ok}
    width = 0.8 / len(methods)
    fig, ax = plt.subplots(figsize=(max(5.0, 1.1 * len(scen) * len(methods)), 4.0))
    for i, method in enumerate(methods):
        by = {s["scenario"]: s for s in ok if s["method"] == method}
        x = np.array([j for j, k in enumerate(scen) if k in by])
        vals = [by[scen[j]]["mean_mspe"] for j in x]
        errs = [by[scen[j]]["bootstrap_se"] or 0.0 for j in x]
        ax.bar(x + (i - (len(methods) - 1) / 2) * width, vals, width * 0.9, yerr=errs,
               capsize=3, color=f"C{i}", alpha=0.8, label=method.upper())
    ax.set_xticks(np.arange(len(scen)))
    ax.set_xticklabels([labels[k] for k in scen], fontsize=8)
    ax.set_ylabel("MSPE")
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def report_figures(result, outdir, level=0.95):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = [
        boxplot_metric(result.rows, "coverage", outdir / "coverage.png",
                       f"coverage of {100 * level:g}% PI", reference=level),
        boxplot_metric(result.rows, "median_pi_length", outdir / "pi_length.png",
                       f"median length of {100 * level:g}% PI"),
        mspe_bars(result.summaries, outdir / "mspe.png"),
    ]
    return [p for p in paths if p is not None]
