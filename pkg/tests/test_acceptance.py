"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

The lines are also collected and repeated in the terminal summary under
"acceptance criteria".  The benchmark-scale criteria take several minutes
in total on one core; they are marked ``slow``.
"""

import time

import numpy as np
import pytest
from sklearn.metrics import adjusted_rand_score

from cgpr import baselines, benchmark, compress, ensemble, evaluate, exact_gp, lowrank_gp, simdata
from cgpr.compress import FEATURE, SAMPLE, ProjectionMatrix, ProjectionSpec
from conftest import record
from oracles import exact_dense, lowrank_dense, random_instance, rel_err
from test_baselines import two_blobs

N_INSTANCES = 50


def _exact_errors(Z, y, lam, Zs):
    want = exact_dense(Z, y, lam, Zs)
    post = exact_gp.fit(Z, y, lam)
    mean, S = exact_gp.posterior_mu(post)
    pd = exact_gp.predict(post, Zs, want_full=True)
    return {
        "b": rel_err(post.b, want["b"]),
        "post_mean": rel_err(mean, want["mu_mean"]),
        "post_scale": rel_err(S, want["mu_scale"]),
        "pred_loc": rel_err(pd.locations, want["pred_loc"]),
        "pred_scale": rel_err(pd.full_scale, want["pred_scale"]),
        "pred_sd": rel_err(pd.scales ** 2, np.diag(want["pred_scale"])),
        "log_ml": rel_err(exact_gp.log_marginal(post), want["log_ml"]),
    }


def test_exact_oracle_equivalence():
    rng = np.random.default_rng(1001)
    worst = {}
    for _ in range(N_INSTANCES):
        Z, y, lam, Zs = random_instance(rng, n_max=30, m_max=8)
        for k, v in _exact_errors(Z, y, lam, Zs).items():
            worst[k] = max(worst.get(k, 0.0), v)
    # model-averaging weights against the literal ratio of evidences
    for _ in range(10):
        lmls, ours = [], []
        Z0, y, _, _ = random_instance(rng, n_max=30, m_max=8, n_min=10)
        for lam in rng.uniform(0.05, 1.0, 6):
            lmls.append(exact_dense(Z0, y, lam, Z0[:1])["log_ml"])
            ours.append(exact_gp.log_marginal(exact_gp.fit(Z0, y, lam)))
        ev = np.exp(lmls)
        worst["weights"] = max(worst.get("weights", 0.0), rel_err(ensemble.model_weights(ours), ev / ev.sum()))
    ok = max(worst.values()) < 1e-6
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    record("1 exact GP vs dense oracle, 50 instances, rel 1e-6", ok, "max rel err: " + detail)
    assert ok


def test_lowrank_oracle_equivalence():
    rng = np.random.default_rng(2002)
    worst = {}
    for i in range(N_INSTANCES):
        Z, y, lam, Zs = random_instance(rng, n_max=60, m_max=8)
        n = len(y)
        m_phi = int(rng.integers(1, min(12, n) + 1))
        phi = compress.generate(ProjectionSpec(SAMPLE, m_phi, n, 500 + i))
        want = lowrank_dense(Z, y, lam, phi.entries, Zs)
        post = lowrank_gp.fit_lowrank(Z, y, lam, phi)
        mean, sdiag = lowrank_gp.posterior_mu_lowrank(post)
        pd = lowrank_gp.predict_lowrank(post, Zs, want_full=True)
        errs = {
            "b2": rel_err(post.b, want["b"]),
            "post_mean": rel_err(mean, want["mu_mean"]),
            "post_scale_diag": rel_err(sdiag, np.diag(want["mu_scale"])),
            "pred_loc": rel_err(pd.locations, want["pred_loc"]),
            "pred_scale": rel_err(pd.full_scale, want["pred_scale"]),
            "log_ml": rel_err(lowrank_gp.log_marginal_lowrank(post), want["log_ml"]),
        }
        for k, v in errs.items():
            worst[k] = max(worst.get(k, 0.0), v)

    # identity sample compression: low-rank collapses to exact
    red = 0.0
    for i in range(20):
        n = int(rng.integers(5, 41))
        m = int(rng.integers(2, 9))
        Z = rng.standard_normal((n, m))
        Zs = rng.standard_normal((3, m))
        lam = float(rng.uniform(0.5, 2.0)) / m
        y = rng.standard_normal(n)
        y -= y.mean()
        ex = exact_gp.fit(Z, y, lam)
        lr = lowrank_gp.fit_lowrank(Z, y, lam, ProjectionMatrix(ProjectionSpec(SAMPLE, n, n, 0), np.eye(n)))
        a, b = lowrank_gp.predict_lowrank(lr, Zs), exact_gp.predict(ex, Zs)
        red = max(red, rel_err(lr.b, ex.b),
                  rel_err(lowrank_gp.posterior_mu_lowrank(lr)[0], exact_gp.posterior_mu(ex)[0]),
                  rel_err(a.locations, b.locations), rel_err(a.scales, b.scales),
                  rel_err(lowrank_gp.log_marginal_lowrank(lr), exact_gp.log_marginal(ex)))
    ok = max(worst.values()) < 1e-5 and red < 1e-8
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f"; Phi=I reduction {red:.1e}"
    record("2 low-rank GP vs literal dense oracle (rel 1e-5), Phi=I -> exact (1e-8)", ok, detail)
    assert ok


@pytest.fixture(scope="module")
def small_n_study():
    """All six small-n scenarios, 10 replicates each, CGP in exact mode."""
    bc = benchmark.BenchmarkConfig(
        scenarios=simdata.scenario_matrix(simdata.SMALL_N), reps=10, methods=(benchmark.CGP,),
        mode=ensemble.EXACT, master_seed=2024,
    )
    return benchmark.run_benchmark(bc)


def _summary(study, p, tau):
    for s in study.summaries:
        if s["p"] == p and s["tau"] == tau:
            return s
    raise KeyError((p, tau))


@pytest.mark.slow
def test_small_n_mspe_reproduction(small_n_study):
    lo_noise = _summary(small_n_study, 10000, 0.02)
    hi_noise = _summary(small_n_study, 10000, 0.10)
    a, b = lo_noise["mean_mspe"], hi_noise["mean_mspe"]
    band_a = (4.85 - 3 * 0.24, 4.85 + 3 * 0.24)
    band_b = (6.81 - 3 * 0.24, 6.81 + 3 * 0.24)
    absolute = band_a[0] <= a <= band_a[1] and band_b[0] <= b <= band_b[1]
    relative = a <= 0.75 * b
    ok = absolute or relative
    how = "absolute bands" if absolute else ("relative fallback" if relative else "neither")
    record("3 small-n MSPE: tau=.02 in 4.85+-0.72, tau=.10 in 6.81+-0.72", ok,
           f"tau=.02 {a:.3f} (se {lo_noise['bootstrap_se']:.3f}), tau=.10 {b:.3f} "
           f"(se {hi_noise['bootstrap_se']:.3f}); {how}")
    assert ok


@pytest.mark.slow
def test_small_n_coverage(small_n_study):
    medians = [(s["p"], s["tau"], s["coverage"]["median"]) for s in small_n_study.summaries]
    ok = all(0.85 <= m <= 1.0 for _, _, m in medians)
    detail = ", ".join(f"p={p} tau={t:g}: {m:.3f}" for p, t, m in medians)
    record("4 95% PI coverage median in [0.85, 1] across the six small-n scenarios", ok, detail)
    assert ok


@pytest.mark.slow
def test_lowrank_vs_exact_scaled():
    n, p, n_pred = 2000, 5000, 100
    cfg = simdata.SwissRollConfig(n=n + n_pred, p=p, tau=0.03, h_max=5.0, seed=77)
    train, test = simdata.split(simdata.gen_swiss_roll(cfg), n)
    policy = ensemble.GridPolicy()
    grid = ensemble.build_grid(n, p, ensemble.LOWRANK, seed=78, m_phi=policy.m_phi)
    out = {}
    for mode in (ensemble.LOWRANK, ensemble.EXACT):
        t0 = time.perf_counter()
        model = ensemble.fit_ensemble(train.X, train.y, policy, mode, master_seed=78, grid=grid, X_pred=test.X)
        t_fit = time.perf_counter() - t0
        pred = ensemble.predict_ensemble(model)
        out[mode] = (evaluate.mspe(pred.mean, test.y), t_fit)
    (lr_mspe, lr_t), (ex_mspe, ex_t) = out[ensemble.LOWRANK], out[ensemble.EXACT]
    ok = abs(lr_mspe - ex_mspe) <= 0.2 * ex_mspe and lr_t < ex_t
    record("5 n=2000 p=5000: low-rank MSPE within 20% of exact, faster fit", ok,
           f"MSPE low-rank {lr_mspe:.3f} vs exact {ex_mspe:.3f}; fit {lr_t:.1f}s vs {ex_t:.1f}s, "
           f"{len(grid)} members")
    assert ok


def test_jl_distortion():
    fractions = []
    for seed in range(20):
        X = np.random.default_rng(seed).standard_normal((200, 1000))
        P = compress.generate(ProjectionSpec(FEATURE, 100, 1000, seed))
        fractions.append(compress.distortion_check(P, X, 0.5).fraction)
    ok = min(fractions) >= 0.99
    record("6 JL band p=1000 m=100 kappa=0.5, >=99% of pairs on 20 seeds", ok,
           f"min fraction {min(fractions):.4f}")
    assert ok


@pytest.mark.slow
def test_lowrank_fit_scaling():
    p = 1000
    ns = (500, 1000, 2000)
    times = []
    for n in ns:
        ds = simdata.gen_swiss_roll(simdata.SwissRollConfig(n=n, p=p, tau=0.05, h_max=5.0, seed=n))
        grid = ensemble.build_grid(n, p, ensemble.LOWRANK, stride=15, seed=1)
        best = np.inf
        for _ in range(3):
            t0 = time.perf_counter()
            ensemble.fit_ensemble(ds.X, ds.y, ensemble.GridPolicy(), ensemble.LOWRANK, grid=grid)
            best = min(best, time.perf_counter() - t0)
        times.append(best)
    slope = float(np.polyfit(np.log(ns), np.log(times), 1)[0])
    ok = slope <= 2.3
    record("7 low-rank fit time log-log slope <= 2.3 over n=500,1000,2000", ok,
           f"slope {slope:.2f}; times " + ", ".join(f"{t:.2f}s" for t in times))
    assert ok


def test_ensemble_invariants():
    rng = np.random.default_rng(3003)
    checks = {}

    lml = np.concatenate([rng.normal(-500, 200, 40), [-1e6, 2e4]])
    w = ensemble.model_weights(lml)
    checks["normalized"] = abs(w.sum() - 1.0) < 1e-12 and np.all(w >= 0)
    checks["shift_invariant"] = all(
        np.max(np.abs(ensemble.model_weights(lml + c) - w)) < 1e-10 for c in (-1e5, -37.5, 0.0, 1e3, 1e5))

    ds = simdata.gen_swiss_roll(simdata.SwissRollConfig(n=70, p=300, tau=0.05, seed=6))
    tr, te = simdata.split(ds, 60)
    same = True
    for mode in (ensemble.EXACT, ensemble.LOWRANK):
        ref = None
        for workers in (1, 2, 3):
            m = ensemble.fit_ensemble(tr.X, tr.y, ensemble.GridPolicy(stride=3, m_phi=25), mode, 13,
                                      workers=workers)
            pr = ensemble.predict_ensemble(m, te.X, workers=workers)
            sig = (m.weights.tobytes(), pr.mean.tobytes(), pr.lower.tobytes(), pr.upper.tobytes())
            ref = sig if ref is None else ref
            same &= sig == ref
    checks["worker_determinism"] = same

    k, cols, df, N = 6, 5, 20, 2_000_000
    wts = rng.dirichlet(np.ones(k))
    locs = rng.normal(0, 2, (k, cols))
    scales = rng.uniform(0.3, 1.5, (k, cols))
    comp = rng.choice(k, size=N, p=wts)
    draws = locs[comp] + scales[comp] * rng.standard_t(df, size=(N, 1))
    mc_err = 0.0
    for q in (0.025, 0.5, 0.975):
        x = ensemble.mixture_quantile(q, wts, locs, scales, df)
        mc_err = max(mc_err, float(np.max(np.abs((draws <= x).mean(axis=0) - q))))
    checks["mixture_quantile_mc"] = mc_err < 2e-3

    ok = all(checks.values())
    record("8 ensemble invariants (weights, shift, workers, mixture quantile vs MC 2e-3)", ok,
           ", ".join(f"{k}={'ok' if v else 'FAILED'}" for k, v in checks.items()) + f"; MC err {mc_err:.1e}")
    assert ok


def test_spectral_clustering():
    aris, top = [], 0.0
    for seed in range(20):
        X, truth = two_blobs(seed)
        res = baselines.spectral_cluster(X, baselines.SpectralConfig(n_clust=2, seed=seed))
        aris.append(adjusted_rand_score(truth, res.labels))
        A, _ = baselines.affinity(X)
        L, _ = baselines.normalized_affinity(A)
        top = max(top, float(np.max(np.abs(np.linalg.eigvalsh(L)))))
    ok = min(aris) == 1.0 and top <= 1 + 1e-8
    record("9 spectral clustering: two blobs ARI=1 on 20 seeds, |eig(L)| <= 1+1e-8", ok,
           f"min ARI {min(aris):.3f}, max |eig| {top:.12f}")
    assert ok
