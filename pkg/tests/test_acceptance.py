"""Acceptance suite: eight end-to-end criteria at their stated tolerances.

Each test prints one ``PASS``/``FAIL`` line (shown even under output
capture). Run on its own with::

    pytest tests/test_acceptance.py -v
"""

import time

import numpy as np
import pytest
from scipy import stats

from sqmc.bench import budget_ordering, run_benchmark
from sqmc.config import load_config
from sqmc.filters import smc_bootstrap, sqmc_bootstrap, systematic_resample
from sqmc.hilbert import HilbertCodec
from sqmc.lds import scrambled_sobol
from sqmc.models import (LinearGaussianModel, PositioningModel, kalman_filter, loop_speeds,
                         simulate_trajectory)

pytestmark = pytest.mark.slow

EMITTERS = [[40, 40], [-40, 40], [-40, -40], [40, -40], [0, 0]]


def report(capsys, k, ok, detail):
    with capsys.disabled():
        print(f"\n[criterion {k}] {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, detail


def test_criterion_1_kalman_equivalence(capsys):
    m = LinearGaussianModel(A=0.9 * np.eye(2), Q=0.1 * np.eye(2), C=np.eye(2), R=0.5 * np.eye(2))
    traj = simulate_trajectory(m, 100, 0)
    exact, _ = kalman_filter(m, traj.observations)

    def rmse(flt, s):
        est = flt(m, traj.observations, 2 ** 12, seed=s).means
        return np.sqrt(np.mean((est - exact) ** 2))

    smc = np.mean([rmse(smc_bootstrap, s) for s in range(50)])
    sqmc = np.mean([rmse(sqmc_bootstrap, s) for s in range(50)])
    report(capsys, 1, smc < 0.02 and sqmc < 0.01,
           f"RMSE vs Kalman SMC {smc:.4f} (< 0.02), SQMC {sqmc:.4f} (< 0.01)")


def test_criterion_2_qmc_rate(capsys):
    ms = np.arange(6, 15)
    rng = np.random.default_rng(0)
    qmc_rmse, iid_rmse = [], []
    for m in ms:
        n = 2 ** m
        q = [np.prod(scrambled_sobol(n, 2, 1000 * m + s).values, axis=1).mean() - 0.25
             for s in range(100)]
        r = [np.prod(rng.random((n, 2)), axis=1).mean() - 0.25 for _ in range(100)]
        qmc_rmse.append(np.sqrt(np.mean(np.square(q))))
        iid_rmse.append(np.sqrt(np.mean(np.square(r))))
    slope_q = np.polyfit(ms, np.log2(qmc_rmse), 1)[0]
    slope_i = np.polyfit(ms, np.log2(iid_rmse), 1)[0]
    report(capsys, 2, slope_q <= -1.2 and abs(slope_i + 0.5) <= 0.1,
           f"log2-RMSE slope scrambled Sobol' {slope_q:.3f} (<= -1.2), i.i.d. {slope_i:.3f} (-0.5 +- 0.1)")


def test_criterion_3_hilbert_exhaustive(capsys):
    failures, checked = 0, 0
    for d, kmax in ((2, 8), (3, 4)):
        for k in range(1, kmax + 1):
            c = HilbertCodec(d, k)
            idx = np.arange(c.n_cells, dtype=np.uint64)
            cells = c.index_to_cells(idx)
            failures += int((c.cells_to_index(cells) != idx).sum())
            steps = np.abs(np.diff(cells.astype(np.int64), axis=0)).sum(axis=1)
            failures += int((steps != 1).sum())
            failures += c.n_cells - len(np.unique(cells, axis=0))
            checked += c.n_cells
    report(capsys, 3, failures == 0, f"{checked} indices checked, {failures} failures")


def test_criterion_4_resampling_unbiased(capsys):
    N, draws = 64, 10 ** 5
    rng = np.random.default_rng(4)
    good = total = 0
    grid = np.arange(N)
    for _ in range(100):
        w = rng.dirichlet(np.ones(N))
        us = rng.random(draws)
        # vectorized systematic resampling; spot-checked against the library below
        cum = np.cumsum(w)
        cum /= cum[-1]
        anc = np.minimum(np.searchsorted(cum, (grid[None, :] + us[:, None]) / N, side="right"),
                         N - 1)
        for j in range(0, draws, draws // 20):
            assert (anc[j] == systematic_resample(w, us[j])).all()
        counts = np.bincount(anc.ravel(), minlength=N)
        expected = draws * N * w
        se = np.sqrt(draws * N * w * (1 - w))
        good += int((np.abs(counts - expected) <= 3 * se).sum())
        total += N
    report(capsys, 4, good >= 0.99 * total,
           f"{good}/{total} (vector, index) pairs within 3 binomial SE (need >= 99%)")


@pytest.fixture(scope="module")
def desk_study(tmp_path_factory):
    config = load_config()
    start = time.perf_counter()
    result = run_benchmark(config, tmp_path_factory.mktemp("desk_study"))
    return result, config, time.perf_counter() - start


def test_criterion_5_gain_grows_with_n(desk_study, capsys):
    result, _, elapsed = desk_study
    g = {N: float(np.median(result.gain[N][:, 0])) for N in result.gain}
    ok = g[256] > 1 and g[4096] >= 3 * g[256] and elapsed < 15 * 60
    detail = ", ".join(f"N={N}: {v:.2f}" for N, v in g.items())
    report(capsys, 5, ok, f"median gain (coord 1) {detail}; "
                          f"ratio 4096/256 = {g[4096] / g[256]:.2f} (>= 3); study {elapsed:.0f}s")


def test_criterion_6_budget_ordering(desk_study, capsys):
    result, config, _ = desk_study
    n_steps = config.horizon + 1
    res = budget_ordering(result.budget, n_steps)
    table = "; ".join(f"{r['method']} N={r['N']} {r['avg_iter_seconds'] * 1e3:.2f}ms "
                      f"fails {r['fail_count']}" for r in result.budget)
    report(capsys, 6, res["witness"] is not None,
           f"witness budget {res['witness']}, min zero-failure budget {res['min_zero_budget']}; "
           f"{table}")


def test_criterion_7_iid_ablation(capsys):
    T, N, seeds = 100, 256, 200
    m = PositioningModel(emitters=EMITTERS, speeds=loop_speeds(T))
    ys = simulate_trajectory(m, T, 7).observations
    iid = np.stack([sqmc_bootstrap(m, ys, N, seed=s, point_source="iid").means
                    for s in range(seeds)])
    smc = np.stack([smc_bootstrap(m, ys, N, resampler="multinomial", seed=10_000 + s).means
                    for s in range(seeds)])
    pvals = np.array([[stats.levene(iid[:, t, i], smc[:, t, i], center="median").pvalue
                       for i in range(2)] for t in range(T + 1)])
    frac = float((pvals < 0.01).mean())
    report(capsys, 7, frac <= 0.05,
           f"{frac:.1%} of (t, coordinate) variance tests reject at 1% (<= 5%)")


def per_iteration(flt, m, ys, N, repeats=3):
    return min(flt(m, ys, N, seed=r).mean_iter_seconds() for r in range(repeats))


def test_criterion_8_complexity(capsys):
    T = 10
    m = PositioningModel(emitters=EMITTERS, speeds=loop_speeds(T))
    ys = simulate_trajectory(m, T, 0).observations
    Ns = [2 ** k for k in range(10, 17)]
    worst = {}
    for name, flt, limit in (("sqmc", sqmc_bootstrap, 2.6), ("smc", smc_bootstrap, 2.3)):
        flt(m, ys, Ns[0])  # warm-up
        secs = [per_iteration(flt, m, ys, N) for N in Ns]
        worst[name] = (max(b / a for a, b in zip(secs, secs[1:])), limit)
    ok = all(r <= lim for r, lim in worst.values())
    report(capsys, 8, ok, ", ".join(f"{k} worst ratio per doubling {r:.2f} (<= {lim})"
                                    for k, (r, lim) in worst.items()))
