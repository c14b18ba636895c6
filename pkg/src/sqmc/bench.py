"""Replicated SMC vs SQMC study on the positioning model.

The runner simulates one trajectory, builds a high-N SQMC reference for the
filtering means and variances, runs every (method, N, replicate) cell and
writes the CSV artifacts:

``trajectory.csv``  t, x1.., y1..
``reference.csv``   t, mean_1.., var_1..
``runs.csv``        method, N, replicate, seed, status, t, mean_1.., iter_seconds
``mse.csv``         method, N, t, mse_1..
``gain.csv``        N, t, gain_1.., flag
``budget.csv``      method, N, avg_iter_seconds, fail_count, n_steps, fail_fraction, replicates_ok
``seeds.csv``       role, method, N, replicate, seed
"""

import csv
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from sqmc.filters import DegenerateWeightsError, smc_bootstrap, sqmc_bootstrap
from sqmc.models import Trajectory, simulate_trajectory

__all__ = [
    "RunRecord",
    "ReferenceSolution",
    "BenchmarkResult",
    "derive_seed",
    "build_reference",
    "compute_mse",
    "gain_factor",
    "delta_criterion_count",
    "run_filter",
    "run_benchmark",
    "budget_ordering",
    "read_runs",
]

log = logging.getLogger(__name__)

METHODS = ("smc", "sqmc")
_ROLE = {"trajectory": 0, "reference": 1, "run": 2}
_METHOD_CODE = {"smc": 1, "sqmc": 2, "reference": 3}


def derive_seed(base_seed, role, method="reference", N=0, replicate=0):
    """64-bit seed for one stream; distinct roles/methods/cells never collide."""
    ss = np.random.SeedSequence([int(base_seed), _ROLE[role], _METHOD_CODE[method],
                                 int(N), int(replicate)])
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass
class RunRecord:
    method: str
    N: int
    replicate: int
    seed: int
    means: np.ndarray = None
    iter_seconds: np.ndarray = None
    status: str = "ok"

    @property
    def ok(self):
        return self.status == "ok"

    def avg_iter_seconds(self):
        s = self.iter_seconds
        return float(np.mean(s[1:])) if len(s) > 1 else float(s[0])


@dataclass
class ReferenceSolution:
    """Ground-truth filtering means and variances, shape (T+1, d)."""

    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        if not (np.isfinite(self.means).all() and np.isfinite(self.variances).all()):
            raise ValueError("reference solution must be finite")

    def to_csv(self, path):
        d = self.means.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"mean_{i + 1}" for i in range(d)]
                       + [f"var_{i + 1}" for i in range(d)])
            for t in range(self.means.shape[0]):
                w.writerow([t] + [repr(float(v)) for v in self.means[t]]
                           + [repr(float(v)) for v in self.variances[t]])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header = rows[0]
        data = np.array(rows[1:], dtype=np.float64)
        m = [i for i, h in enumerate(header) if h.startswith("mean_")]
        v = [i for i, h in enumerate(header) if h.startswith("var_")]
        return cls(data[:, m], data[:, v])


def run_filter(method, model, ys, N, seed):
    if method == "smc":
        return smc_bootstrap(model, ys, N, seed=seed)
    if method == "sqmc":
        return sqmc_bootstrap(model, ys, N, seed=seed)
    raise ValueError(f"unknown method {method!r}")


def build_reference(config, trajectory, model=None):
    """High-N SQMC reference averaged over ``config.reference_seeds`` seeds.

    Means are averaged across seeds; variances are the seed-average of the
    weighted particle variances.
    """
    model = config.build_model() if model is None else model
    ys = trajectory.observations if isinstance(trajectory, Trajectory) else trajectory
    means, variances = [], []
    for k in range(config.reference_seeds):
        seed = derive_seed(config.seed, "reference", "reference", config.reference_n, k)
        out = sqmc_bootstrap(model, ys, config.reference_n, seed=seed)
        means.append(out.means)
        variances.append(out.variances)
        log.info("reference seed %d/%d done", k + 1, config.reference_seeds)
    return ReferenceSolution(np.mean(means, axis=0), np.mean(variances, axis=0))


def compute_mse(records, reference):
    """Per-t, per-coordinate MSE of replicate means against the reference.

    Accumulates in one pass over the records. Failed runs are skipped.
    """
    ref = reference.means
    total = np.zeros_like(ref)
    count = 0
    for rec in records:
        if not rec.ok:
            continue
        if rec.means.shape != ref.shape:
            raise ValueError(f"run horizon {rec.means.shape} does not match reference {ref.shape}")
        total += (rec.means - ref) ** 2
        count += 1
    if count < 2:
        raise ValueError("MSE needs at least 2 successful replicates")
    return total / count


def gain_factor(mse_smc, mse_sqmc):
    """MSE(SMC) / MSE(SQMC); zero denominators give +inf."""
    mse_smc = np.asarray(mse_smc, dtype=np.float64)
    mse_sqmc = np.asarray(mse_sqmc, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = mse_smc / mse_sqmc
    g = np.where(mse_sqmc > 0, g, np.inf)
    if np.isinf(g).any():
        log.warning("gain factor has %d zero-denominator entries", int(np.isinf(g).sum()))
    return g


def delta_criterion_count(mse, reference, delta):
    """Number of time steps where MSE exceeds delta^2 * posterior variance in any coordinate."""
    var = reference.variances if isinstance(reference, ReferenceSolution) else reference
    return int(np.any(np.asarray(mse) > delta ** 2 * np.asarray(var), axis=1).sum())


def _run_cell(args):
    method, model, ys, N, replicate, seed = args
    try:
        out = run_filter(method, model, ys, N, seed)
    except DegenerateWeightsError as exc:
        return RunRecord(method, N, replicate, seed, status=f"degenerate:t={exc.t}")
    return RunRecord(method, N, replicate, seed, out.means, out.iter_seconds)


@dataclass
class BenchmarkResult:
    trajectory: Trajectory
    reference: ReferenceSolution
    records: list
    mse: dict
    gain: dict
    budget: list
    out_dir: str = None


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _fmt(v):
    return repr(float(v))


def write_runs(path, records, d):
    header = (["method", "N", "replicate", "seed", "status", "t"]
              + [f"mean_{i + 1}" for i in range(d)] + ["iter_seconds"])
    rows = []
    for r in records:
        if not r.ok:
            rows.append([r.method, r.N, r.replicate, r.seed, r.status, ""] + [""] * (d + 1))
            continue
        for t in range(r.means.shape[0]):
            rows.append([r.method, r.N, r.replicate, r.seed, r.status, t]
                        + [_fmt(v) for v in r.means[t]] + [_fmt(r.iter_seconds[t])])
    _write_csv(path, header, rows)


def read_runs(path):
    """Parse ``runs.csv`` back into :class:`RunRecord` objects."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        mcols = [i for i, h in enumerate(header) if h.startswith("mean_")]
        groups = {}
        for row in reader:
            key = (row[0], int(row[1]), int(row[2]))
            rec = groups.get(key)
            if rec is None:
                rec = groups[key] = dict(seed=int(row[3]), status=row[4], means=[], secs=[])
            if row[4] == "ok":
                rec["means"].append([float(row[i]) for i in mcols])
                rec["secs"].append(float(row[-1]))
    out = []
    for (method, N, rep), g in groups.items():
        if g["status"] == "ok":
            out.append(RunRecord(method, N, rep, g["seed"], np.array(g["means"]),
                                 np.array(g["secs"])))
        else:
            out.append(RunRecord(method, N, rep, g["seed"], status=g["status"]))
    return out


def budget_ordering(budget_rows, n_steps, fraction=0.2):
    """Compare methods on the CPU-budget table.

    For a budget b, each method is credited with its smallest failure count
    among the N values whose average iteration time is at most b.

    Returns
    -------
    dict with ``witness`` (a budget where SQMC has zero failures while SMC
    fails on more than ``fraction`` of steps, or None) and
    ``min_zero_budget`` per method (None when never reached).
    """
    rows = [r for r in budget_rows if r["fail_count"] is not None]
    budgets = sorted({r["avg_iter_seconds"] for r in rows})

    def best(method, b):
        counts = [r["fail_count"] for r in rows
                  if r["method"] == method and r["avg_iter_seconds"] <= b]
        return min(counts) if counts else None

    witness = None
    for b in budgets:
        sq, sm = best("sqmc", b), best("smc", b)
        if sq == 0 and (sm is None or sm > fraction * n_steps):
            witness = b
            break
    min_zero = {}
    for m in METHODS:
        zero = [r["avg_iter_seconds"] for r in rows if r["method"] == m and r["fail_count"] == 0]
        min_zero[m] = min(zero) if zero else None
    return {"witness": witness, "min_zero_budget": min_zero}


def read_budget(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        out.append(dict(method=r["method"], N=int(r["N"]),
                        avg_iter_seconds=float(r["avg_iter_seconds"]),
                        fail_count=int(r["fail_count"]) if r["fail_count"] else None,
                        n_steps=int(r["n_steps"]),
                        fail_fraction=float(r["fail_fraction"]) if r["fail_fraction"] else None,
                        replicates_ok=int(r["replicates_ok"])))
    return out


def run_benchmark(config, out_dir=None, trajectory=None, reference=None):
    """Run the full study and write the CSV artifact set to ``out_dir``.

    Statistical outputs are a deterministic function of ``config.seed``;
    only the timing columns vary between reruns.
    """
    model = config.build_model()
    T = config.horizon
    seeds = [("trajectory", "", 0, 0, derive_seed(config.seed, "trajectory"))]
    if trajectory is None:
        tseed = config.trajectory_seed if config.trajectory_seed is not None else seeds[0][-1]
        trajectory = simulate_trajectory(model, T, tseed)
        seeds[0] = ("trajectory", "", 0, 0, tseed)
    if trajectory.T != T:
        raise ValueError(f"trajectory has horizon {trajectory.T}, config expects {T}")
    ys = trajectory.observations

    t0 = time.perf_counter()
    if reference is None:
        reference = build_reference(config, trajectory, model)
    for k in range(config.reference_seeds):
        seeds.append(("reference", "sqmc", config.reference_n, k,
                      derive_seed(config.seed, "reference", "reference", config.reference_n, k)))
    log.info("reference built in %.1fs", time.perf_counter() - t0)

    tasks = []
    for N in config.particle_counts:
        for method in METHODS:
            for rep in range(config.replicates):
                seed = derive_seed(config.seed, "run", method, N, rep)
                seeds.append(("run", method, N, rep, seed))
                tasks.append((method, model, ys, N, rep, seed))
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            records = list(pool.map(_run_cell, tasks, chunksize=1))
    else:
        records = [_run_cell(task) for task in tasks]

    d = reference.means.shape[1]
    mse, gain, budget = {}, {}, []
    for N in config.particle_counts:
        for method in METHODS:
            cell = [r for r in records if r.method == method and r.N == N]
            ok = [r for r in cell if r.ok]
            row = dict(method=method, N=N, n_steps=T + 1, replicates_ok=len(ok),
                       avg_iter_seconds=float(np.mean([r.avg_iter_seconds() for r in ok]))
                       if ok else math.nan, fail_count=None, fail_fraction=None)
            if len(ok) >= 2:
                mse[method, N] = compute_mse(ok, reference)
                row["fail_count"] = delta_criterion_count(mse[method, N], reference, config.delta)
                row["fail_fraction"] = row["fail_count"] / (T + 1)
            budget.append(row)
        if ("smc", N) in mse and ("sqmc", N) in mse:
            gain[N] = gain_factor(mse["smc", N], mse["sqmc", N])

    result = BenchmarkResult(trajectory, reference, records, mse, gain, budget, out_dir)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        trajectory.to_csv(os.path.join(out_dir, "trajectory.csv"))
        reference.to_csv(os.path.join(out_dir, "reference.csv"))
        write_runs(os.path.join(out_dir, "runs.csv"), records, d)
        _write_csv(os.path.join(out_dir, "mse.csv"),
                   ["method", "N", "t"] + [f"mse_{i + 1}" for i in range(d)],
                   [[m, N, t] + [_fmt(v) for v in arr[t]]
                    for (m, N), arr in mse.items() for t in range(T + 1)])
        _write_csv(os.path.join(out_dir, "gain.csv"),
                   ["N", "t"] + [f"gain_{i + 1}" for i in range(d)] + ["flag"],
                   [[N, t] + [_fmt(v) for v in arr[t]]
                    + ["zero_denominator" if np.isinf(arr[t]).any() else ""]
                    for N, arr in gain.items() for t in range(T + 1)])
        _write_csv(os.path.join(out_dir, "budget.csv"),
                   ["method", "N", "avg_iter_seconds", "fail_count", "n_steps",
                    "fail_fraction", "replicates_ok"],
                   [[r["method"], r["N"], _fmt(r["avg_iter_seconds"]),
                     "" if r["fail_count"] is None else r["fail_count"], r["n_steps"],
                     "" if r["fail_fraction"] is None else _fmt(r["fail_fraction"]),
                     r["replicates_ok"]] for r in budget])
        _write_csv(os.path.join(out_dir, "seeds.csv"),
                   ["role", "method", "N", "replicate", "seed"], seeds)
    return result
