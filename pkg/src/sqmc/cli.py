"""Command line interface.

Subcommands::

    sqmc simulate  --config C --seed S --out DIR     trajectory.csv
    sqmc run       --config C --method sqmc --n 1024 --seed S --out DIR
    sqmc reference --config C --out DIR              reference.csv
    sqmc bench     --config C --out DIR [--replicates R] [--full-scale]

Exit codes: 0 success, 2 configuration error, 3 numerical degeneracy.
"""

import argparse
import logging
import os
import sys

from sqmc import bench
from sqmc.config import load_config
from sqmc.filters import DegenerateWeightsError
from sqmc.lds import ConfigurationError, is_power_of_two
from sqmc.models import Trajectory, simulate_trajectory

EXIT_CONFIG = 2
EXIT_DEGENERATE = 3


def _load_trajectory(args, config, model):
    if args.trajectory:
        traj = Trajectory.from_csv(args.trajectory)
        if traj.T > model.horizon:
            raise ConfigurationError("trajectory is longer than the configured horizon")
        return traj
    seed = args.seed if args.seed is not None else (
        config.trajectory_seed if config.trajectory_seed is not None
        else bench.derive_seed(config.seed, "trajectory"))
    return simulate_trajectory(model, config.horizon, seed)


def cmd_simulate(args, config):
    model = config.build_model()
    seed = args.seed if args.seed is not None else bench.derive_seed(config.seed, "trajectory")
    traj = simulate_trajectory(model, config.horizon, seed)
    path = os.path.join(args.out, "trajectory.csv")
    traj.to_csv(path)
    print(path)


def cmd_run(args, config):
    model = config.build_model()
    traj = _load_trajectory(args, config, model)
    N = args.n or config.particle_counts[0]
    seed = args.filter_seed if args.filter_seed is not None else bench.derive_seed(
        config.seed, "run", args.method, N, 0)
    if not is_power_of_two(N):
        raise ConfigurationError(f"--n must be a power of 2, got {N}")
    out = bench.run_filter(args.method, model, traj.observations, N, seed)
    path = os.path.join(args.out, f"{args.method}_N{N}.csv")
    out.to_csv(path)
    print(path)


def cmd_reference(args, config):
    model = config.build_model()
    traj = _load_trajectory(args, config, model)
    ref = bench.build_reference(config, traj, model)
    path = os.path.join(args.out, "reference.csv")
    ref.to_csv(path)
    print(path)


def cmd_bench(args, config):
    traj = Trajectory.from_csv(args.trajectory) if args.trajectory else None
    result = bench.run_benchmark(config, args.out, trajectory=traj)
    for row in result.budget:
        print(f"{row['method']:>5} N={row['N']:<7d} {row['avg_iter_seconds'] * 1e3:9.3f} ms/iter "
              f"fails={row['fail_count']}/{row['n_steps']}")
    for N, g in result.gain.items():
        print(f"gain N={N}: median over t (coord 1) = {float(sorted(g[:, 0])[len(g) // 2]):.3g}")


def build_parser():
    parser = argparse.ArgumentParser(prog="sqmc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", metavar="PATH", help="INI config file")
        p.add_argument("--out", metavar="DIR", default=".", help="output directory")
        p.add_argument("--full-scale", action="store_true",
                       help="T=899, N=2^8..2^16, 100 replicates")
        p.add_argument("--seed", type=int, help="base seed (trajectory seed for simulate/run)")
        return p

    common(sub.add_parser("simulate", help="simulate a trajectory"))
    p = common(sub.add_parser("run", help="single filter run"))
    p.add_argument("--method", choices=("smc", "sqmc"), default="sqmc")
    p.add_argument("--n", type=int, help="number of particles (power of 2)")
    p.add_argument("--filter-seed", type=int, help="seed of the filter itself")
    p.add_argument("--trajectory", metavar="CSV", help="use this trajectory instead of simulating")
    p = common(sub.add_parser("reference", help="build the high-N reference solution"))
    p.add_argument("--trajectory", metavar="CSV")
    p = common(sub.add_parser("bench", help="full replicated study"))
    p.add_argument("--replicates", type=int)
    p.add_argument("--n", type=int, nargs="+", help="particle counts")
    p.add_argument("--workers", type=int)
    p.add_argument("--trajectory", metavar="CSV")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    handlers = {"simulate": cmd_simulate, "run": cmd_run,
                "reference": cmd_reference, "bench": cmd_bench}
    try:
        overrides = {}
        if args.command == "bench":
            overrides = dict(replicates=args.replicates, workers=args.workers,
                             particle_counts=tuple(args.n) if args.n else None)
            if args.seed is not None:
                overrides["seed"] = args.seed
        config = load_config(args.config, full_scale=args.full_scale, **overrides)
        os.makedirs(args.out, exist_ok=True)
        handlers[args.command](args, config)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DegenerateWeightsError as exc:
        print(f"numerical degeneracy: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    return 0


if __name__ == "__main__":
    sys.exit(main())
