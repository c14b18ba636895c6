"""Time the compiled kernels against the numpy fallback.

Reports the best-of-``--repeat`` time of each kernel on both backends and
the per-iteration time of a full SQMC and SMC filter run.

    python3 benchmarks/compare_backends.py --n 4096 --repeat 5
"""

import argparse
import timeit

import numpy as np

from sqmc import _kernels, _pykernels
from sqmc.filters import smc_bootstrap, sqmc_bootstrap
from sqmc.lds import _direction_integers, load_direction_numbers
from sqmc.models import PositioningModel, loop_speeds, simulate_trajectory

EMITTERS = [[40, 40], [-40, 40], [-40, -40], [40, -40], [0, 0]]


def kernel_cases(n, rng):
    V = _direction_integers(load_direction_numbers(), 3, 31)
    ints = _pykernels.sobol_ints(V, n)
    cells = rng.integers(0, 2 ** 16, (n, 2), dtype=np.uint64)
    idx = _pykernels.hilbert_encode(cells, 16)
    w = rng.random(n)
    cum = np.cumsum(w / w.sum())
    cum /= cum[-1]
    us = np.sort(rng.random(n))
    return {
        "sobol_ints": lambda k: k.sobol_ints(V, n),
        "owen_scramble": lambda k: k.owen_scramble(ints, 12345, 31),
        "hilbert_encode": lambda k: k.hilbert_encode(cells, 16),
        "hilbert_decode": lambda k: k.hilbert_decode(idx, 2, 16),
        "inverse_cdf": lambda k: k.inverse_cdf(cum, us),
        "systematic": lambda k: k.systematic(cum, 0.37),
    }


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=4096, help="points / particles (power of 2)")
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--horizon", type=int, default=50, help="filter steps for the end-to-end timing")
    args = parser.parse_args(argv)

    backends = _kernels.BACKENDS
    if "cython" not in backends:
        print("compiled extension not built; only the python backend is available")
    rng = np.random.default_rng(0)
    names = list(backends)
    print(f"{'kernel':<16}" + "".join(f"{b:>12}" for b in names) + "     speedup")
    for name, fn in kernel_cases(args.n, rng).items():
        secs = [best(lambda: fn(backends[b]), args.repeat) for b in names]
        ratio = secs[0] / secs[-1] if len(secs) > 1 else 1.0
        print(f"{name:<16}" + "".join(f"{s * 1e3:10.3f}ms" for s in secs) + f"  {ratio:8.1f}x")

    m = PositioningModel(emitters=EMITTERS, speeds=loop_speeds(args.horizon))
    ys = simulate_trajectory(m, args.horizon, 0).observations
    print(f"\nper-iteration time, N={args.n}, T={args.horizon}")
    for label, flt in (("sqmc", sqmc_bootstrap), ("smc", smc_bootstrap)):
        row = []
        for b in names:
            prev = _kernels.set_backend(b)
            try:
                row.append(min(flt(m, ys, args.n, seed=r).mean_iter_seconds()
                               for r in range(args.repeat)))
            finally:
                _kernels.set_backend(prev)
        print(f"{label:<16}" + "".join(f"{s * 1e3:10.3f}ms" for s in row))


if __name__ == "__main__":
    main()
