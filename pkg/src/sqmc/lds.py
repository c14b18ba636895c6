"""Sobol' point sets, nested scrambling and a 2-D star-discrepancy oracle.

Points are generated in Gray-code order from Joe-Kuo direction numbers, which
ship with the package as ``data/sobol_directions.txt``. Scrambling is Owen's
nested uniform scrambling with the random permutation tree replaced by a
counter-based hash of ``(seed, dimension, node)``, so a scrambled point set is
a pure function of its inputs.
"""

from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

import numpy as np

from sqmc import _kernels

__all__ = [
    "ConfigurationError",
    "DirectionNumbers",
    "PointSet",
    "SobolSpec",
    "load_direction_numbers",
    "sobol_generate",
    "owen_scramble",
    "scrambled_sobol",
    "star_discrepancy_2d",
    "is_power_of_two",
]


class ConfigurationError(ValueError):
    """Invalid generator configuration (dimension, bit depth, point count)."""


def is_power_of_two(n):
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class DirectionNumbers:
    """Primitive polynomials and initial direction numbers, one row per dimension.

    ``degree[j]``, ``coefficient[j]`` and ``initial[j]`` follow the Joe-Kuo
    file layout; dimension 1 has degree 0.
    """

    degree: tuple
    coefficient: tuple
    initial: tuple

    def __len__(self):
        return len(self.degree)


@lru_cache(maxsize=None)
def load_direction_numbers(path=None):
    """Read a direction-number table (bundled one by default)."""
    if path is None:
        text = resources.files("sqmc").joinpath("data/sobol_directions.txt").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    degree, coeff, initial = [], [], []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = [int(v) for v in line.split()]
        dim, s, a, m = fields[0], fields[1], fields[2], fields[3:]
        if dim != len(degree) + 1 or len(m) != s:
            raise ConfigurationError(f"malformed direction-number row: {line!r}")
        degree.append(s)
        coeff.append(a)
        initial.append(tuple(m))
    return DirectionNumbers(tuple(degree), tuple(coeff), tuple(initial))


@lru_cache(maxsize=None)
def _direction_integers(table, dimension, max_bits):
    V = np.zeros((dimension, max_bits), dtype=np.uint64)
    for j in range(dimension):
        s, a = table.degree[j], table.coefficient[j]
        if s == 0:
            m = [1] * max_bits
        else:
            m = list(table.initial[j][:max_bits])
            for k in range(s, max_bits):
                new = m[k - s] ^ (m[k - s] << s)
                for i in range(1, s):
                    if (a >> (s - 1 - i)) & 1:
                        new ^= m[k - i] << i
                m.append(new)
        for k in range(max_bits):
            V[j, k] = m[k] << (max_bits - 1 - k)
    V.setflags(write=False)
    return V


@dataclass(frozen=True)
class SobolSpec:
    """Sobol' generator configuration.

    Parameters
    ----------
    dimension : int
    max_bits : int
        Bit depth of the generated integers, and scrambling depth.
    direction_numbers : DirectionNumbers
        Defaults to the bundled Joe-Kuo table (64 dimensions).
    """

    dimension: int
    max_bits: int = 31
    direction_numbers: DirectionNumbers = field(default_factory=load_direction_numbers,
                                                repr=False)

    def __post_init__(self):
        if self.dimension < 1:
            raise ConfigurationError("dimension must be positive")
        if self.dimension > len(self.direction_numbers):
            raise ConfigurationError(
                f"dimension {self.dimension} exceeds the {len(self.direction_numbers)} "
                "dimensions of the direction-number table")
        if not 1 <= self.max_bits <= 32:
            raise ConfigurationError("max_bits must lie in 1..32")

    @property
    def direction_integers(self):
        """(dimension, max_bits) uint64 array of shifted direction numbers."""
        return _direction_integers(self.direction_numbers, self.dimension, self.max_bits)


class PointSet:
    """An immutable (n, d) array of points in [0, 1)^d.

    The first column of a point set used by one SQMC step is the resampling
    coordinate; the remaining columns drive the transition.
    """

    __slots__ = ("_values",)

    def __init__(self, values):
        values = np.array(values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2:
            raise ValueError("point set must be a 2-D array")
        if values.size and (values.min() < 0.0 or values.max() >= 1.0):
            raise ValueError("point coordinates must lie in [0, 1)")
        values.setflags(write=False)
        self._values = values

    @property
    def values(self):
        return self._values

    @property
    def n(self):
        return self._values.shape[0]

    @property
    def d(self):
        return self._values.shape[1]

    def __len__(self):
        return self.n

    def __array__(self, dtype=None, copy=None):
        return self._values if dtype is None else self._values.astype(dtype)

    def __eq__(self, other):
        return isinstance(other, PointSet) and np.array_equal(self._values, other._values)

    def __repr__(self):
        return f"PointSet(n={self.n}, d={self.d})"


def sobol_generate(spec, n):
    """First ``n`` points of the (unscrambled) Sobol' sequence, index 0 first.

    >>> sobol_generate(SobolSpec(1), 4).values.ravel().tolist()
    [0.0, 0.5, 0.75, 0.25]
    """
    if n < 1:
        raise ConfigurationError("n must be at least 1")
    if n > 1 << spec.max_bits:
        raise ConfigurationError("n exceeds 2**max_bits")
    ints = _kernels.backend().sobol_ints(spec.direction_integers, n)
    return PointSet(ints.astype(np.float64) / float(1 << spec.max_bits))


def _check_seed(seed):
    seed = int(seed)
    if not 0 <= seed < 1 << 64:
        raise ConfigurationError("scramble seed must be a 64-bit unsigned integer")
    return seed


def owen_scramble(points, spec, seed):
    """Nested uniform (Owen) scrambling of a Sobol' point set.

    Parameters
    ----------
    points : PointSet
        Output of :func:`sobol_generate` with ``n`` a power of 2.
    spec : SobolSpec
        The generator that produced ``points``.
    seed : int
        64-bit scrambling seed.

    Returns
    -------
    PointSet
        Values in the open interval (0, 1); every dyadic interval of length
        ``1/n`` still holds exactly one point in each coordinate.
    """
    if not is_power_of_two(points.n):
        raise ConfigurationError(f"scrambling requires a power-of-2 point count, got {points.n}")
    if points.d != spec.dimension:
        raise ConfigurationError("point set dimension does not match the spec")
    scale = float(1 << spec.max_bits)
    ints = np.ascontiguousarray(np.floor(points.values * scale).astype(np.uint64))
    out = _kernels.backend().owen_scramble(ints, _check_seed(seed), spec.max_bits)
    return PointSet(out)


def scrambled_sobol(n, d, seed, max_bits=31):
    """Shortcut: ``owen_scramble(sobol_generate(SobolSpec(d), n), ...)``."""
    spec = SobolSpec(d, max_bits)
    return owen_scramble(sobol_generate(spec, n), spec, seed)


def star_discrepancy_2d(points):
    """Exact star discrepancy of a 2-D point set, O(n^2).

    Scans the critical anchored boxes whose upper corner coordinates are
    taken from the point coordinates (or 1). For each box both the closed
    count (excess of points) and the open count (deficit of points) are
    compared against the box volume.
    """
    x = np.asarray(points.values if isinstance(points, PointSet) else points, dtype=float)
    if x.ndim != 2 or x.shape[1] != 2:
        raise ValueError("star_discrepancy_2d only supports d = 2")
    n = x.shape[0]
    if n > 1 << 12:
        raise ValueError("star_discrepancy_2d is limited to n <= 4096")
    bx = np.append(np.unique(x[:, 0]), 1.0)
    by = np.append(np.unique(x[:, 1]), 1.0)
    # rank of each point's y among the by grid
    ry = np.searchsorted(by, x[:, 1])
    order = np.argsort(x[:, 0], kind="stable")
    xs, rys = x[order, 0], ry[order]
    closed = np.zeros(by.size, dtype=np.int64)  # points with x <= b1, binned by y rank
    worst = 0.0
    k = 0
    for b1 in bx:
        open_hist = closed.copy()  # points with x < b1
        while k < n and xs[k] <= b1:
            closed[rys[k]] += 1
            k += 1
        cnt_closed = np.cumsum(closed)  # y <= by[j]
        cnt_open = np.concatenate(([0], np.cumsum(open_hist)[:-1]))  # y < by[j]
        vol = b1 * by
        worst = max(worst, float(np.max(cnt_closed / n - vol)),
                    float(np.max(vol - cnt_open / n)))
    return worst
