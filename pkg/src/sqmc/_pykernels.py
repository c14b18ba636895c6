"""Pure numpy implementations of the hot kernels.

Every function here has a bit-identical twin in ``_core.pyx``. This module is
used whenever the compiled extension is missing or ``SQMC_PURE_PYTHON`` is set.
All integer work is done in ``uint64`` and relies on numpy's wrapping
arithmetic for arrays.
"""

import numpy as np

GOLDEN = 0x9E3779B97F4A7C15
MASK64 = (1 << 64) - 1

_U64 = np.uint64
_JITTER_BITS = 21


def splitmix64(x):
    """SplitMix64 finalizer on a ``uint64`` array (wrapping arithmetic)."""
    with np.errstate(over="ignore"):
        z = x + _U64(GOLDEN)
        z = (z ^ (z >> _U64(30))) * _U64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> _U64(27))) * _U64(0x94D049BB133111EB)
        return z ^ (z >> _U64(31))


def _splitmix64_int(x):
    z = (x + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def dimension_key(seed, dim):
    """Per-dimension scrambling key derived from a 64-bit seed."""
    return _splitmix64_int((seed ^ _splitmix64_int(dim + 1)) & MASK64)


def sobol_ints(V, n):
    """First ``n`` Sobol' points as integers, Gray-code order.

    Parameters
    ----------
    V : (d, bits) uint64 array
        Direction integers, ``V[j, k]`` is the k-th direction number of
        dimension j already shifted to ``bits`` bits.
    n : int

    Returns
    -------
    (n, d) uint64 array
    """
    d, bits = V.shape
    i = np.arange(n, dtype=np.uint64)
    gray = i ^ (i >> _U64(1))
    out = np.zeros((n, d), dtype=np.uint64)
    zero = _U64(0)
    for k in range(bits):
        bit = ((gray >> _U64(k)) & _U64(1)).astype(bool)
        if not bit.any():
            break
        out ^= np.where(bit[:, None], V[:, k][None, :], zero)
    return out


def owen_scramble(ints, seed, max_bits):
    """Nested uniform scrambling of ``max_bits``-bit integer coordinates.

    The flip applied to bit ``l`` (counting from the most significant) of a
    coordinate is a hash of the seed, the dimension and the ``l`` leading bits
    of the original coordinate, so two points share a flip exactly when they
    share the node of the scrambling tree. Bits below ``max_bits`` are filled
    with a hash of the full path, which is the infinite-depth limit.

    Returns float64 values in the open interval (0, 1).
    """
    n, d = ints.shape
    out = np.empty((n, d), dtype=np.float64)
    one = _U64(1)
    with np.errstate(over="ignore"):
        for j in range(d):
            key = _U64(dimension_key(int(seed), j))
            x = ints[:, j]
            y = np.zeros(n, dtype=np.uint64)
            for level in range(max_bits):
                pos = _U64(max_bits - 1 - level)
                node = (one << _U64(level)) | (x >> (pos + one))
                flip = splitmix64(key ^ (node * _U64(GOLDEN))) >> _U64(63)
                y |= (((x >> pos) & one) ^ flip) << pos
            node = (one << _U64(max_bits)) | x
            tail = splitmix64(key ^ (node * _U64(GOLDEN))) >> _U64(64 - _JITTER_BITS)
            out[:, j] = (y.astype(np.float64)
                         + (tail.astype(np.float64) + 0.5) / float(1 << _JITTER_BITS)
                         ) / float(1 << max_bits)
    return out


def hilbert_encode(cells, order):
    """Hilbert indices of integer grid cells (Skilling's transpose method).

    Parameters
    ----------
    cells : (n, d) uint64 array, entries < 2**order
    order : int
        bits per coordinate, ``d * order <= 64``

    Returns
    -------
    (n,) uint64 array
    """
    X = np.array(cells, dtype=np.uint64, copy=True)
    n, d = X.shape
    zero = _U64(0)
    q = 1 << (order - 1)
    while q > 1:
        Q, P = _U64(q), _U64(q - 1)
        for i in range(d):
            hit = (X[:, i] & Q) != 0
            t = np.where(hit, zero, (X[:, 0] ^ X[:, i]) & P)
            X[:, 0] ^= np.where(hit, P, t)
            X[:, i] ^= t
        q >>= 1
    for i in range(1, d):
        X[:, i] ^= X[:, i - 1]
    t = np.zeros(n, dtype=np.uint64)
    q = 1 << (order - 1)
    while q > 1:
        t ^= np.where((X[:, d - 1] & _U64(q)) != 0, _U64(q - 1), zero)
        q >>= 1
    X ^= t[:, None]
    h = np.zeros(n, dtype=np.uint64)
    for b in range(order - 1, -1, -1):
        for i in range(d):
            h = (h << _U64(1)) | ((X[:, i] >> _U64(b)) & _U64(1))
    return h


def hilbert_decode(index, d, order):
    """Inverse of :func:`hilbert_encode`; returns (n, d) uint64 cells."""
    h = np.asarray(index, dtype=np.uint64)
    n = h.shape[0]
    X = np.zeros((n, d), dtype=np.uint64)
    shift = d * order
    for b in range(order - 1, -1, -1):
        for i in range(d):
            shift -= 1
            X[:, i] |= ((h >> _U64(shift)) & _U64(1)) << _U64(b)
    zero = _U64(0)
    t = X[:, d - 1] >> _U64(1)
    for i in range(d - 1, 0, -1):
        X[:, i] ^= X[:, i - 1]
    X[:, 0] ^= t
    q = 2
    while q != (1 << order):
        Q, P = _U64(q), _U64(q - 1)
        for i in range(d - 1, -1, -1):
            hit = (X[:, i] & Q) != 0
            t = np.where(hit, zero, (X[:, 0] ^ X[:, i]) & P)
            X[:, 0] ^= np.where(hit, P, t)
            X[:, i] ^= t
        q <<= 1
    return X


def inverse_cdf(cumulative, sorted_u):
    """Smallest m with ``cumulative[m] >= u`` for each nondecreasing u."""
    a = np.searchsorted(cumulative, sorted_u, side="left")
    return np.minimum(a, cumulative.shape[0] - 1).astype(np.int64)


def systematic(cumulative, u):
    """Systematic resampling against a normalized cumulative weight vector."""
    N = cumulative.shape[0]
    grid = (np.arange(N) + u) / N
    a = np.searchsorted(cumulative, grid, side="right")
    return np.minimum(a, N - 1).astype(np.int64)

