"""Discrete Hilbert curve in d dimensions.

The curve at order ``k`` visits the ``2**(d*k)`` cells of the regular grid on
[0, 1)^d, starting at the all-zeros cell, with consecutive cells sharing a
face. Indices are computed with Skilling's transpose formulation of the
Butz/Hamilton Gray-code recursion, using only integer bit operations.
"""

from dataclasses import dataclass

import numpy as np

from sqmc import _kernels

__all__ = ["DomainError", "HilbertCodec", "hilbert_sort"]


class DomainError(ValueError):
    """A coordinate fell outside [0, 1]."""


@dataclass(frozen=True)
class HilbertCodec:
    """Encoder/decoder between points of [0, 1)^d and Hilbert indices.

    Parameters
    ----------
    d : int
        dimension
    order : int
        bits per coordinate; ``d * order`` must not exceed 64.
    """

    d: int
    order: int = 16

    def __post_init__(self):
        if self.d < 1 or self.order < 1:
            raise ValueError("d and order must be positive")
        if self.d * self.order > 64:
            raise ValueError(f"d*order = {self.d * self.order} exceeds 64 bits")

    @classmethod
    def for_dimension(cls, d, order=16):
        """Codec with the requested order, reduced if needed to fit 64-bit keys."""
        return cls(d, min(order, 64 // d))

    @property
    def total_bits(self):
        return self.d * self.order

    @property
    def n_cells(self):
        return 1 << self.total_bits

    def quantize(self, x):
        """Floor each coordinate to ``order`` bits; 1.0 maps to the last cell."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.d:
            raise ValueError(f"expected points of dimension {self.d}, got {x.shape[-1]}")
        if np.isnan(x).any() or (x < 0.0).any() or (x > 1.0).any():
            raise DomainError("Hilbert coordinates must lie in [0, 1)")
        side = 1 << self.order
        cells = np.floor(x * side)
        np.minimum(cells, side - 1, out=cells)
        return cells.astype(np.uint64)

    def cells_to_index(self, cells):
        """Hilbert indices of integer cells, shape (..., d) -> (...)."""
        cells = np.asarray(cells, dtype=np.uint64)
        flat = np.ascontiguousarray(cells.reshape(-1, self.d))
        h = _kernels.backend().hilbert_encode(flat, self.order)
        return h.reshape(cells.shape[:-1])

    def index_to_cells(self, index):
        """Integer cells of Hilbert indices, shape (...) -> (..., d)."""
        index = np.asarray(index, dtype=np.uint64)
        flat = np.ascontiguousarray(index.reshape(-1))
        if flat.size and self.total_bits < 64 and flat.max() >= self.n_cells:
            raise ValueError("Hilbert index out of range")
        cells = _kernels.backend().hilbert_decode(flat, self.d, self.order)
        return cells.reshape(index.shape + (self.d,))

    def point_to_index(self, x):
        """Index of the cell containing ``x``.

        A single point returns a Python int, an (n, d) array a uint64 array.
        """
        x = np.asarray(x, dtype=np.float64)
        h = self.cells_to_index(self.quantize(x))
        return int(h) if x.ndim == 1 else h

    def index_to_point(self, index):
        """Center of the cell addressed by ``index``."""
        cells = self.index_to_cells(index)
        return (cells.astype(np.float64) + 0.5) / float(1 << self.order)


def hilbert_sort(codec, points):
    """Stable permutation ordering ``points`` by Hilbert index.

    Returns an int array ``sigma`` such that ``points[sigma]`` has
    nondecreasing indices; ties keep their input order.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    keys = codec.cells_to_index(codec.quantize(points))
    return np.argsort(keys, kind="stable")
