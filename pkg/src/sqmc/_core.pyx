# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: Sobol' generation, nested scrambling, Hilbert codec and
resampling merges. Bit-identical to ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
DEF JITTER_BITS = 21


cdef inline uint64_t _mix(uint64_t x) nogil:
    cdef uint64_t z = x + GOLDEN
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


def splitmix64(x):
    cdef cnp.ndarray[uint64_t, ndim=1] a = np.ascontiguousarray(x, dtype=np.uint64).ravel()
    cdef cnp.ndarray[uint64_t, ndim=1] out = np.empty_like(a)
    cdef Py_ssize_t i
    for i in range(a.shape[0]):
        out[i] = _mix(a[i])
    return out.reshape(np.shape(x))


def dimension_key(seed, dim):
    cdef uint64_t s = <uint64_t>int(seed)
    cdef uint64_t j = <uint64_t>(dim + 1)
    return int(_mix(s ^ _mix(j)))


def sobol_ints(const uint64_t[:, ::1] V, Py_ssize_t n):
    cdef Py_ssize_t d = V.shape[0], bits = V.shape[1]
    cdef cnp.ndarray[uint64_t, ndim=2] out_arr = np.zeros((n, d), dtype=np.uint64)
    cdef uint64_t[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, c
    cdef uint64_t prev
    if n == 0:
        return out_arr
    with nogil:
        for i in range(1, n):
            # index i differs from i-1 in Gray code at the lowest zero bit of i-1
            prev = <uint64_t>(i - 1)
            c = 0
            while prev & 1:
                prev >>= 1
                c += 1
            if c >= bits:
                c = bits - 1
            for j in range(d):
                out[i, j] = out[i - 1, j] ^ V[j, c]
    return out_arr


def owen_scramble(const uint64_t[:, ::1] ints, seed, int max_bits):
    cdef Py_ssize_t n = ints.shape[0], d = ints.shape[1]
    cdef cnp.ndarray[double, ndim=2] out_arr = np.empty((n, d), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef uint64_t s = <uint64_t>int(seed)
    cdef Py_ssize_t i, j
    cdef int level, pos
    cdef uint64_t key, x, y, node, flip, tail
    cdef double scale = 1.0 / <double>(1ULL << max_bits)
    cdef double jscale = 1.0 / <double>(1ULL << JITTER_BITS)
    with nogil:
        for j in range(d):
            key = _mix(s ^ _mix(<uint64_t>(j + 1)))
            for i in range(n):
                x = ints[i, j]
                y = 0
                for level in range(max_bits):
                    pos = max_bits - 1 - level
                    node = (1ULL << level) | (x >> (pos + 1))
                    flip = _mix(key ^ (node * GOLDEN)) >> 63
                    y |= (((x >> pos) & 1ULL) ^ flip) << pos
                node = (1ULL << max_bits) | x
                tail = _mix(key ^ (node * GOLDEN)) >> (64 - JITTER_BITS)
                out[i, j] = (<double>y + (<double>tail + 0.5) * jscale) * scale
    return out_arr


def hilbert_encode(const uint64_t[:, ::1] cells, int order):
    cdef Py_ssize_t n = cells.shape[0], d = cells.shape[1]
    cdef cnp.ndarray[uint64_t, ndim=1] h_arr = np.zeros(n, dtype=np.uint64)
    cdef uint64_t[::1] h = h_arr
    cdef uint64_t[::1] X = np.empty(d, dtype=np.uint64)
    cdef Py_ssize_t k, i
    cdef uint64_t Q, P, t, acc
    cdef int b
    with nogil:
        for k in range(n):
            for i in range(d):
                X[i] = cells[k, i]
            Q = 1ULL << (order - 1)
            while Q > 1:
                P = Q - 1
                for i in range(d):
                    if X[i] & Q:
                        X[0] ^= P
                    else:
                        t = (X[0] ^ X[i]) & P
                        X[0] ^= t
                        X[i] ^= t
                Q >>= 1
            for i in range(1, d):
                X[i] ^= X[i - 1]
            t = 0
            Q = 1ULL << (order - 1)
            while Q > 1:
                if X[d - 1] & Q:
                    t ^= Q - 1
                Q >>= 1
            acc = 0
            for b in range(order - 1, -1, -1):
                for i in range(d):
                    acc = (acc << 1) | (((X[i] ^ t) >> b) & 1ULL)
            h[k] = acc
    return h_arr


def hilbert_decode(index, int d, int order):
    cdef const uint64_t[::1] h = np.ascontiguousarray(index, dtype=np.uint64)
    cdef Py_ssize_t n = h.shape[0]
    cdef cnp.ndarray[uint64_t, ndim=2] out_arr = np.zeros((n, d), dtype=np.uint64)
    cdef uint64_t[:, ::1] X = out_arr
    cdef Py_ssize_t k, i
    cdef int b, shift
    cdef uint64_t Q, P, t, N = 1ULL << order
    with nogil:
        for k in range(n):
            shift = d * order
            for b in range(order - 1, -1, -1):
                for i in range(d):
                    shift -= 1
                    X[k, i] |= ((h[k] >> shift) & 1ULL) << b
            t = X[k, d - 1] >> 1
            for i in range(d - 1, 0, -1):
                X[k, i] ^= X[k, i - 1]
            X[k, 0] ^= t
            Q = 2
            while Q != N:
                P = Q - 1
                for i in range(d - 1, -1, -1):
                    if X[k, i] & Q:
                        X[k, 0] ^= P
                    else:
                        t = (X[k, 0] ^ X[k, i]) & P
                        X[k, 0] ^= t
                        X[k, i] ^= t
                Q <<= 1
    return out_arr


def inverse_cdf(const double[::1] cumulative, const double[::1] sorted_u):
    cdef Py_ssize_t N = cumulative.shape[0], M = sorted_u.shape[0]
    cdef cnp.ndarray[int64_t, ndim=1] a_arr = np.empty(M, dtype=np.int64)
    cdef int64_t[::1] a = a_arr
    cdef Py_ssize_t n, m = 0
    with nogil:
        for n in range(M):
            while m < N - 1 and cumulative[m] < sorted_u[n]:
                m += 1
            a[n] = m
    return a_arr


def systematic(const double[::1] cumulative, double u):
    cdef Py_ssize_t N = cumulative.shape[0]
    cdef cnp.ndarray[int64_t, ndim=1] a_arr = np.empty(N, dtype=np.int64)
    cdef int64_t[::1] a = a_arr
    cdef Py_ssize_t n, m = 0
    cdef double g
    with nogil:
        for n in range(N):
            g = (n + u) / N
            while m < N - 1 and cumulative[m] <= g:
                m += 1
            a[n] = m
    return a_arr

