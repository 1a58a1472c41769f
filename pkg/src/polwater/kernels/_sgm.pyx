# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled census / cost volume / semi-global aggregation kernels.

Bit-for-bit equivalent to :mod:`polwater.kernels._fallback`.
"""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint8_t, uint16_t, uint32_t, uint64_t

cnp.import_array()


cdef inline int _clampi(int x, int lo, int hi) noexcept nogil:
    if x < lo:
        return lo
    if x > hi:
        return hi
    return x


cdef extern from *:
    int __builtin_popcountll(unsigned long long x) nogil


cdef inline int _popcount(uint64_t x) noexcept nogil:
    return __builtin_popcountll(x)


def census_transform(const uint8_t[:, ::1] img, int radius):
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1]
    out = np.zeros((h, w), dtype=np.uint64)
    cdef uint64_t[:, ::1] o = out
    cdef Py_ssize_t v, u
    cdef int dv, du, vv, uu
    cdef uint64_t code
    cdef uint8_t c
    with nogil:
        for v in range(h):
            for u in range(w):
                c = img[v, u]
                code = 0
                for dv in range(-radius, radius + 1):
                    vv = _clampi(<int>v + dv, 0, <int>h - 1)
                    for du in range(-radius, radius + 1):
                        if dv == 0 and du == 0:
                            continue
                        uu = _clampi(<int>u + du, 0, <int>w - 1)
                        code = (code << 1) | (img[vv, uu] < c)
                o[v, u] = code
    return out


def hamming_cost_volume(const uint64_t[:, ::1] left, const uint64_t[:, ::1] right,
                        int max_disp, int invalid_cost):
    cdef Py_ssize_t h = left.shape[0], w = left.shape[1]
    out = np.empty((h, w, max_disp), dtype=np.uint16)
    cdef uint16_t[:, :, ::1] o = out
    cdef Py_ssize_t v, u
    cdef int d
    with nogil:
        for v in range(h):
            for u in range(w):
                for d in range(max_disp):
                    if u - d < 0:
                        o[v, u, d] = <uint16_t>invalid_cost
                    else:
                        o[v, u, d] = <uint16_t>_popcount(left[v, u] ^ right[v, u - d])
    return out


cdef void _path(const uint16_t[:, :, ::1] cost, uint32_t[:, :, ::1] total,
                uint32_t[:, :, ::1] rows, int dv, int du, uint32_t p1, uint32_t p2) noexcept nogil:
    # rows[i & 1] holds the row being filled, rows[(i - 1) & 1] the one before it
    cdef int h = cost.shape[0], w = cost.shape[1], nd = cost.shape[2]
    cdef int i, j, v, u, d, pv, pu, c, s
    cdef uint32_t best, cand, m
    for i in range(h):
        v = i if dv >= 0 else h - 1 - i
        c = i & 1
        s = c if dv == 0 else 1 - c
        for j in range(w):
            u = j if du >= 0 else w - 1 - j
            pv = v - dv
            pu = u - du
            if pv < 0 or pv >= h or pu < 0 or pu >= w:
                for d in range(nd):
                    rows[c, u, d] = cost[v, u, d]
                    total[v, u, d] += cost[v, u, d]
                continue
            m = rows[s, pu, 0]
            for d in range(1, nd):
                if rows[s, pu, d] < m:
                    m = rows[s, pu, d]
            for d in range(nd):
                best = rows[s, pu, d]
                if d > 0:
                    cand = rows[s, pu, d - 1] + p1
                    if cand < best:
                        best = cand
                if d < nd - 1:
                    cand = rows[s, pu, d + 1] + p1
                    if cand < best:
                        best = cand
                cand = m + p2
                if cand < best:
                    best = cand
                rows[c, u, d] = cost[v, u, d] + best - m
                total[v, u, d] += rows[c, u, d]


def aggregate_paths(const uint16_t[:, :, ::1] cost, int p1, int p2, directions):
    cdef Py_ssize_t h = cost.shape[0], w = cost.shape[1], nd = cost.shape[2]
    out = np.zeros((h, w, nd), dtype=np.uint32)
    cdef uint32_t[:, :, ::1] total = out
    cdef uint32_t[:, :, ::1] rows = np.zeros((2, w, nd), dtype=np.uint32)
    cdef int dv, du
    for dv, du in directions:
        with nogil:
            _path(cost, total, rows, dv, du, <uint32_t>p1, <uint32_t>p2)
    return out
