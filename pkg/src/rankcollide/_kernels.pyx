# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled path kernel; same contract as ``_kernels_py.run_batch``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport isfinite, INFINITY

cnp.import_array()


cdef inline bint _before(double xa, Py_ssize_t a, double xb, Py_ssize_t b) noexcept nogil:
    # ranking order: by position, then by name
    return xa < xb or (xa == xb and a < b)


cdef void _insertion_sort(double[:] x, Py_ssize_t[:] order, Py_ssize_t n) noexcept nogil:
    # order is nearly sorted from the previous step, so this is ~O(n)
    cdef Py_ssize_t i, j, cur
    cdef double xc
    for i in range(1, n):
        cur = order[i]
        xc = x[cur]
        j = i - 1
        while j >= 0 and _before(xc, cur, x[order[j]], order[j]):
            order[j + 1] = order[j]
            j -= 1
        order[j + 1] = cur


def run_batch(x0, drift, vol, z, win_lo, win_hi, eps, long buffer_start, long track_top):
    cdef double[::1] x0v = np.ascontiguousarray(x0, dtype=np.float64)
    cdef double[::1] dv = np.ascontiguousarray(drift, dtype=np.float64)
    cdef double[::1] vv = np.ascontiguousarray(vol, dtype=np.float64)
    cdef double[:, :, ::1] zv = np.ascontiguousarray(z, dtype=np.float64)
    cdef cnp.int64_t[::1] lo = np.ascontiguousarray(win_lo, dtype=np.int64)
    cdef cnp.int64_t[::1] hi = np.ascontiguousarray(win_hi, dtype=np.int64)
    cdef double[::1] ev = np.ascontiguousarray(eps, dtype=np.float64)

    cdef Py_ssize_t P = zv.shape[0], S = zv.shape[1], N = zv.shape[2]
    cdef Py_ssize_t W = lo.shape[0], E = ev.shape[0]

    min_spread_a = np.full((P, W), np.inf)
    counts_a = np.zeros((P, W, E), dtype=np.int64)
    com_a = np.zeros(P)
    min_gap_a = np.full(P, np.inf)
    contact_a = np.zeros(P, dtype=np.uint8)
    bad_a = np.full(P, -1, dtype=np.int64)
    cdef double[:, ::1] min_spread = min_spread_a
    cdef cnp.int64_t[:, :, ::1] counts = counts_a
    cdef double[::1] com = com_a
    cdef double[::1] min_gap = min_gap_a
    cdef cnp.uint8_t[::1] contact = contact_a
    cdef cnp.int64_t[::1] bad = bad_a

    cdef double[::1] x = np.empty(N)
    cdef Py_ssize_t[::1] order = np.empty(N, dtype=np.intp)
    cdef Py_ssize_t p, s, i, k, w, e
    cdef double spread, gap, total_end, total_start
    cdef bint ok

    total_start = 0.0
    for i in range(N):
        total_start += x0v[i]

    with nogil:
        for p in range(P):
            for i in range(N):
                x[i] = x0v[i]
                order[i] = i
            _insertion_sort(x, order, N)
            for s in range(S):
                ok = True
                for k in range(N):
                    i = order[k]
                    x[i] = x[i] + (dv[k] + vv[k] * zv[p, s, i])
                    if not isfinite(x[i]):
                        ok = False
                if not ok:
                    bad[p] = s + 1
                    break
                _insertion_sort(x, order, N)
                for k in range(N - 1):
                    gap = x[order[k + 1]] - x[order[k]]
                    if gap < min_gap[p]:
                        min_gap[p] = gap
                for w in range(W):
                    spread = x[order[hi[w]]] - x[order[lo[w]]]
                    if spread < min_spread[p, w]:
                        min_spread[p, w] = spread
                    for e in range(E):
                        if spread < ev[e]:
                            counts[p, w, e] += 1
                if buffer_start < N and not contact[p]:
                    for k in range(track_top + 1):
                        if order[k] >= buffer_start:
                            contact[p] = 1
                            break
            total_end = 0.0
            for i in range(N):
                total_end += x[i]
            com[p] = total_end - total_start

    return min_spread_a, counts_a, com_a, min_gap_a, contact_a.astype(bool), bad_a
