# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled nearest-neighbor matching kernel.

Single O(na*nb*d) pass computing, for each row of one set, the index and
squared distance of its nearest row in the other set, in both directions.
Ties are broken by lowest index.
"""
import numpy as np

cimport numpy as cnp

cnp.import_array()


def nearest_neighbor_match(double[:, ::1] a, double[:, ::1] b):
    """Return (idx_ab, sqdist_ab, idx_ba, sqdist_ba) for row sets a, b."""
    cdef Py_ssize_t na = a.shape[0]
    cdef Py_ssize_t nb = b.shape[0]
    cdef Py_ssize_t d = a.shape[1]
    if b.shape[1] != d:
        raise ValueError("dimension mismatch between point sets")
    if na == 0 or nb == 0:
        raise ValueError("empty point set")

    idx_ab_arr = np.zeros(na, dtype=np.intp)
    idx_ba_arr = np.zeros(nb, dtype=np.intp)
    min_ab_arr = np.full(na, np.inf)
    min_ba_arr = np.full(nb, np.inf)
    cdef cnp.intp_t[::1] idx_ab = idx_ab_arr
    cdef cnp.intp_t[::1] idx_ba = idx_ba_arr
    cdef double[::1] min_ab = min_ab_arr
    cdef double[::1] min_ba = min_ba_arr

    cdef Py_ssize_t i, j, k
    cdef double dist, diff
    for i in range(na):
        for j in range(nb):
            dist = 0.0
            for k in range(d):
                diff = a[i, k] - b[j, k]
                dist += diff * diff
            if dist < min_ab[i]:
                min_ab[i] = dist
                idx_ab[i] = j
            if dist < min_ba[j]:
                min_ba[j] = dist
                idx_ba[j] = i
    return idx_ab_arr, min_ab_arr, idx_ba_arr, min_ba_arr
