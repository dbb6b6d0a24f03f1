"""Pure-numpy fallback for the nearest-neighbor matching kernel.

Semantics match dyncorr._core exactly, including lowest-index tie breaking
(np.argmin returns the first minimum). Works in row chunks to bound the
size of the pairwise distance temporary.
"""
import numpy as np

_CHUNK = 256


def nearest_neighbor_match(a, b):
    """Return (idx_ab, sqdist_ab, idx_ba, sqdist_ba) for row sets a, b."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ValueError("dimension mismatch between point sets")
    na, nb = a.shape[0], b.shape[0]
    if na == 0 or nb == 0:
        raise ValueError("empty point set")

    idx_ab = np.zeros(na, dtype=np.intp)
    min_ab = np.full(na, np.inf)
    idx_ba = np.zeros(nb, dtype=np.intp)
    min_ba = np.full(nb, np.inf)
    for start in range(0, na, _CHUNK):
        stop = min(start + _CHUNK, na)
        diff = a[start:stop, None, :] - b[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        idx_ab[start:stop] = d2.argmin(axis=1)
        min_ab[start:stop] = d2[np.arange(stop - start), idx_ab[start:stop]]
        col_min = d2.min(axis=0)
        better = col_min < min_ba
        idx_ba[better] = start + d2[:, better].argmin(axis=0)
        min_ba[better] = col_min[better]
    return idx_ab, min_ab, idx_ba, min_ba
