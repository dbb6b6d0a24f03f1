"""Hot-loop kernel selection.

The compiled Cython kernel is used when the extension built; otherwise the
pure-numpy fallback takes over with identical semantics. `HAVE_COMPILED`
reports which one is active; both are importable for the benchmark and the
equivalence tests.
"""
import numpy as np

from . import _core_py

try:
    from . import _core

    _impl = _core
    HAVE_COMPILED = True
except ImportError:  # extension not built on this install
    _impl = _core_py
    HAVE_COMPILED = False


def nearest_neighbor_match(a, b):
    """Two-directional nearest-neighbor match between row sets.

    Returns (idx_ab, sqdist_ab, idx_ba, sqdist_ba): for each row of `a` the
    index and squared Euclidean distance of its nearest row in `b`, and vice
    versa. Ties break to the lowest index.
    """
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    return _impl.nearest_neighbor_match(a, b)
