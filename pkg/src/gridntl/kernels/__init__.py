"""Kernel backend selection.

The hot loops (tree growth for the random forest, exact nearest-neighbor
search) exist twice: a Cython extension (`_core_cy`) and a NumPy fallback
(`_core_py`). The compiled backend is used when its import succeeds;
setting GRIDNTL_PURE_PYTHON=1 forces the fallback. Both backends are
bit-identical by contract, so the choice affects speed only.
"""

import os

from . import _core_py

_cy = None
if os.environ.get("GRIDNTL_PURE_PYTHON", "0") in ("", "0"):
    try:
        from . import _core_cy as _cy
    except ImportError:
        _cy = None

_impl = _cy if _cy is not None else _core_py

BACKEND = _impl.BACKEND_NAME

METRIC_EUCLIDEAN = _core_py.METRIC_EUCLIDEAN
METRIC_MANHATTAN = _core_py.METRIC_MANHATTAN
METRIC_COSINE = _core_py.METRIC_COSINE
METRIC_CODES = {
    "euclidean": METRIC_EUCLIDEAN,
    "manhattan": METRIC_MANHATTAN,
    "cosine": METRIC_COSINE,
}

splitmix64_stream = _impl.splitmix64_stream
grow_tree = _impl.grow_tree
tree_apply = _impl.tree_apply
knn_neighbors = _impl.knn_neighbors


def available_backends():
    """Mapping of backend name to module, for benchmarks and parity tests."""
    out = {"python": _core_py}
    if _cy is not None:
        out["cython"] = _cy
    return out
