"""Hot routing kernels with a compiled backend and a pure-Python fallback.

The compiled extension is used when it was built; set ``LRPGEN_PURE_PYTHON=1``
to force the fallback. ``BACKEND`` names the active one.
"""
import os

from . import _pykernels

_FORCE_PY = os.environ.get("LRPGEN_PURE_PYTHON", "").strip() not in ("", "0")

try:
    if _FORCE_PY:
        raise ImportError("pure-Python kernels requested")
    from . import _ckernels as _impl
    BACKEND = "cython"
except ImportError:
    _impl = _pykernels
    BACKEND = "python"

route_length = _impl.route_length
subset_tours = _impl.subset_tours
subset_paths = _impl.subset_paths
partition_dp = _impl.partition_dp
split_tour = _impl.split_tour
two_opt = _impl.two_opt

__all__ = [
    "BACKEND", "route_length", "subset_tours", "subset_paths", "partition_dp", "split_tour", "two_opt",
]
