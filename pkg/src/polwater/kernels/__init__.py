"""Stereo matching kernels.

The compiled extension is used when it was built; otherwise the numpy
fallback is selected. Set ``POLWATER_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _fallback

try:
    if os.environ.get("POLWATER_PURE_PYTHON"):
        raise ImportError("pure-python kernels requested")
    from . import _sgm as _impl
    BACKEND = "cython"
except ImportError:
    _impl = _fallback
    BACKEND = "numpy"

census_transform = _impl.census_transform
hamming_cost_volume = _impl.hamming_cost_volume
aggregate_paths = _impl.aggregate_paths

__all__ = ["BACKEND", "census_transform", "hamming_cost_volume", "aggregate_paths"]
