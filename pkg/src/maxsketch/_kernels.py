"""Kernel backend selection.

Imports the compiled extension when present, falling back to the NumPy
implementation otherwise.  Set MAXSKETCH_PURE_PYTHON=1 to force the
fallback (used by the benchmark and for debugging).  Both backends issue
identical BLAS calls, so sketches built under either are interchangeable.
"""

import os

from maxsketch._kernels_py import ITEM_TILE, ROW_TILE
from maxsketch._kernels_py import max_inner_update as _py_max_inner_update

if os.environ.get("MAXSKETCH_PURE_PYTHON"):
    max_inner_update = _py_max_inner_update
    BACKEND = "numpy"
else:
    try:
        from maxsketch._core import max_inner_update

        BACKEND = "compiled"
    except ImportError:  # extension not built
        max_inner_update = _py_max_inner_update
        BACKEND = "numpy"

__all__ = ["max_inner_update", "BACKEND", "ROW_TILE", "ITEM_TILE"]
