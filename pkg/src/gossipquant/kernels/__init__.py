"""Hot numeric kernels with backend selection at import time.

The compiled Cython extension is preferred; the numpy fallback keeps the
package fully functional without a build step. ``GOSSIPQUANT_PURE_PYTHON=1``
forces the fallback (useful for the benchmark and for debugging).
"""

import os

from . import py_backend

if os.environ.get("GOSSIPQUANT_PURE_PYTHON", "") not in ("", "0"):
    _impl = py_backend
    BACKEND = "python"
else:
    try:
        from . import _codebook as _impl
        BACKEND = "compiled"
    except ImportError:
        _impl = py_backend
        BACKEND = "python"

assign_bins = _impl.assign_bins
fit_codebook = _impl.fit_codebook

__all__ = ["BACKEND", "assign_bins", "fit_codebook", "py_backend"]
