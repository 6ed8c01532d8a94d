"""Kernel dispatch: compiled extension when importable, numpy otherwise.

Set ``SIGMAHOM_PURE_PYTHON=1`` to force the numpy fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"

if os.environ.get("SIGMAHOM_PURE_PYTHON") != "1":
    try:
        from . import _kernels_ext as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
else:
    _impl = _kernels_py

philox4x32 = _impl.philox4x32
tridiag_solve = _impl.tridiag_solve
power_flux_1d = _impl.power_flux_1d

__all__ = ["BACKEND", "philox4x32", "tridiag_solve", "power_flux_1d"]
