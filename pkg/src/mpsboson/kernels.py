"""Kernel selection: the compiled extension when importable, numpy otherwise.

Set ``MPSBOSON_PURE_PYTHON=1`` to force the numpy path.
"""

import os

from . import _kernels_py

if os.environ.get("MPSBOSON_PURE_PYTHON"):
    _ext = None
else:
    try:
        from . import _kernels as _ext
    except ImportError:
        _ext = None

BACKEND = "cython" if _ext is not None else "numpy"
_impl = _ext if _ext is not None else _kernels_py


def apply_two_site(psi, h, d, n_sites, i, j, out):
    _impl.apply_two_site(psi, h, d, n_sites, i, j, out)
