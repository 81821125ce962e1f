"""Backend selection for the patch-matrix kernels.

The compiled extension is used when it was built; set ``MPR_PUREPY=1`` to
force the numpy fallback. ``BACKEND`` names the active implementation.
"""
import os

import numpy as np

from . import _kernels_py

try:
    if os.environ.get("MPR_PUREPY", "") not in ("", "0"):
        raise ImportError("pure-python backend forced")
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

BACKEND = "cython" if _compiled is not None else "numpy"


def available_backends():
    return ["numpy"] + (["cython"] if _compiled is not None else [])


def _impl(backend):
    if backend is None:
        backend = BACKEND
    if backend == "cython":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not built")
        return _compiled
    if backend == "numpy":
        return _kernels_py
    raise ValueError(f"unknown kernel backend {backend!r}")


def im2col(x, kh, kw, stride=1, pad=0, dil=1, backend=None):
    """Expand ``x`` of shape (n, c, h, w) into (n, c*kh*kw, oh*ow) patch columns."""
    x = np.ascontiguousarray(x)
    return _impl(backend).im2col(x, kh, kw, stride, pad, dil)


def col2im(cols, c, h, w, kh, kw, stride=1, pad=0, dil=1, backend=None):
    """Adjoint of :func:`im2col`: scatter-add columns back onto an (n, c, h, w) grid."""
    cols = np.ascontiguousarray(cols)
    return _impl(backend).col2im(cols, c, h, w, kh, kw, stride, pad, dil)
