"""Convolution kernel backend, selected once at import.

The compiled extension is preferred when it was built; otherwise the
numpy fallback is used.  Set ``TSGEO_PURE_PYTHON=1`` to force the
fallback (useful for benchmarking and debugging).
"""

import os

from . import pykernels

if os.environ.get("TSGEO_PURE_PYTHON"):
    _impl = pykernels
    HAVE_NATIVE = False
else:
    try:
        from . import _native as _impl  # type: ignore[no-redef]

        HAVE_NATIVE = True
    except ImportError:
        _impl = pykernels
        HAVE_NATIVE = False

BACKEND = _impl.BACKEND
conv2d_forward = _impl.conv2d_forward
conv2d_input_grad = _impl.conv2d_input_grad
conv2d_weight_grad = _impl.conv2d_weight_grad

__all__ = [
    "BACKEND",
    "HAVE_NATIVE",
    "conv2d_forward",
    "conv2d_input_grad",
    "conv2d_weight_grad",
    "pykernels",
]
