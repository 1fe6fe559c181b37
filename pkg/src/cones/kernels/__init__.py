"""Hot kernels with a compiled backend and a numpy fallback.

The compiled module is used when it imports cleanly; set
``CONES_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pure

BACKEND = "python"
_impl = _pure

if os.environ.get("CONES_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ext as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _pure

im2col = _impl.im2col
col2im = _impl.col2im
pixel_matvec = _impl.pixel_matvec
pixel_matvec_t = _impl.pixel_matvec_t
annulus_sum = _impl.annulus_sum

__all__ = [
    "BACKEND",
    "im2col",
    "col2im",
    "pixel_matvec",
    "pixel_matvec_t",
    "annulus_sum",
]
