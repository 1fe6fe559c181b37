"""Pure numpy implementations of the hot kernels.

Every function here has a twin in ``_ext.pyx`` with the same signature and
the same summation order, so the two backends agree bit-for-bit on
gather/copy kernels and to rounding on accumulating kernels.
"""

import numpy as np
from numpy.lib.stride_tricks import as_strided


def im2col(x, kh, kw, stride):
    """Unfold an already-padded (N, C, H, W) array into (N, C*kh*kw, Ho*Wo)."""
    n, c, h, w = x.shape
    ho = (h - kh) // stride + 1
    wo = (w - kw) // stride + 1
    sn, sc, sh, sw = x.strides
    view = as_strided(
        x,
        shape=(n, c, kh, kw, ho, wo),
        strides=(sn, sc, sh, sw, sh * stride, sw * stride),
        writeable=False,
    )
    return np.ascontiguousarray(view).reshape(n, c * kh * kw, ho * wo)


def col2im(cols, shape, kh, kw, stride):
    """Adjoint of :func:`im2col`: scatter-add columns back into ``shape``."""
    n, c, h, w = shape
    ho = (h - kh) // stride + 1
    wo = (w - kw) // stride + 1
    cols = cols.reshape(n, c, kh, kw, ho, wo)
    out = np.zeros(shape, dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += cols[:, :, i, j]
    return out


def pixel_matvec(w, x):
    """Per-row matrix-vector product: out[p] = w[p] @ x[p]."""
    return np.einsum("poi,pi->po", w, x)


def pixel_matvec_t(w, g):
    """Per-row transposed product: out[p] = w[p].T @ g[p]."""
    return np.einsum("poi,po->pi", w, g)


def annulus_sum(values, bins, nbins):
    """Sum ``values`` into integer ``bins`` in row-major order; bins >= nbins dropped."""
    v = np.ascontiguousarray(values, dtype=np.float64).ravel()
    b = np.ascontiguousarray(bins, dtype=np.int64).ravel()
    keep = b < nbins
    return np.bincount(b[keep], weights=v[keep], minlength=nbins)[:nbins]
