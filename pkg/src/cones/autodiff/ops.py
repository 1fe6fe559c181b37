"""Differentiable operations on :class:`~cones.autodiff.tensor.Tensor`.

Each op computes its forward result with numpy (or a hot kernel) and
registers a closure that maps the output gradient to the inputs' gradients.
Broadcasting is supported for the elementwise binary ops only.
"""

from __future__ import annotations

import numpy as np

from .. import kernels
from .tensor import ShapeError, SliceGrad, Tensor, as_tensor


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _lift(a, b):
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.dtype))
    elif isinstance(b, Tensor) and not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=b.dtype))
    return as_tensor(a), as_tensor(b)


# -- elementwise binary --------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _lift(a, b)
    out = a.data + b.data

    def back(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._from_op(out, (a, b), back, "add")


def sub(a, b) -> Tensor:
    a, b = _lift(a, b)
    out = a.data - b.data

    def back(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor._from_op(out, (a, b), back, "sub")


def mul(a, b) -> Tensor:
    a, b = _lift(a, b)
    out = a.data * b.data

    def back(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return Tensor._from_op(out, (a, b), back, "mul")


def div(a, b) -> Tensor:
    a, b = _lift(a, b)
    out = a.data / b.data

    def back(g):
        ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape) if b.requires_grad else None
        return ga, gb

    return Tensor._from_op(out, (a, b), back, "div")


# -- elementwise unary ---------------------------------------------------------


def square(x: Tensor) -> Tensor:
    out = x.data * x.data
    return Tensor._from_op(out, (x,), lambda g: (2.0 * x.data * g,), "square")


def abs(x: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    out = np.abs(x.data)
    return Tensor._from_op(out, (x,), lambda g: (np.sign(x.data) * g,), "abs")


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return Tensor._from_op(out, (x,), lambda g: (out * g,), "exp")


def log(x: Tensor) -> Tensor:
    out = np.log(x.data)
    return Tensor._from_op(out, (x,), lambda g: (g / x.data,), "log")


def sqrt(x: Tensor) -> Tensor:
    out = np.sqrt(x.data)
    return Tensor._from_op(out, (x,), lambda g: (0.5 * g / out,), "sqrt")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    out = np.where(mask, x.data, 0).astype(x.dtype, copy=False)
    return Tensor._from_op(out, (x,), lambda g: (g * mask,), "relu")


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    """x for x >= 0, slope*x otherwise."""
    d = x.data
    sl = d.dtype.type(slope)
    out = d * sl
    if 0.0 <= slope <= 1.0:
        np.maximum(d, out, out=out)
    else:
        np.copyto(out, d, where=d >= 0)

    def back(g):
        # arithmetic mask: boolean-indexed writes are far slower on random signs
        scale = (d >= 0).astype(d.dtype)
        one = d.dtype.type(1)
        if (one - sl) + sl == one:
            scale *= one - sl
            scale += sl
        else:
            scale = np.where(scale > 0, one, sl)
        return (g * scale,)

    return Tensor._from_op(out, (x,), back, "leaky_relu")


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return Tensor._from_op(out, (x,), lambda g: (g * (1.0 - out * out),), "tanh")


def sigmoid(x: Tensor) -> Tensor:
    out = _sigmoid(x.data)
    return Tensor._from_op(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def log_sigmoid(x: Tensor) -> Tensor:
    """Numerically stable log(sigmoid(x))."""
    d = x.data
    out = np.minimum(d, 0) - np.log1p(np.exp(-np.abs(d)))
    return Tensor._from_op(out.astype(x.dtype, copy=False), (x,), lambda g: (g * _sigmoid(-d),), "log_sigmoid")


def _sigmoid(d: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(d))
    return np.where(d >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(d.dtype, copy=False)


# -- reductions and shape ------------------------------------------------------


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    out = np.sum(x.data, axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return Tensor._from_op(np.asarray(out, dtype=x.dtype), (x,), back, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = x.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([x.shape[a] for a in axes]))
    out = np.mean(x.data, axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, x.shape).astype(x.dtype),)

    return Tensor._from_op(np.asarray(out, dtype=x.dtype), (x,), back, "mean")


def reshape(x: Tensor, shape) -> Tensor:
    out = x.data.reshape(shape)
    return Tensor._from_op(out, (x,), lambda g: (g.reshape(x.shape),), "reshape")


def transpose(x: Tensor, axes=None) -> Tensor:
    out = np.transpose(x.data, axes)
    inv = None if axes is None else np.argsort(axes)
    return Tensor._from_op(out, (x,), lambda g: (np.transpose(g, inv),), "transpose")


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def back(g):
        parts = []
        for i in range(len(tensors)):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(bounds[i], bounds[i + 1])
            parts.append(g[tuple(sl)])
        return tuple(parts)

    return Tensor._from_op(out, tensors, back, "concat")


def getitem(x: Tensor, idx) -> Tensor:
    out = x.data[idx]

    advanced = _is_advanced(idx)

    def back(g):
        return (SliceGrad(idx, g, advanced),)

    return Tensor._from_op(np.array(out, copy=True), (x,), back, "getitem")


def _is_advanced(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return any(isinstance(i, (list, np.ndarray, Tensor)) for i in items)


# -- linear algebra ------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2-D matrix product (P, I) @ (I, O)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: a.shape[1]={a.shape[1]} vs b.shape[0]={b.shape[0]}")
    out = a.data @ b.data

    def back(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.T @ g if b.requires_grad else None
        return ga, gb

    return Tensor._from_op(out, (a, b), back, "matmul")


def pixel_matvec(w: Tensor, x: Tensor) -> Tensor:
    """Row-wise matrix-vector product: out[p] = w[p] @ x[p], w (P, O, I), x (P, I)."""
    if w.ndim != 3 or x.ndim != 2 or w.shape[0] != x.shape[0] or w.shape[2] != x.shape[1]:
        raise ShapeError(f"pixel_matvec needs w (P, O, I) and x (P, I); got {w.shape} and {x.shape}")
    out = kernels.pixel_matvec(w.data, x.data)

    def back(g):
        gw = g[:, :, None] * x.data[:, None, :] if w.requires_grad else None
        gx = kernels.pixel_matvec_t(w.data, g) if x.requires_grad else None
        return gw, gx

    return Tensor._from_op(out, (w, x), back, "pixel_matvec")


# -- convolution ---------------------------------------------------------------


def conv_output_size(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def conv2d(x: Tensor, w: Tensor, bias: Tensor | None = None, stride: int = 1, pad: int = 0) -> Tensor:
    """Cross-correlation of an NCHW input with an OIHW kernel, zero padding."""
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d expects NCHW input and OIHW kernel, got {x.shape} and {w.shape}")
    n, c, h, wd = x.shape
    o, ci, kh, kw = w.shape
    if c != ci:
        raise ShapeError(f"conv2d channel mismatch: input C={c} but kernel expects I={ci}")
    if stride < 1 or pad < 0:
        raise ShapeError(f"conv2d needs stride >= 1 and pad >= 0, got stride={stride}, pad={pad}")
    ho = conv_output_size(h, kh, stride, pad)
    wo = conv_output_size(wd, kw, stride, pad)
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv2d output would be empty: H={h}, W={wd}, kernel={kh}x{kw}, stride={stride}, pad={pad}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else np.ascontiguousarray(x.data)
    cols = kernels.im2col(xp, kh, kw, stride)  # (N, C*kh*kw, L)
    wmat = w.data.reshape(o, -1)
    out = np.matmul(wmat, cols)
    if bias is not None:
        out += bias.data.reshape(1, o, 1)
    out = out.reshape(n, o, ho, wo)
    parents = (x, w) if bias is None else (x, w, bias)

    def back(g):
        g2 = g.reshape(n, o, ho * wo)
        gx = gw = gb = None
        if w.requires_grad:
            l = ho * wo
            gflat = g2.transpose(1, 0, 2).reshape(o, n * l)
            cflat = cols.transpose(0, 2, 1).reshape(n * l, c * kh * kw)
            gw = (gflat @ cflat).reshape(w.shape)
        if x.requires_grad:
            gcols = np.matmul(wmat.T, g2)
            gxp = kernels.col2im(gcols, xp.shape, kh, kw, stride)
            gx = gxp[:, :, pad:pad + h, pad:pad + wd] if pad else gxp
        if bias is not None and bias.requires_grad:
            gb = g2.sum(axis=(0, 2))
        return (gx, gw) if bias is None else (gx, gw, gb)

    return Tensor._from_op(out, parents, back, "conv2d")


def upsample_nearest(x: Tensor, factor: int) -> Tensor:
    """Replicate each pixel of an NCHW tensor factor x factor times."""
    if factor < 1:
        raise ValueError(f"upsample factor must be >= 1, got {factor}")
    if factor == 1:
        return reshape(x, x.shape)
    out = np.repeat(np.repeat(x.data, factor, axis=2), factor, axis=3)

    def back(g):
        n, c, h, w = x.shape
        return (g.reshape(n, c, h, factor, w, factor).sum(axis=(3, 5)),)

    return Tensor._from_op(out, (x,), back, "upsample_nearest")


def instance_norm(x: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each (sample, channel) plane of an NCHW tensor to zero mean, unit variance."""
    d = x.data
    mu = d.mean(axis=(2, 3), keepdims=True)
    xc = d - mu
    var = (xc * xc).mean(axis=(2, 3), keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv

    def back(g):
        gm = g.mean(axis=(2, 3), keepdims=True)
        gxm = (g * xhat).mean(axis=(2, 3), keepdims=True)
        return ((g - gm - xhat * gxm) * inv,)

    return Tensor._from_op(xhat.astype(d.dtype, copy=False), (x,), back, "instance_norm")
