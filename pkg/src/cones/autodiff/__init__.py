"""Minimal dense-tensor reverse-mode automatic differentiation."""

from . import ops
from .ops import (
    abs,
    add,
    concat,
    conv2d,
    conv_output_size,
    div,
    exp,
    instance_norm,
    leaky_relu,
    log,
    log_sigmoid,
    matmul,
    mean,
    mul,
    pixel_matvec,
    relu,
    reshape,
    sigmoid,
    sqrt,
    square,
    sub,
    sum,
    tanh,
    transpose,
    upsample_nearest,
)
from .optim import Adam, AdamState, NonFiniteGradientError, adam_step
from .tensor import (
    AutodiffError,
    ShapeError,
    Tape,
    Tensor,
    as_tensor,
    backward,
    grad_enabled,
    no_grad,
    zero_grads,
)

__all__ = [
    "Adam",
    "AdamState",
    "AutodiffError",
    "NonFiniteGradientError",
    "ShapeError",
    "Tape",
    "Tensor",
    "abs",
    "adam_step",
    "add",
    "as_tensor",
    "backward",
    "concat",
    "conv2d",
    "conv_output_size",
    "div",
    "exp",
    "grad_enabled",
    "instance_norm",
    "leaky_relu",
    "log",
    "log_sigmoid",
    "matmul",
    "mean",
    "mul",
    "no_grad",
    "ops",
    "pixel_matvec",
    "relu",
    "reshape",
    "sigmoid",
    "sqrt",
    "square",
    "sub",
    "sum",
    "tanh",
    "transpose",
    "upsample_nearest",
    "zero_grads",
]
