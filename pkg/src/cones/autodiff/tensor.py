"""Dense tensors with a recorded operation graph for reverse-mode differentiation."""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

_GRAD_ENABLED = True


class AutodiffError(RuntimeError):
    """Raised on misuse of the differentiation machinery."""


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible; names the offending dimensions."""


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    """A numpy array plus the bookkeeping needed to backpropagate through it.

    Leaves are created by the user (``Tensor(array, requires_grad=True)``);
    interior nodes are created by the ops in :mod:`cones.autodiff.ops` and
    hold a closure mapping the output gradient to one gradient per parent.
    """

    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_backward", "_op", "_consumed")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if dtype is None and arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self._op = "leaf"
        self._consumed = False

    # -- construction helpers -------------------------------------------------

    @classmethod
    def _from_op(cls, data: np.ndarray, parents: Sequence["Tensor"], backward: Callable, op: str) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.name = None
        out._consumed = False
        needs = _GRAD_ENABLED and any(p.requires_grad for p in parents)
        out.requires_grad = needs
        if needs:
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        out._op = op
        return out

    # -- array protocol -------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._op == "leaf"

    def numpy(self) -> np.ndarray:
        return self.data

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op={self._op}{tag})"

    def __len__(self) -> int:
        return self.data.shape[0]

    # -- operator sugar (implemented in ops) ---------------------------------

    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import ops
        if isinstance(other, Tensor):
            return ops.div(self, other)
        return ops.mul(self, 1.0 / other)

    def __neg__(self):
        from . import ops
        return ops.mul(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, idx):
        from . import ops
        return ops.getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        from . import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        from . import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        from . import ops
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.transpose(self, axes or None)

    def backward(self) -> None:
        backward(self)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if dtype is None:
        arr = np.asarray(x)
        dtype = arr.dtype if arr.dtype in (np.float32, np.float64) else np.float32
    return Tensor(np.asarray(x, dtype=dtype))


class Tape:
    """Topologically ordered record of the operations that produced a tensor.

    ``ops`` lists interior nodes with every node preceded by its inputs;
    ``leaves`` holds the user-created tensors that require gradients.
    """

    def __init__(self, nodes: list[Tensor]):
        self.nodes = nodes

    @classmethod
    def from_output(cls, out: Tensor) -> "Tape":
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(out, False)]
        while stack:
            node, expanded = stack.pop()
            key = id(node)
            if expanded:
                order.append(node)
                continue
            if key in seen:
                continue
            seen.add(key)
            stack.append((node, True))
            for parent in reversed(node._parents):
                if id(parent) not in seen and parent.requires_grad:
                    stack.append((parent, False))
        return cls(order)

    @property
    def ops(self) -> list[Tensor]:
        return [n for n in self.nodes if not n.is_leaf]

    @property
    def leaves(self) -> list[Tensor]:
        return [n for n in self.nodes if n.is_leaf]

    def __len__(self) -> int:
        return len(self.nodes)

    def backward(self, seed: np.ndarray) -> None:
        out = self.nodes[-1]
        grads: dict[int, np.ndarray] = {id(out): seed}
        owned: set[int] = set()
        for node in reversed(self.nodes):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            node.grad = g if node.grad is None else node.grad + g
            if node._backward is None:
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                _accumulate(grads, owned, parent, pg)
        for node in self.nodes:
            if not node.is_leaf:
                node._backward = None
                node._parents = ()
                node._consumed = True


class SliceGrad:
    """Gradient that is ``g`` on ``x[idx]`` and zero elsewhere, materialized lazily."""

    __slots__ = ("idx", "g", "advanced")

    def __init__(self, idx, g, advanced: bool = False):
        self.idx = idx
        self.g = g
        self.advanced = advanced


def _accumulate(grads: dict, owned: set, parent: Tensor, pg) -> None:
    key = id(parent)
    if isinstance(pg, SliceGrad):
        buf = grads.get(key)
        if buf is None:
            buf = np.zeros(parent.shape, dtype=pg.g.dtype)
            grads[key] = buf
            owned.add(key)
        elif key not in owned:
            buf = np.array(buf, copy=True)
            grads[key] = buf
            owned.add(key)
        if pg.advanced:
            np.add.at(buf, pg.idx, pg.g)
        else:
            buf[pg.idx] += pg.g
    elif key in grads:
        grads[key] = grads[key] + pg
        owned.add(key)
    else:
        grads[key] = pg


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every reachable leaf.

    The graph is consumed: calling this again on the same loss raises.
    """
    if loss.data.size != 1:
        raise AutodiffError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if loss._consumed:
        raise AutodiffError("graph already consumed by a previous backward(); rebuild the forward pass")
    if not loss.requires_grad:
        raise AutodiffError("loss does not depend on any tensor with requires_grad=True")
    if loss.is_leaf:
        loss.grad = np.ones_like(loss.data) if loss.grad is None else loss.grad + 1
        return
    tape = Tape.from_output(loss)
    tape.backward(np.ones_like(loss.data))


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None
