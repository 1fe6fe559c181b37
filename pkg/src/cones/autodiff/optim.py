"""Adam with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


class NonFiniteGradientError(FloatingPointError):
    pass


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], state: AdamState) -> None:
    """Apply one in-place Adam update to ``params`` and advance ``state.t``.

    Parameters without an entry in ``grads`` keep their values but their
    moments still decay (the step counter is global).
    """
    for name, g in grads.items():
        if g is not None and not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"non-finite gradient for parameter {name!r}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name!r}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        dt = m.dtype.type
        g = g.astype(m.dtype, copy=False)
        m *= dt(b1)
        m += dt(1.0 - b1) * g
        v *= dt(b2)
        tmp = g * g
        tmp *= dt(1.0 - b2)
        v += tmp
        if state.lr == 0.0:
            continue
        np.multiply(v, dt(1.0 / c2), out=tmp)
        np.sqrt(tmp, out=tmp)
        tmp += dt(state.eps)
        np.divide(m, tmp, out=tmp)
        tmp *= dt(state.lr / c1)
        p.data -= tmp


class Adam:
    """Thin stateful wrapper: ``opt.step()`` reads ``p.grad`` from every parameter."""

    def __init__(self, params: dict[str, Tensor], lr: float, betas=(0.5, 0.999), eps: float = 1e-8):
        self.params = params
        self.state = AdamState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps)

    @property
    def lr(self) -> float:
        return self.state.lr

    @lr.setter
    def lr(self, value: float) -> None:
        self.state.lr = float(value)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self) -> None:
        grads = {name: p.grad for name, p in self.params.items() if p.grad is not None}
        adam_step(self.params, grads, self.state)
