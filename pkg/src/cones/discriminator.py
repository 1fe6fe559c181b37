"""Conditional patch discriminator with intermediate feature taps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .hypernet import kaiming_uniform


@dataclass(frozen=True)
class DiscriminatorConfig:
    filters: tuple[int, ...] = (64, 128, 256, 512, 1)
    strides: tuple[int, ...] = (2, 2, 2, 1, 1)
    kernel: int = 4
    pad: int = 1
    slope: float = 0.2

    def __post_init__(self):
        if len(self.filters) != len(self.strides):
            raise ValueError("filters and strides must have the same length")

    def output_size(self, size: int) -> int:
        for s in self.strides:
            size = ad.conv_output_size(size, self.kernel, s, self.pad)
        return size

    def input_window(self, index: int, size: int) -> tuple[int, int]:
        """Inclusive input-pixel range seen by output position ``index`` along one axis (clipped)."""
        lo = hi = index
        for s in reversed(self.strides):
            lo = lo * s - self.pad
            hi = hi * s - self.pad + self.kernel - 1
        return max(lo, 0), min(hi, size - 1)


@dataclass
class DiscriminatorParams:
    config: DiscriminatorConfig
    in_channels: int
    params: dict[str, Tensor]

    def parameters(self) -> dict[str, Tensor]:
        return self.params


def init_discriminator(in_channels: int, cfg: DiscriminatorConfig = DiscriminatorConfig(),
                       seed: int = 0) -> DiscriminatorParams:
    """``in_channels`` = N_t + N_s (candidate and condition are concatenated)."""
    rng = np.random.default_rng(seed)
    params = {}
    c_prev = in_channels
    k = cfg.kernel
    for i, f in enumerate(cfg.filters):
        w = kaiming_uniform(rng, (f, c_prev, k, k), c_prev * k * k, cfg.slope)
        params[f"disc.c{i}.w"] = Tensor(w, requires_grad=True, name=f"disc.c{i}.w")
        params[f"disc.c{i}.b"] = Tensor(np.zeros(f, np.float32), requires_grad=True, name=f"disc.c{i}.b")
        c_prev = f
    return DiscriminatorParams(cfg, in_channels, params)


def discriminate(candidate, condition, disc: DiscriminatorParams) -> tuple[Tensor, list[Tensor]]:
    """Patch logits and the post-activation outputs of every block but the last."""
    cand = ad.as_tensor(candidate)
    cond = ad.as_tensor(condition)
    if cand.ndim != 4 or cond.ndim != 4:
        raise ValueError(f"expected NCHW tensors, got {cand.shape} and {cond.shape}")
    if cand.shape[0] != cond.shape[0] or cand.shape[2:] != cond.shape[2:]:
        raise ValueError(f"candidate {cand.shape} and condition {cond.shape} are not aligned")
    if cand.shape[1] + cond.shape[1] != disc.in_channels:
        raise ValueError(
            f"discriminator expects {disc.in_channels} input channels, got "
            f"{cand.shape[1]} + {cond.shape[1]}"
        )
    cfg = disc.config
    h = ad.concat([cand, cond], axis=1)
    feats = []
    n = len(cfg.filters)
    for i, s in enumerate(cfg.strides):
        h = ad.conv2d(h, disc.params[f"disc.c{i}.w"], disc.params[f"disc.c{i}.b"], stride=s, pad=cfg.pad)
        if i < n - 1:
            h = ad.leaky_relu(h, cfg.slope)
            feats.append(h)
    return h, feats
