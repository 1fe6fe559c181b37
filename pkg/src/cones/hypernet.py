"""Bottom-up convolutional encoder producing a per-pixel latent field.

Stages run at resolutions 1, 1/2, 1/4, ... of the input. Each stage is an
entry convolution (stride 1 for the first stage, 2 afterwards), a number of
residual blocks, and a 3x3 smoothing convolution; the smoothed maps are
upsampled back to full resolution, summed, and projected 1x1 to the latent
channel count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

RESNET101_STAGE_BLOCKS = (2, 4, 23, 3)


@dataclass(frozen=True)
class HypernetConfig:
    stage_blocks: tuple[int, ...] = (1, 1, 2, 1)
    stage_widths: tuple[int, ...] = (16, 32, 64, 64)
    fpn_width: int = 32
    norm: bool = True
    slope: float = 0.2

    def __post_init__(self):
        if len(self.stage_blocks) != len(self.stage_widths):
            raise ValueError("stage_blocks and stage_widths must have the same length")
        if not self.stage_blocks:
            raise ValueError("at least one stage is required")

    @property
    def n_stages(self) -> int:
        return len(self.stage_blocks)

    @property
    def divisor(self) -> int:
        """Input height and width must be multiples of this."""
        return 2 ** (self.n_stages - 1)


def kaiming_uniform(rng: np.random.Generator, shape, fan_in: int, slope: float = 0.2) -> np.ndarray:
    gain = np.sqrt(2.0 / (1.0 + slope * slope))
    bound = gain * np.sqrt(3.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


def _conv_params(rng, name, c_out, c_in, k, slope):
    w = kaiming_uniform(rng, (c_out, c_in, k, k), c_in * k * k, slope)
    return {f"{name}.w": Tensor(w, requires_grad=True, name=f"{name}.w"),
            f"{name}.b": Tensor(np.zeros(c_out, np.float32), requires_grad=True, name=f"{name}.b")}


def init_hypernet(cfg: HypernetConfig, n_source: int, latent_channels: int, rng: np.random.Generator,
                  proj_bias: np.ndarray | None = None) -> dict[str, Tensor]:
    """Build hypernetwork parameters.

    The final 1x1 projection starts with zero weights, so the generated
    latent at initialization is exactly ``proj_bias`` (zeros by default).
    """
    params: dict[str, Tensor] = {}
    c_prev = n_source
    for s, (nb, width) in enumerate(zip(cfg.stage_blocks, cfg.stage_widths)):
        params.update(_conv_params(rng, f"hyper.s{s}.entry", width, c_prev, 3, cfg.slope))
        for b in range(nb):
            params.update(_conv_params(rng, f"hyper.s{s}.r{b}.c1", width, width, 3, cfg.slope))
            params.update(_conv_params(rng, f"hyper.s{s}.r{b}.c2", width, width, 3, cfg.slope))
        params.update(_conv_params(rng, f"hyper.s{s}.smooth", cfg.fpn_width, width, 3, cfg.slope))
        c_prev = width
    bias = np.zeros(latent_channels, np.float32) if proj_bias is None else np.asarray(proj_bias, np.float32)
    if bias.shape != (latent_channels,):
        raise ValueError(f"projection bias must have shape ({latent_channels},), got {bias.shape}")
    params["hyper.proj.w"] = Tensor(np.zeros((latent_channels, cfg.fpn_width, 1, 1), np.float32),
                                    requires_grad=True, name="hyper.proj.w")
    params["hyper.proj.b"] = Tensor(bias.copy(), requires_grad=True, name="hyper.proj.b")
    return params


def _conv(x, params, name, stride=1, pad=1):
    return ad.conv2d(x, params[f"{name}.w"], params[f"{name}.b"], stride=stride, pad=pad)


def _residual_block(x, params, name, cfg: HypernetConfig):
    h = _conv(x, params, f"{name}.c1")
    if cfg.norm:
        h = ad.instance_norm(h)
    h = ad.leaky_relu(h, cfg.slope)
    h = _conv(h, params, f"{name}.c2")
    if cfg.norm:
        h = ad.instance_norm(h)
    return ad.leaky_relu(h + x, cfg.slope)


def check_divisible(height: int, width: int, cfg: HypernetConfig) -> None:
    d = cfg.divisor
    if height % d or width % d:
        raise ValueError(
            f"input {height}x{width} is not divisible by {d} (= 2**(stages-1)); "
            f"pad or crop to a multiple of {d}"
        )


def stage_features(source: Tensor, params: dict[str, Tensor], cfg: HypernetConfig) -> list[Tensor]:
    """Smoothed per-stage feature maps, before upsampling (stage s at 1/2**s resolution)."""
    if source.ndim != 4:
        raise ValueError(f"source must be (B, N_s, H, W), got shape {source.shape}")
    check_divisible(source.shape[2], source.shape[3], cfg)
    feats = []
    h = source
    for s, nb in enumerate(cfg.stage_blocks):
        h = ad.leaky_relu(_conv(h, params, f"hyper.s{s}.entry", stride=1 if s == 0 else 2), cfg.slope)
        for b in range(nb):
            h = _residual_block(h, params, f"hyper.s{s}.r{b}", cfg)
        feats.append(_conv(h, params, f"hyper.s{s}.smooth"))
    return feats


def _fused_features(source: Tensor, params: dict[str, Tensor], cfg: HypernetConfig) -> Tensor:
    feats = stage_features(source, params, cfg)
    fused = feats[0]
    for s, f in enumerate(feats[1:], start=1):
        fused = fused + ad.upsample_nearest(f, 2 ** s)
    return ad.leaky_relu(fused, cfg.slope)


def hypernet_forward_pixels(source: Tensor, params: dict[str, Tensor], cfg: HypernetConfig) -> Tensor:
    """Latent as a (B*H*W, C) matrix, rows in (batch, y, x) order.

    Same values as :func:`hypernet_forward`; the 1x1 projection is applied
    as a matrix product so each pixel's code is contiguous in memory.
    """
    fused = _fused_features(source, params, cfg)
    b, f, h, w = fused.shape
    rows = ad.reshape(ad.transpose(fused, (0, 2, 3, 1)), (b * h * w, f))
    c = params["hyper.proj.w"].shape[0]
    proj = ad.transpose(ad.reshape(params["hyper.proj.w"], (c, f)), (1, 0))
    return rows @ proj + params["hyper.proj.b"]


def hypernet_forward(source: Tensor, params: dict[str, Tensor], cfg: HypernetConfig) -> Tensor:
    """Map a (B, N_s, H, W) source stack to a (B, C, H, W) latent field."""
    fused = _fused_features(source, params, cfg)
    return ad.conv2d(fused, params["hyper.proj.w"], params["hyper.proj.b"], stride=1, pad=0)


def influence_radius(cfg: HypernetConfig) -> int:
    """Chebyshev radius bounding how far a single input pixel can affect the latent.

    Only meaningful with ``norm=False`` (instance normalization couples
    every pixel of a plane).
    """
    worst = 0
    radius = 0
    jump = 1
    for s, nb in enumerate(cfg.stage_blocks):
        stride = 1 if s == 0 else 2
        radius += jump  # 3x3 entry conv, (k-1)/2 = 1 at the incoming jump
        jump *= stride
        radius += 2 * nb * jump  # two 3x3 convs per block
        stage_radius = radius + jump  # smoothing conv
        # nearest upsampling: output p reads the stage pixel anchored in [p-jump+1, p]
        worst = max(worst, stage_radius + jump - 1)
    return worst
