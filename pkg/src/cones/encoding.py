"""Coordinate grids over image lattices and sinusoidal positional encoding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CoordGrid:
    """Pixel-center coordinates in [-1, 1]; ``coords`` has shape (H*W, 2), row-major, (y, x) order."""

    height: int
    width: int
    coords: np.ndarray

    @property
    def dim(self) -> int:
        return self.coords.shape[1]


@dataclass(frozen=True)
class EncodingConfig:
    """Positional encoding settings.

    ``m`` is the number of octaves per coordinate component: component x
    maps to ``sin(2**i * pi * x), cos(2**i * pi * x)`` for i in 0..m-1, so
    each component contributes 2*m features. ``enabled=False`` feeds the
    raw coordinates only (the bare coordinate MLP).
    """

    m: int = 6
    include_raw: bool = False
    enabled: bool = True

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"frequency parameter m must be >= 1, got {self.m}")

    def output_dim(self, d: int = 2) -> int:
        if not self.enabled:
            return d
        return d * 2 * self.m + (d if self.include_raw else 0)


def axis_coords(n: int) -> np.ndarray:
    if n < 1:
        raise ValueError(f"axis length must be >= 1, got {n}")
    i = np.arange(n, dtype=np.float64)
    return (2.0 * i + 1.0) / n - 1.0


def make_coord_grid(height: int, width: int) -> CoordGrid:
    if height < 1 or width < 1:
        raise ValueError(f"grid dimensions must be >= 1, got {height}x{width}")
    ys = axis_coords(height)
    xs = axis_coords(width)
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    coords = np.stack([yy.ravel(), xx.ravel()], axis=1)
    return CoordGrid(height, width, coords)


def window_coord_grid(top: int, left: int, height: int, width: int, full_height: int, full_width: int) -> CoordGrid:
    """Coordinates of a crop window, expressed in the full image's [-1, 1] frame.

    Training on random crops with these coordinates keeps the field in one
    frame, so a model trained on crops evaluates consistently on the full image.
    """
    if not (0 <= top and top + height <= full_height and 0 <= left and left + width <= full_width):
        raise ValueError(f"window {height}x{width} at ({top}, {left}) exceeds the {full_height}x{full_width} image")
    ys = axis_coords(full_height)[top:top + height]
    xs = axis_coords(full_width)[left:left + width]
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return CoordGrid(height, width, np.stack([yy.ravel(), xx.ravel()], axis=1))


def encode_values(x: np.ndarray, m: int) -> np.ndarray:
    """Encode an (..., d) coordinate array into (..., d*2*m) sinusoid features."""
    x = np.asarray(x, dtype=np.float64)
    freqs = (2.0 ** np.arange(m)) * np.pi
    ang = x[..., :, None] * freqs  # (..., d, m)
    feats = np.stack([np.sin(ang), np.cos(ang)], axis=-1)  # (..., d, m, 2)
    return feats.reshape(*x.shape[:-1], x.shape[-1] * 2 * m)


def positional_encoding(grid: CoordGrid, cfg: EncodingConfig = EncodingConfig()) -> np.ndarray:
    """Return the (H*W, cfg.output_dim()) float64 feature matrix for ``grid``."""
    if not cfg.enabled:
        return grid.coords.copy()
    feats = encode_values(grid.coords, cfg.m)
    if cfg.include_raw:
        feats = np.concatenate([feats, grid.coords], axis=1)
    return feats
