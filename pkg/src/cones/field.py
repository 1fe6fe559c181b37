"""Conditional coordinate MLP: shift modulation, FiLM and full-hypernetwork modes.

The MLP runs independently at every pixel. Its input is the positional
encoding of the pixel coordinate, optionally concatenated with the source
intensities at that pixel. Per-pixel conditioning comes from a latent
vector z(x) produced by the hypernetwork and sliced contiguously, in layer
order, into the modulations each mode needs.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, no_grad
from .encoding import EncodingConfig, make_coord_grid, positional_encoding, window_coord_grid
from .hypernet import HypernetConfig, hypernet_forward_pixels, init_hypernet, kaiming_uniform


class ConditioningMode(str, enum.Enum):
    SHIFT = "shift"
    FILM = "film"
    FULL = "full"


@dataclass(frozen=True)
class FieldConfig:
    """Shape of the conditional field.

    ``hidden`` lists the hidden layer widths; together with the output
    layer (width ``n_target``) the default gives five linear layers.
    """

    hidden: tuple[int, ...] = (64, 64, 64, 64)
    n_source: int = 3
    n_target: int = 1
    mode: ConditioningMode = ConditioningMode.SHIFT
    use_intensity: bool = True
    encoding: EncodingConfig = field(default_factory=EncodingConfig)
    slope: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "mode", ConditioningMode(self.mode))
        object.__setattr__(self, "hidden", tuple(int(w) for w in self.hidden))
        if self.n_source < 1 or self.n_target < 1:
            raise ValueError("n_source and n_target must be >= 1")

    @property
    def input_dim(self) -> int:
        return self.encoding.output_dim(2) + (self.n_source if self.use_intensity else 0)

    @property
    def widths(self) -> tuple[int, ...]:
        return self.hidden + (self.n_target,)

    @property
    def latent_channels(self) -> int:
        return generated_param_count(self.widths, self.mode, self.input_dim)


def generated_param_count(widths, mode: ConditioningMode | str, input_dim: int) -> int:
    """Number of scalars the hypernetwork must emit per pixel.

    ``widths`` are the output widths of every linear layer, output layer
    last. Shift modulation emits one bias per hidden neuron, FiLM a scale
    and a bias per hidden neuron, and the full hypernetwork every weight
    and bias of every layer.
    """
    mode = ConditioningMode(mode)
    widths = [int(w) for w in widths]
    hidden = widths[:-1]
    if mode is ConditioningMode.SHIFT:
        return sum(hidden)
    if mode is ConditioningMode.FILM:
        return 2 * sum(hidden)
    count = 0
    fan_in = input_dim
    for w in widths:
        count += (fan_in + 1) * w
        fan_in = w
    return count


@dataclass(frozen=True)
class LatentSlice:
    layer: int
    kind: str  # "alpha" | "beta" | "weight" | "bias"
    start: int
    stop: int
    shape: tuple[int, ...]


def latent_layout(widths, mode: ConditioningMode | str, input_dim: int,
                  modulate_output: bool = False) -> list[LatentSlice]:
    """Contiguous slicing plan of z(x) into per-layer modulations, in layer order."""
    mode = ConditioningMode(mode)
    widths = [int(w) for w in widths]
    plan: list[LatentSlice] = []
    pos = 0
    fan_in = input_dim
    n_mod = len(widths) if (modulate_output or mode is ConditioningMode.FULL) else len(widths) - 1
    for i, w in enumerate(widths[:n_mod]):
        if mode is ConditioningMode.SHIFT:
            plan.append(LatentSlice(i, "beta", pos, pos + w, (w,)))
            pos += w
        elif mode is ConditioningMode.FILM:
            plan.append(LatentSlice(i, "alpha", pos, pos + w, (w,)))
            plan.append(LatentSlice(i, "beta", pos + w, pos + 2 * w, (w,)))
            pos += 2 * w
        else:
            plan.append(LatentSlice(i, "weight", pos, pos + w * fan_in, (w, fan_in)))
            pos += w * fan_in
            plan.append(LatentSlice(i, "bias", pos, pos + w, (w,)))
            pos += w
        fan_in = w
    return plan


class LatentError(ValueError):
    pass


def _latent_part(latent: Tensor, sl: LatentSlice) -> Tensor:
    if latent.shape[1] < sl.stop:
        raise LatentError(
            f"latent has {latent.shape[1]} channels but layer {sl.layer} needs channels "
            f"[{sl.start}, {sl.stop}) for its {sl.kind}"
        )
    return latent[:, sl.start:sl.stop]


def _leaky(slope):
    return lambda t: ad.leaky_relu(t, slope)


def _identity(t):
    return t


def init_mlp(cfg: FieldConfig, rng: np.random.Generator) -> dict[str, Tensor]:
    """Shared weights w_i (stored as (in, out)) and biases b_i."""
    params: dict[str, Tensor] = {}
    fan_in = cfg.input_dim
    for i, w in enumerate(cfg.widths):
        params[f"mlp.w{i}"] = Tensor(kaiming_uniform(rng, (fan_in, w), fan_in, cfg.slope),
                                     requires_grad=True, name=f"mlp.w{i}")
        params[f"mlp.b{i}"] = Tensor(np.zeros(w, np.float32), requires_grad=True, name=f"mlp.b{i}")
        fan_in = w
    return params


def _n_layers(params: dict[str, Tensor]) -> int:
    return sum(1 for k in params if k.startswith("mlp.w"))


def build_input(encoded, intensities=None) -> Tensor:
    enc = encoded.data if isinstance(encoded, Tensor) else np.asarray(encoded)
    if intensities is None:
        return ad.as_tensor(enc) if isinstance(encoded, Tensor) else Tensor(enc.astype(np.float32))
    s = intensities.data if isinstance(intensities, Tensor) else np.asarray(intensities)
    if s.shape[0] != enc.shape[0]:
        raise ValueError(f"encoded rows ({enc.shape[0]}) != intensity rows ({s.shape[0]})")
    dtype = np.float64 if np.float64 in (enc.dtype, s.dtype) else np.float32
    return Tensor(np.concatenate([enc, s], axis=1).astype(dtype))


def unconditioned_forward(encoded, intensities, params, activation: Callable | None = None,
                          output_activation: Callable = ad.tanh) -> Tensor:
    """The bare shared MLP with no modulation."""
    act = activation or _leaky(0.2)
    h = build_input(encoded, intensities)
    n = _n_layers(params)
    for i in range(n):
        pre = h @ params[f"mlp.w{i}"] + params[f"mlp.b{i}"]
        h = output_activation(pre) if i == n - 1 else act(pre)
    return h


def mlp_forward_shift(encoded, intensities, params, latent: Tensor, activation: Callable | None = None,
                      output_activation: Callable = ad.tanh, modulate_output: bool = False) -> Tensor:
    """l_{i+1} = act(l_i w_i + b_i + beta_i(x)); hidden layers shifted, tanh head."""
    act = activation or _leaky(0.2)
    h = build_input(encoded, intensities)
    n = _n_layers(params)
    widths = [params[f"mlp.b{i}"].shape[0] for i in range(n)]
    plan = {s.layer: s for s in latent_layout(widths, ConditioningMode.SHIFT, h.shape[1], modulate_output)}
    for i in range(n):
        pre = h @ params[f"mlp.w{i}"] + params[f"mlp.b{i}"]
        if i in plan:
            pre = pre + _latent_part(latent, plan[i])
        h = output_activation(pre) if i == n - 1 else act(pre)
    return h


def mlp_forward_film(encoded, intensities, params, latent: Tensor, activation: Callable | None = None,
                     output_activation: Callable = ad.tanh, modulate_output: bool = False) -> Tensor:
    """l_{i+1} = alpha_i(x) * act(l_i w_i + b_i) + beta_i(x) on modulated layers.

    ``latent`` carries alpha and beta directly, alpha first within each layer.
    """
    act = activation or _leaky(0.2)
    h = build_input(encoded, intensities)
    n = _n_layers(params)
    widths = [params[f"mlp.b{i}"].shape[0] for i in range(n)]
    plan: dict[int, dict[str, LatentSlice]] = {}
    for s in latent_layout(widths, ConditioningMode.FILM, h.shape[1], modulate_output):
        plan.setdefault(s.layer, {})[s.kind] = s
    for i in range(n):
        pre = h @ params[f"mlp.w{i}"] + params[f"mlp.b{i}"]
        h = output_activation(pre) if i == n - 1 else act(pre)
        if i in plan:
            h = _latent_part(latent, plan[i]["alpha"]) * h + _latent_part(latent, plan[i]["beta"])
    return h


def mlp_forward_hyper(encoded, intensities, latent: Tensor, widths, activation: Callable | None = None,
                      output_activation: Callable = ad.tanh) -> Tensor:
    """Per-pixel MLP whose every weight and bias is read from ``latent``."""
    act = activation or _leaky(0.2)
    h = build_input(encoded, intensities)
    widths = [int(w) for w in widths]
    plan = latent_layout(widths, ConditioningMode.FULL, h.shape[1])
    p = h.shape[0]
    n = len(widths)
    for i in range(n):
        w_sl, b_sl = plan[2 * i], plan[2 * i + 1]
        w = ad.reshape(_latent_part(latent, w_sl), (p,) + w_sl.shape)
        pre = ad.pixel_matvec(w, h) + _latent_part(latent, b_sl)
        h = output_activation(pre) if i == n - 1 else act(pre)
    return h


# -- the generator --------------------------------------------------------------


@dataclass
class GeneratorParams:
    """Hypernetwork H plus the shared MLP, and the configuration tying them together."""

    field: FieldConfig
    hyper: HypernetConfig
    params: dict[str, Tensor]

    @property
    def mode(self) -> ConditioningMode:
        return self.field.mode

    def parameters(self) -> dict[str, Tensor]:
        return self.params


def identity_latent(cfg: FieldConfig, rng: np.random.Generator) -> np.ndarray:
    """Latent value at which the field starts; the projection bias is set to it.

    Shift and FiLM start at the zero code (no modulation). The full
    hypernetwork has no shared weights, so it starts from a freshly
    initialized MLP written into the code.
    """
    if cfg.mode is not ConditioningMode.FULL:
        return np.zeros(cfg.latent_channels, np.float32)
    base = init_mlp(cfg, rng)
    parts = []
    for i in range(len(cfg.widths)):
        parts.append(base[f"mlp.w{i}"].data.T.ravel())  # stored as (out, in) per pixel
        parts.append(base[f"mlp.b{i}"].data)
    return np.concatenate(parts).astype(np.float32)


def init_generator(field_cfg: FieldConfig = FieldConfig(), hyper_cfg: HypernetConfig = HypernetConfig(),
                   seed: int = 0) -> GeneratorParams:
    rng = np.random.default_rng(seed)
    params: dict[str, Tensor] = {}
    if field_cfg.mode is not ConditioningMode.FULL:
        params.update(init_mlp(field_cfg, rng))
    bias = identity_latent(field_cfg, rng)
    params.update(init_hypernet(hyper_cfg, field_cfg.n_source, field_cfg.latent_channels, rng, proj_bias=bias))
    return GeneratorParams(field_cfg, hyper_cfg, params)


_ENC_CACHE: dict[tuple, np.ndarray] = {}


def encoded_grid(height: int, width: int, enc: EncodingConfig, window=None) -> np.ndarray:
    """Encoded pixel coordinates; ``window`` = (top, left, full_h, full_w) places a crop in its image."""
    key = (height, width, enc, None if window is None else tuple(int(v) for v in window))
    if key not in _ENC_CACHE:
        if len(_ENC_CACHE) > 4096:
            _ENC_CACHE.clear()
        grid = make_coord_grid(height, width) if window is None else window_coord_grid(
            window[0], window[1], height, width, window[2], window[3])
        _ENC_CACHE[key] = positional_encoding(grid, enc).astype(np.float32)
    return _ENC_CACHE[key]


def generator_forward(source, gen: GeneratorParams, windows=None) -> tuple[Tensor, Tensor]:
    """Run H and the field over a (B, N_s, H, W) source batch.

    ``windows`` optionally gives one (top, left, full_h, full_w) per sample
    for crops, so coordinates are taken in the full image frame.

    Returns the (B, N_t, H, W) translated images and the (B*H*W, C) latent
    (rows in batch, y, x order).
    """
    src = source if isinstance(source, Tensor) else Tensor(np.asarray(source, np.float32))
    if src.ndim == 3:
        src = Tensor(src.data[None])
    b, ns, h, w = src.shape
    cfg = gen.field
    if ns != cfg.n_source:
        raise ValueError(f"source has {ns} channels, generator expects {cfg.n_source}")
    latent = hypernet_forward_pixels(src, gen.params, gen.hyper)
    if windows is None:
        enc = encoded_grid(h, w, cfg.encoding)
        enc = np.tile(enc, (b, 1)) if b > 1 else enc
    else:
        if len(windows) != b:
            raise ValueError(f"got {len(windows)} crop windows for a batch of {b}")
        enc = np.concatenate([encoded_grid(h, w, cfg.encoding, win) for win in windows], axis=0)
    intens = src.data.transpose(0, 2, 3, 1).reshape(b * h * w, ns) if cfg.use_intensity else None
    act = _leaky(cfg.slope)
    if cfg.mode is ConditioningMode.SHIFT:
        out = mlp_forward_shift(enc, intens, gen.params, latent, activation=act)
    elif cfg.mode is ConditioningMode.FILM:
        alpha_beta = _film_latent(latent, cfg)
        out = mlp_forward_film(enc, intens, gen.params, alpha_beta, activation=act)
    else:
        out = mlp_forward_hyper(enc, intens, latent, cfg.widths, activation=act)
    out = ad.transpose(ad.reshape(out, (b, h, w, cfg.n_target)), (0, 3, 1, 2))
    return out, latent


def _film_latent(latent: Tensor, cfg: FieldConfig) -> Tensor:
    """alpha = 1 + z_alpha so the zero code is the identity modulation."""
    offset = np.zeros(latent.shape[1], dtype=latent.dtype)
    for s in latent_layout(cfg.widths, ConditioningMode.FILM, cfg.input_dim):
        if s.kind == "alpha":
            offset[s.start:s.stop] = 1.0
    return latent + offset


def translate(source, gen: GeneratorParams) -> np.ndarray:
    """Translate a (N_s, H, W) stack or (B, N_s, H, W) batch into target images in [-1, 1]."""
    arr = np.asarray(source, dtype=np.float32)
    single = arr.ndim == 3
    with no_grad():
        out, _ = generator_forward(arr[None] if single else arr, gen)
    return out.data[0] if single else out.data


def with_mode(cfg: FieldConfig, **changes) -> FieldConfig:
    return replace(cfg, **changes)
