"""Alternating adversarial training of the conditional field.

Every iteration runs the generator once, updates the discriminator on the
detached output, then updates the generator through the (just updated)
discriminator with the discriminator parameters frozen.
"""

from __future__ import annotations

import csv
import dataclasses
import math
import os
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Adam, NonFiniteGradientError, Tensor, no_grad
from .data import PairedSample
from .discriminator import DiscriminatorConfig, DiscriminatorParams, discriminate, init_discriminator
from .encoding import EncodingConfig
from .field import ConditioningMode, FieldConfig, GeneratorParams, generator_forward, init_generator
from .hypernet import HypernetConfig, check_divisible
from .losses import (
    LossWeights,
    NonFiniteLossError,
    loss_adversarial_gen,
    loss_discriminator,
    loss_feature_matching,
    loss_latent_reg,
    loss_reconstruction,
    total_generator_loss,
)


class ConfigError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, term: str, value: float):
        super().__init__(f"training diverged at step {step}: {term} = {value!r}")
        self.step = step
        self.term = term
        self.value = value


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_ints(s: str) -> tuple[int, ...]:
    return tuple(int(p) for p in s.replace(" ", "").split(",") if p)


@dataclass
class TrainConfig:
    """Every training knob; keys of the key=value config file are these field names.

    ``decay_start``/``decay_end`` default to half of ``steps`` and ``steps``.
    """

    steps: int = 1000
    lr_g: float = 1e-4
    lr_d: float = 4e-4
    beta1: float = 0.5
    beta2: float = 0.999
    decay_start: int = -1
    decay_end: int = -1
    crop_h: int = 64
    crop_w: int = 64
    batch_size: int = 1
    seed: int = 0
    mode: str = "shift"
    use_intensity: bool = True
    m: int = 6
    encoding: bool = True
    include_raw: bool = False
    hidden: tuple[int, ...] = (64, 64, 64, 64)
    hyper_blocks: tuple[int, ...] = (1, 1, 2, 1)
    hyper_widths: tuple[int, ...] = (16, 32, 64, 64)
    fpn_width: int = 32
    hyper_norm: bool = True
    adv_variant: str = "hinge"
    lambda_rec: float = 100.0
    lambda_adv: float = 1.0
    lambda_fm: float = 10.0
    lambda_reg: float = 10.0
    divergence_limit: float = 1e6
    checkpoint_every: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.steps < 0:
            raise ConfigError("steps must be >= 0")
        if self.lr_g < 0 or self.lr_d < 0:
            raise ConfigError("learning rates must be >= 0")
        if self.crop_h < 1 or self.crop_w < 1 or self.batch_size < 1:
            raise ConfigError("crop sizes and batch_size must be >= 1")
        if self.adv_variant not in ("hinge", "log"):
            raise ConfigError(f"adv_variant must be 'hinge' or 'log', got {self.adv_variant!r}")
        try:
            ConditioningMode(self.mode)
        except ValueError:
            raise ConfigError(f"unknown mode {self.mode!r} (expected shift, film or full)") from None
        start, end = self.decay_bounds()
        if not 0 <= start <= end:
            raise ConfigError(f"need 0 <= decay_start <= decay_end, got {start}, {end}")
        try:
            self.weights()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def decay_bounds(self) -> tuple[int, int]:
        start = self.steps // 2 if self.decay_start < 0 else self.decay_start
        end = self.steps if self.decay_end < 0 else self.decay_end
        return start, end

    def weights(self) -> LossWeights:
        return LossWeights(self.lambda_rec, self.lambda_adv, self.lambda_fm, self.lambda_reg)

    def field_config(self, n_source: int, n_target: int) -> FieldConfig:
        enc = EncodingConfig(m=self.m, include_raw=self.include_raw, enabled=self.encoding)
        return FieldConfig(hidden=self.hidden, n_source=n_source, n_target=n_target, mode=self.mode,
                           use_intensity=self.use_intensity, encoding=enc)

    def hyper_config(self) -> HypernetConfig:
        return HypernetConfig(self.hyper_blocks, self.hyper_widths, self.fpn_width, self.hyper_norm)

    # -- key=value I/O --

    @classmethod
    def field_types(cls) -> dict[str, type]:
        return {f.name: type(f.default) for f in dataclasses.fields(cls)}

    @classmethod
    def parse_value(cls, key: str, raw: str):
        types = cls.field_types()
        if key not in types:
            raise ConfigError(f"unknown config key {key!r}")
        t = types[key]
        try:
            if t is bool:
                return _parse_bool(raw)
            if t is tuple:
                return _parse_ints(raw)
            return t(raw.strip())
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {raw!r} ({exc})") from None

    @classmethod
    def from_pairs(cls, pairs: dict[str, str], base: "TrainConfig | None" = None) -> "TrainConfig":
        values = dataclasses.asdict(base) if base is not None else {}
        for k, v in pairs.items():
            values[k] = cls.parse_value(k, v)
        return cls(**values)

    @classmethod
    def from_file(cls, path, overrides: dict[str, str] | None = None) -> "TrainConfig":
        """File values over defaults, then ``overrides`` (e.g. CLI flags) over the file."""
        return cls.from_pairs({**read_kv_file(path), **(overrides or {})})

    def to_lines(self) -> list[str]:
        out = []
        for k, v in dataclasses.asdict(self).items():
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            out.append(f"{k}={v}")
        return out


def read_kv_file(path) -> dict[str, str]:
    pairs = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            k, v = line.split("=", 1)
            pairs[k.strip()] = v.strip()
    return pairs


def lr_at(step: int, base: float, start: int, end: int) -> float:
    """Constant ``base`` until ``start``, then linear decay to 0 at ``end``; never negative."""
    if step < start:
        return base
    if end <= start:
        return 0.0
    return base * max(0.0, (end - step) / (end - start))


def random_crop(source: np.ndarray, target: np.ndarray, h: int, w: int, rng: np.random.Generator,
                return_window: bool = False):
    """Apply one random (h, w) window to every channel of a co-registered pair.

    With ``return_window=True`` also returns ``(top, left, full_h, full_w)``.
    """
    hs, ws = source.shape[-2:]
    if target.shape[-2:] != (hs, ws):
        raise ValueError(f"source {source.shape} and target {target.shape} are not co-registered")
    if h > hs or w > ws:
        raise ValueError(f"crop {h}x{w} is larger than the image {hs}x{ws}")
    top = int(rng.integers(0, hs - h + 1))
    left = int(rng.integers(0, ws - w + 1))
    win = (Ellipsis, slice(top, top + h), slice(left, left + w))
    if return_window:
        return source[win], target[win], (top, left, hs, ws)
    return source[win], target[win]


@dataclass
class LossRecord:
    step: int
    L_D: float
    L_rec: float
    L_adv: float
    L_fm: float
    L_reg: float
    L_total: float


LOSS_COLUMNS = ("step", "L_D", "L_rec", "L_adv", "L_fm", "L_reg", "L_total")


def write_loss_csv(history: list[LossRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOSS_COLUMNS)
        for r in history:
            w.writerow([r.step] + [repr(getattr(r, c)) for c in LOSS_COLUMNS[1:]])


def weighted_total(rec: float, adv: float, fm: float, reg: float, weights: LossWeights) -> float:
    return weights.rec * rec + weights.adv * adv + weights.fm * fm + weights.reg * reg


@dataclass
class TrainResult:
    gen: GeneratorParams
    disc: DiscriminatorParams
    history: list[LossRecord] = field(default_factory=list)
    diverged: TrainingDiverged | None = None
    seconds: float = 0.0


def build_models(cfg: TrainConfig, n_source: int, n_target: int) -> tuple[GeneratorParams, DiscriminatorParams]:
    gen = init_generator(cfg.field_config(n_source, n_target), cfg.hyper_config(), seed=cfg.seed)
    disc = init_discriminator(n_source + n_target, DiscriminatorConfig(), seed=cfg.seed + 1)
    return gen, disc


def _set_requires_grad(params: dict[str, Tensor], flag: bool) -> None:
    for p in params.values():
        p.requires_grad = flag


def _guard(step: int, name: str, value: float, limit: float) -> None:
    if not math.isfinite(value) or abs(value) > limit:
        raise TrainingDiverged(step, name, value)


class _Sampler:
    """Seeded epoch-wise permutation of the dataset indices."""

    def __init__(self, n: int, rng: np.random.Generator):
        self.n = n
        self.rng = rng
        self.order: list[int] = []

    def next(self) -> int:
        if not self.order:
            self.order = list(self.rng.permutation(self.n))
        return int(self.order.pop(0))


def train(dataset: list[PairedSample], gen: GeneratorParams, disc: DiscriminatorParams, cfg: TrainConfig,
          out_dir=None, on_step: Callable[[LossRecord], None] | None = None,
          raise_on_divergence: bool = True) -> TrainResult:
    """Optimize ``gen`` and ``disc`` in place for ``cfg.steps`` iterations.

    ``on_step`` is called after every iteration; a truthy return value
    stops training early. With ``raise_on_divergence=False`` a tripped
    guard stops training and is reported in ``TrainResult.diverged``
    instead of raised.
    """
    if not dataset:
        raise ValueError("training dataset is empty")
    check_divisible(cfg.crop_h, cfg.crop_w, gen.hyper)
    weights = cfg.weights()
    rng = np.random.default_rng(cfg.seed)
    sampler = _Sampler(len(dataset), rng)
    opt_g = Adam(gen.params, cfg.lr_g, betas=(cfg.beta1, cfg.beta2))
    opt_d = Adam(disc.params, cfg.lr_d, betas=(cfg.beta1, cfg.beta2))
    start, end = cfg.decay_bounds()
    need_d_grad_path = weights.adv > 0 or weights.fm > 0
    result = TrainResult(gen, disc)
    t0 = time.perf_counter()
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)

    try:
        for step in range(cfg.steps):
            srcs, tgts, windows = [], [], []
            for _ in range(cfg.batch_size):
                s = dataset[sampler.next()]
                cs, ct, win = random_crop(s.source, s.target, cfg.crop_h, cfg.crop_w, rng, return_window=True)
                srcs.append(cs)
                tgts.append(ct)
                windows.append(win)
            src = Tensor(np.ascontiguousarray(np.stack(srcs), dtype=np.float32))
            real = Tensor(np.ascontiguousarray(np.stack(tgts), dtype=np.float32))
            opt_g.lr = lr_at(step, cfg.lr_g, start, end)
            opt_d.lr = lr_at(step, cfg.lr_d, start, end)

            fake, latent = generator_forward(src, gen, windows)

            # discriminator update on the detached generator output
            opt_d.zero_grad()
            logits_real, _ = discriminate(real, src, disc)
            logits_fake_d, _ = discriminate(fake.detach(), src, disc)
            l_d = loss_discriminator(logits_real, logits_fake_d)
            _guard(step, "L_D", l_d.item(), cfg.divergence_limit)
            ad.backward(l_d)
            opt_d.step()

            # generator update through the frozen discriminator
            _set_requires_grad(disc.params, False)
            try:
                opt_g.zero_grad()
                with no_grad():
                    _, feats_real = discriminate(real, src, disc)
                if need_d_grad_path:
                    logits_fake, feats_fake = discriminate(fake, src, disc)
                else:
                    with no_grad():
                        logits_fake, feats_fake = discriminate(fake.detach(), src, disc)
                parts = {
                    "rec": loss_reconstruction(fake, real),
                    "adv": loss_adversarial_gen(logits_fake, cfg.adv_variant),
                    "fm": loss_feature_matching(feats_real, feats_fake),
                    "reg": loss_latent_reg(latent),
                }
                values = {k: float(v.item()) for k, v in parts.items()}
                for k, v in values.items():
                    _guard(step, f"L_{k}", v, cfg.divergence_limit)
                if not need_d_grad_path:
                    parts["adv"] = values["adv"]
                    parts["fm"] = values["fm"]
                total = total_generator_loss(parts, weights)
                logged_total = weighted_total(values["rec"], values["adv"], values["fm"], values["reg"], weights)
                _guard(step, "L_total", logged_total, cfg.divergence_limit)
                ad.backward(total)
                opt_g.step()
            finally:
                _set_requires_grad(disc.params, True)

            rec = LossRecord(step, float(l_d.item()), values["rec"], values["adv"], values["fm"], values["reg"],
                             logged_total)
            result.history.append(rec)
            if on_step is not None and on_step(rec):
                break
            if out_dir is not None and cfg.checkpoint_every > 0 and (step + 1) % cfg.checkpoint_every == 0:
                from .checkpoint import save_models

                save_models(os.path.join(out_dir, f"ckpt_{step + 1:06d}"), gen, disc)
    except (NonFiniteLossError, NonFiniteGradientError) as exc:
        div = TrainingDiverged(len(result.history), type(exc).__name__, float("nan"))
        div.__cause__ = exc
        result.diverged = div
    except TrainingDiverged as exc:
        result.diverged = exc
    result.seconds = time.perf_counter() - t0
    if result.diverged is not None and raise_on_divergence:
        raise result.diverged
    return result
