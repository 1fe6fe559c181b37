"""Scaled-down experiments: single-pair overfit, spectral bias, ablation grid."""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Adam, Tensor
from .data import DatasetSpec, PairedSample, generate_phantom, generate_split
from .encoding import EncodingConfig, make_coord_grid, positional_encoding
from .field import FieldConfig, GeneratorParams, generated_param_count, init_mlp, translate, unconditioned_forward
from .metrics import MetricReport, evaluate_pair, psnr, to_unit_range
from .spectral import SpectrumProfile, high_band_gap, spectrum_profile
from .train import TrainConfig, TrainResult, build_models, train


def evaluate_generator(gen: GeneratorParams, samples: list[PairedSample], batch: int = 8) -> MetricReport:
    """Translate every sample at full resolution and score it against its target."""
    report = MetricReport()
    for i in range(0, len(samples), batch):
        chunk = samples[i:i + batch]
        preds = translate(np.stack([s.source for s in chunk]), gen)
        for s, p in zip(chunk, preds):
            report.rows.append(evaluate_pair(s.index, p, s.target, s.mask))
    return report


def predictions(gen: GeneratorParams, samples: list[PairedSample], batch: int = 8) -> list[np.ndarray]:
    out = []
    for i in range(0, len(samples), batch):
        out.extend(translate(np.stack([s.source for s in samples[i:i + batch]]), gen))
    return out


# -- single-pair overfit --------------------------------------------------------


@dataclass
class OverfitResult:
    psnr_db: float
    steps: int
    seconds: float
    curve: list[tuple[int, float]]


def overfit_config(**changes) -> TrainConfig:
    base = dict(steps=2000, lr_g=1e-3, lambda_adv=0.0, lambda_fm=0.0, decay_start=2000, decay_end=2000)
    base.update(changes)
    return TrainConfig(**base)


def run_overfit(cfg: TrainConfig | None = None, sample: PairedSample | None = None, target_db: float = 35.0,
                check_every: int = 50) -> OverfitResult:
    """Fit one pair with the reconstruction and regularization terms only.

    Stops at the first check where PSNR reaches ``target_db``.
    """
    cfg = cfg or overfit_config()
    sample = sample or generate_phantom(dataclasses.replace(DatasetSpec().phantom, size=cfg.crop_h), 0)
    gen, disc = build_models(cfg, sample.source.shape[0], sample.target.shape[0])
    curve: list[tuple[int, float]] = []

    def check(rec):
        if (rec.step + 1) % check_every:
            return False
        db = psnr(to_unit_range(translate(sample.source, gen)), to_unit_range(sample.target))
        curve.append((rec.step + 1, db))
        return db >= target_db

    res = train([sample], gen, disc, cfg, on_step=check)
    db = curve[-1][1] if curve else float("nan")
    return OverfitResult(db, len(res.history), res.seconds, curve)


# -- spectral bias --------------------------------------------------------------


def sinusoid_image(size: int, cycles_y: float, cycles_x: float, amplitude: float = 0.8) -> np.ndarray:
    grid = make_coord_grid(size, size)
    y, x = grid.coords[:, 0], grid.coords[:, 1]
    img = amplitude * np.sin(np.pi * (cycles_y * y + cycles_x * x))
    return img.reshape(size, size)


@dataclass
class FitResult:
    mse: float
    curve: list[float]
    seconds: float


def fit_coordinate_mlp(image: np.ndarray, encoding: EncodingConfig, steps: int = 1000, lr: float = 1e-3,
                       hidden=(64, 64, 64, 64), seed: int = 0) -> FitResult:
    """Fit a bare (unconditioned) coordinate MLP to one image with full-batch Adam."""
    h, w = image.shape
    feats = positional_encoding(make_coord_grid(h, w), encoding).astype(np.float32)
    cfg = FieldConfig(hidden=tuple(hidden), n_source=1, n_target=1, use_intensity=False, encoding=encoding)
    params = init_mlp(cfg, np.random.default_rng(seed))
    opt = Adam(params, lr, betas=(0.9, 0.999))
    target = Tensor(image.reshape(-1, 1).astype(np.float32))
    curve = []
    t0 = time.perf_counter()
    for _ in range(steps):
        opt.zero_grad()
        out = unconditioned_forward(feats, None, params)
        loss = ad.mean(ad.square(out - target))
        curve.append(float(loss.item()))
        ad.backward(loss)
        opt.step()
    with ad.no_grad():
        out = unconditioned_forward(feats, None, params)
    mse = float(np.mean((out.data.reshape(h, w).astype(np.float64) - image) ** 2))
    return FitResult(mse, curve, time.perf_counter() - t0)


@dataclass
class SpectralBiasResult:
    low_raw: float
    high_raw: float
    low_encoded: float
    high_encoded: float
    seconds: float

    @property
    def gap_raw(self) -> float:
        return self.high_raw - self.low_raw

    @property
    def gap_encoded(self) -> float:
        return self.high_encoded - self.low_encoded

    @property
    def high_ratio(self) -> float:
        return self.high_raw / max(self.high_encoded, 1e-30)


def run_spectral_bias(size: int = 64, low_cycles=(1.0, 1.0), high_cycles=(12.0, 10.0), steps: int = 1000,
                      m: int = 6, seed: int = 0) -> SpectralBiasResult:
    """Bare vs encoded coordinate MLPs on a low- and a high-frequency sinusoid, equal steps each."""
    t0 = time.perf_counter()
    low = sinusoid_image(size, *low_cycles)
    high = sinusoid_image(size, *high_cycles)
    raw = EncodingConfig(m=m, enabled=False)
    enc = EncodingConfig(m=m)
    r = [fit_coordinate_mlp(img, e, steps=steps, seed=seed).mse
         for e in (raw, enc) for img in (low, high)]
    return SpectralBiasResult(r[0], r[1], r[2], r[3], time.perf_counter() - t0)


# -- ablation grid --------------------------------------------------------------


@dataclass
class AblationRun:
    name: str
    shift: bool
    intensity: bool
    encoding: bool
    n_generated: int
    psnr_db: float
    ssim: float
    diverged: bool
    steps_done: int
    seconds: float
    report: MetricReport = field(repr=False, default_factory=MetricReport)
    profile: SpectrumProfile | None = field(repr=False, default=None)
    history: list = field(repr=False, default_factory=list)


def ablation_base_config(**changes) -> TrainConfig:
    """Shared training recipe for every ablation row."""
    base = dict(steps=1200, crop_h=32, crop_w=32, batch_size=1, lr_g=2e-3, lr_d=5e-4)
    base.update(changes)
    return TrainConfig(**base)


ABLATION_GRID = (
    ("shift+intensity", True, True),
    ("shift", True, False),
    ("full+intensity", False, True),
    ("full", False, False),
)


def run_ablation(name: str, cfg: TrainConfig, train_set: list[PairedSample], val_set: list[PairedSample]) -> AblationRun:
    ns, nt = train_set[0].source.shape[0], train_set[0].target.shape[0]
    gen, disc = build_models(cfg, ns, nt)
    res: TrainResult = train(train_set, gen, disc, cfg, raise_on_divergence=False)
    fcfg = gen.field
    report = evaluate_generator(gen, val_set)
    preds = predictions(gen, val_set)
    profile = spectrum_profile([p[0] for p in preds])
    summ = report.summary()
    return AblationRun(name, fcfg.mode.value == "shift", fcfg.use_intensity, fcfg.encoding.enabled,
                       generated_param_count(fcfg.widths, fcfg.mode, fcfg.input_dim),
                       summ["psnr_db"][0], summ["ssim"][0], res.diverged is not None, len(res.history),
                       res.seconds, report, profile, res.history)


def ablation_datasets(spec: DatasetSpec = DatasetSpec()):
    return generate_split(spec, "train"), generate_split(spec, "val")


def run_ablation_grid(base: TrainConfig | None = None, spec: DatasetSpec = DatasetSpec(),
                      include_no_encoding: bool = False, datasets=None) -> list[AblationRun]:
    base = base or ablation_base_config()
    train_set, val_set = datasets or ablation_datasets(spec)
    runs = []
    for name, shift, intensity in ABLATION_GRID:
        cfg = dataclasses.replace(base, mode="shift" if shift else "full", use_intensity=intensity)
        runs.append(run_ablation(name, cfg, train_set, val_set))
    if include_no_encoding:
        cfg = dataclasses.replace(base, mode="shift", use_intensity=True, encoding=False)
        runs.append(run_ablation("shift+intensity-noPE", cfg, train_set, val_set))
    return runs


def target_profile(samples: list[PairedSample]) -> SpectrumProfile:
    return spectrum_profile([s.target[0] for s in samples])


def spectral_gap(run: AblationRun, reference: SpectrumProfile) -> float:
    return high_band_gap(run.profile, reference)


def format_ablation_table(runs: list[AblationRun]) -> list[list[str]]:
    rows = [["shift", "intensity", "#param_generated", "psnr", "ssim"]]
    for r in runs:
        rows.append([str(int(r.shift)), str(int(r.intensity)), str(r.n_generated), repr(r.psnr_db), repr(r.ssim)])
    return rows
