"""End-to-end acceptance checks; each prints one PASS/FAIL line.

The ablation grid trains five models and dominates the runtime of the
suite (tens of minutes on one core).
"""

import itertools
import math
import os
import time

import numpy as np
import pytest

from cones.cli import main
from cones.data import DatasetSpec
from cones.encoding import EncodingConfig
from cones.experiments import (
    ablation_base_config,
    ablation_datasets,
    fit_coordinate_mlp,
    run_ablation_grid,
    run_overfit,
    sinusoid_image,
    spectral_gap,
    target_profile,
)
from cones.field import FieldConfig, generated_param_count
from cones.gradcheck import run_gradcheck
from cones.metrics import psnr, ssim, wilcoxon_signed_rank
from cones.spectral import azimuthal_integration, fft2d, image_profile

SHIFT_COUNT = 256
FULL_COUNT = 14337


@pytest.fixture
def report(capsys):
    def _report(n, ok, detail):
        with capsys.disabled():
            print(f"\n[acceptance {n}] {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail

    return _report


# -- 1 ------------------------------------------------------------------------------


def test_criterion_1_gradient_correctness(report):
    rep = run_gradcheck(n_configs=100, seed=0, eps=1e-3, tol=1e-4)
    ok = rep.passed and len(rep.results) >= 100 and rep.max_error <= 1e-4 and rep.seconds < 60
    report(1, ok, f"{len(rep.results)} configs over {len(rep.by_op())} ops, max rel err {rep.max_error:.2e}, "
                  f"{rep.seconds:.1f}s")


# -- 2 ------------------------------------------------------------------------------


def test_criterion_2_parameter_counts(report):
    cfg = FieldConfig()  # five 64-wide layers (4 hidden + output), m=6, d=2, N_s=3, N_t=1, intensities
    shift = generated_param_count(cfg.widths, "shift", cfg.input_dim)
    full = generated_param_count(cfg.widths, "full", cfg.input_dim)
    ok = shift == SHIFT_COUNT and full == FULL_COUNT and 14_000 <= full <= 15_000
    report(2, ok, f"shift={shift}, full={full}")


# -- 3 ------------------------------------------------------------------------------


def test_criterion_3_overfit(report):
    t0 = time.perf_counter()
    res = run_overfit()
    wall = time.perf_counter() - t0
    ok = res.psnr_db >= 35.0 and res.steps <= 2000 and wall < 300
    report(3, ok, f"{res.psnr_db:.2f} dB after {res.steps} steps, {wall:.1f}s")


# -- 4 ------------------------------------------------------------------------------


def test_criterion_4_spectral_bias(report):
    high = sinusoid_image(64, 12.0, 10.0)
    low = sinusoid_image(64, 1.0, 1.0)
    raw, enc = EncodingConfig(enabled=False), EncodingConfig(m=6)
    fr, fe = fit_coordinate_mlp(high, raw, steps=1000), fit_coordinate_mlp(high, enc, steps=1000)
    lr_, le = fit_coordinate_mlp(low, raw, steps=1000), fit_coordinate_mlp(low, enc, steps=1000)
    ratio = fr.mse / fe.mse
    gap_raw, gap_enc = fr.mse - lr_.mse, fe.mse - le.mse
    ok = ratio >= 5 and fr.seconds < 120 and fe.seconds < 120 and gap_raw > 0 and abs(gap_enc) * 5 <= gap_raw
    report(4, ok, f"high-freq MSE raw {fr.mse:.3e} vs encoded {fe.mse:.3e} ({ratio:.0f}x), "
                  f"band gap raw {gap_raw:.3e} vs encoded {gap_enc:.3e}, {fr.seconds:.0f}s/{fe.seconds:.0f}s")


# -- 5 ------------------------------------------------------------------------------


def _brute_profile(mag):
    m = mag.shape[0]
    c = m // 2
    sums = [0.0] * (m // 2)
    for y in range(m):
        for x in range(m):
            k = int(math.floor(math.sqrt((y - c) ** 2 + (x - c) ** 2) + 0.5))
            if k < m // 2:
                sums[k] += float(mag[y, x])
    return np.log1p(np.array(sums))


def test_criterion_5_azimuthal_oracle(report):
    exact = 0
    for seed in range(20):
        spec = np.fft.fftshift(fft2d(np.random.default_rng(seed).uniform(-1, 1, (64, 64))))
        exact += np.array_equal(azimuthal_integration(spec), _brute_profile(np.abs(spec)))
    const = image_profile(np.full((64, 64), 0.3))
    ok = exact == 20 and np.all(const[1:] == 0)
    report(5, ok, f"{exact}/20 images bit-identical to brute force; constant image max k>0 = {np.max(const[1:])}")


# -- 6 ------------------------------------------------------------------------------


def _ssim_oracle(a, b):
    g = [math.exp(-((i - 5) ** 2) / 4.5) for i in range(11)]
    s = sum(g)
    w = [[gi * gj / (s * s) for gj in g] for gi in g]
    vals = []
    for y in range(a.shape[0] - 10):
        for x in range(a.shape[1] - 10):
            pa = a[y:y + 11, x:x + 11]
            pb = b[y:y + 11, x:x + 11]
            ma = sum(w[i][j] * pa[i, j] for i in range(11) for j in range(11))
            mb = sum(w[i][j] * pb[i, j] for i in range(11) for j in range(11))
            va = sum(w[i][j] * (pa[i, j] - ma) ** 2 for i in range(11) for j in range(11))
            vb = sum(w[i][j] * (pb[i, j] - mb) ** 2 for i in range(11) for j in range(11))
            cv = sum(w[i][j] * (pa[i, j] - ma) * (pb[i, j] - mb) for i in range(11) for j in range(11))
            vals.append((2 * ma * mb + 1e-4) * (2 * cv + 9e-4) / ((ma * ma + mb * mb + 1e-4) * (va + vb + 9e-4)))
    return sum(vals) / len(vals)


def _enumerated_p(d):
    from scipy.stats import rankdata

    d = d[d != 0]
    r = rankdata(np.abs(d))
    obs = r[d > 0].sum()
    stats = np.array([np.dot(r, s) for s in itertools.product((0, 1), repeat=len(r))])
    return min(1.0, 2 * min(np.mean(stats <= obs + 1e-9), np.mean(stats >= obs - 1e-9)))


def test_criterion_6_metric_oracles(report):
    rng = np.random.default_rng(0)
    a = rng.random((32, 32))
    b = np.clip(a + 0.15 * rng.standard_normal((32, 32)), 0, 1)
    ssim_err = abs(ssim(a, b) - _ssim_oracle(a, b))
    z = np.zeros((8, 8))
    psnr_err = max(abs(psnr(z, z + 0.1) - 20.0), abs(psnr(z, z + 1.0) - 0.0), abs(psnr(z, z + 0.01) - 40.0))
    wil_ok = 0
    cases = [(n, s) for n in range(5, 13) for s in range(3)]
    for n, s in cases:
        r = np.random.default_rng(100 * n + s)
        x, y = r.normal(size=n), r.normal(size=n) + 0.4
        wil_ok += wilcoxon_signed_rank(x, y).pvalue == _enumerated_p(x - y)
    ok = ssim_err <= 1e-8 and psnr_err <= 1e-9 and wil_ok == len(cases)
    report(6, ok, f"SSIM err {ssim_err:.1e}, PSNR err {psnr_err:.1e}, Wilcoxon exact {wil_ok}/{len(cases)}")


# -- 7, 8 -----------------------------------------------------------------------------


@pytest.fixture(scope="module")
def ablation():
    spec = DatasetSpec()  # 200 train / 40 val, 64x64, seed 0
    datasets = ablation_datasets(spec)
    runs = run_ablation_grid(ablation_base_config(), spec, include_no_encoding=True, datasets=datasets)
    return {r.name: r for r in runs}, target_profile(datasets[1])


def test_criterion_7_ablation_ordering(report, ablation):
    runs, _ = ablation
    grid = [runs[k] for k in ("shift+intensity", "shift", "full+intensity", "full")]
    best = grid[0]
    margin_ok = all(best.ssim >= r.ssim - 0.005 for r in grid[1:])
    shift_stable = not any(r.diverged for r in grid if r.shift)
    budget_ok = all(r.seconds <= 1800 for r in grid)
    rows = ", ".join(f"{r.name} {r.ssim:.4f}/{r.psnr_db:.2f}dB{' (diverged)' if r.diverged else ''} "
                     f"[{r.seconds:.0f}s]" for r in grid)
    report(7, margin_ok and shift_stable and budget_ok, f"SSIM/PSNR: {rows}")


def test_criterion_8_spectral_fidelity(report, ablation):
    runs, ref = ablation
    cones_gap = spectral_gap(runs["shift+intensity"], ref)
    nope_gap = spectral_gap(runs["shift+intensity-noPE"], ref)
    report(8, cones_gap <= nope_gap, f"high-band gap {cones_gap:.4f} (encoded) vs {nope_gap:.4f} (no encoding)")


# -- 9 ------------------------------------------------------------------------------


def test_criterion_9_determinism(report, tmp_path, monkeypatch):
    monkeypatch.setenv("CONES_DETERMINISTIC", "1")
    data = tmp_path / "data"
    assert main(["synth-data", "--out", str(data), "--n-train", "4", "--n-val", "4"]) == 0
    cfg = tmp_path / "cfg.txt"
    cfg.write_text("steps=3\nseed=5\n")
    same = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert main(["train", "--data", str(data), "--out", str(out / "train"), "--config", str(cfg)]) == 0
        assert main(["translate", "--checkpoint", str(out / "train" / "checkpoint"), "--input",
                     str(data / "val"), "--out", str(out / "pred")]) == 0
        assert main(["eval", "--pred", str(out / "pred"), "--data", str(data / "val"), "--out",
                     str(out / "eval")]) == 0
        assert main(["spectrum", "--images", str(out / "pred"), "--images", str(data / "val"), "--names",
                     "model", "real", "--out", str(out / "spec")]) == 0
    files = ["train/losses.csv", "eval/metrics.csv", "spec/spectrum_model.csv", "spec/spectrum_real.csv"]
    for f in files:
        same.append(open(tmp_path / "a" / f, "rb").read() == open(tmp_path / "b" / f, "rb").read())
    report(9, all(same), f"{sum(same)}/{len(files)} CSVs bit-identical across reruns")
