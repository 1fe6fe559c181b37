"""Image-quality metrics and paired significance testing.

Images passed to :func:`psnr` and :func:`ssim` are expected in [0, 1];
use :func:`to_unit_range` on generator outputs first.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.stats import rankdata

PSNR_SENTINEL = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def to_unit_range(image) -> np.ndarray:
    """Map [-1, 1] to [0, 1]."""
    return (np.asarray(image, dtype=np.float64) + 1.0) / 2.0


def _check_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b, with_flag: bool = False):
    """PSNR in dB for [0, 1] images; identical inputs give ``PSNR_SENTINEL``.

    With ``with_flag=True`` returns ``(db, exact_match)``.
    """
    a, b = _check_pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    exact = mse == 0.0
    db = PSNR_SENTINEL if exact else min(10.0 * math.log10(1.0 / mse), PSNR_SENTINEL)
    return (db, exact) if with_flag else db


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    g /= g.sum()
    return np.outer(g, g)


def _filter_valid(img: np.ndarray, win: np.ndarray) -> np.ndarray:
    views = sliding_window_view(img, win.shape)
    return np.einsum("ijkl,kl->ij", views, win)


def ssim_map(a, b, data_range: float = 1.0) -> np.ndarray:
    """Local SSIM over every fully-contained 11x11 Gaussian window of a 2D image pair."""
    a, b = _check_pair(a, b)
    if a.ndim != 2:
        raise ValueError(f"ssim_map expects 2D images, got shape {a.shape}")
    if a.shape[0] < SSIM_WINDOW or a.shape[1] < SSIM_WINDOW:
        raise ValueError(f"image {a.shape} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    win = gaussian_window()
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mu_a = _filter_valid(a, win)
    mu_b = _filter_valid(b, win)
    saa = _filter_valid(a * a, win) - mu_a * mu_a
    sbb = _filter_valid(b * b, win) - mu_b * mu_b
    sab = _filter_valid(a * b, win) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * sab + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (saa + sbb + c2)
    return num / den


def ssim(a, b) -> float:
    """Mean local SSIM; stacks of shape (C, H, W) average over channels."""
    a, b = _check_pair(a, b)
    if a.ndim == 3:
        return float(np.mean([ssim_map(x, y).mean() for x, y in zip(a, b)]))
    return float(ssim_map(a, b).mean())


def crop_to_bbox(image, mask) -> np.ndarray:
    """Crop the trailing two axes of ``image`` to the tight bounding box of ``mask > 0``."""
    m = np.asarray(mask) > 0
    if not m.any():
        raise ValueError("mask is empty; cannot compute a bounding box")
    rows = np.flatnonzero(m.any(axis=1))
    cols = np.flatnonzero(m.any(axis=0))
    img = np.asarray(image)
    return img[..., rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1]


# -- Wilcoxon signed-rank -------------------------------------------------------


class DegenerateTestError(ValueError):
    pass


class WilcoxonResult(NamedTuple):
    statistic: float  # min(W+, W-)
    pvalue: float
    w_plus: float
    w_minus: float
    n: int
    method: str


def _exact_upper_lower(ranks2: np.ndarray, w2: int) -> tuple[float, float]:
    """P(W+ <= w) and P(W+ >= w) under random signs, on doubled (integer) ranks."""
    total = int(ranks2.sum())
    counts = np.zeros(total + 1, dtype=object)
    counts[0] = 1
    for r in ranks2:
        r = int(r)
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:total + 1 - r]
        counts = counts + shifted
    n_pat = 2 ** len(ranks2)
    lower = int(sum(counts[: w2 + 1]))
    upper = int(sum(counts[w2:]))
    return lower / n_pat, upper / n_pat


def wilcoxon_signed_rank(paired_a, paired_b, exact_max_n: int = 12) -> WilcoxonResult:
    """Two-sided Wilcoxon signed-rank test on paired samples.

    Zero differences are dropped. Exact sign enumeration is used for
    n <= ``exact_max_n``, otherwise the normal approximation with tie
    correction (no continuity correction).
    """
    a = np.asarray(paired_a, dtype=np.float64)
    b = np.asarray(paired_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"paired samples must be 1-D with equal length, got {a.shape} and {b.shape}")
    d = a - b
    d = d[d != 0]
    n = d.size
    if n == 0:
        raise DegenerateTestError("all paired differences are zero")
    if n < 5:
        raise ValueError(f"need at least 5 non-zero differences, got {n}")
    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    stat = min(w_plus, w_minus)
    if n <= exact_max_n:
        ranks2 = np.rint(2 * ranks).astype(np.int64)
        lo, hi = _exact_upper_lower(ranks2, int(round(2 * w_plus)))
        p = min(1.0, 2.0 * min(lo, hi))
        return WilcoxonResult(stat, p, w_plus, w_minus, n, "exact")
    mean = n * (n + 1) / 4.0
    _, t = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(t ** 3 - t)) / 48.0
    z = (w_plus - mean) / math.sqrt(var)
    p = math.erfc(abs(z) / math.sqrt(2.0))
    return WilcoxonResult(stat, min(1.0, p), w_plus, w_minus, n, "normal")


# -- reports --------------------------------------------------------------------


@dataclass
class MetricRow:
    image_id: int
    psnr_db: float
    ssim: float
    cropped_psnr_db: float = float("nan")
    cropped_ssim: float = float("nan")


@dataclass
class MetricReport:
    rows: list[MetricRow] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=np.float64)

    def summary(self) -> dict[str, tuple[float, float]]:
        out = {}
        for name in ("psnr_db", "ssim", "cropped_psnr_db", "cropped_ssim"):
            col = self.column(name)
            col = col[np.isfinite(col)]
            out[name] = (float(col.mean()), float(col.std())) if col.size else (float("nan"), float("nan"))
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["image_id", "psnr_db", "ssim", "cropped_psnr_db", "cropped_ssim"])
            for r in self.rows:
                w.writerow([r.image_id, repr(r.psnr_db), repr(r.ssim), repr(r.cropped_psnr_db), repr(r.cropped_ssim)])


def evaluate_pair(image_id: int, pred, real, mask=None, min_crop: int = SSIM_WINDOW) -> MetricRow:
    """Metrics for one prediction in [-1, 1] against its reference.

    The cropped variant uses the lesion bounding box; boxes smaller than
    the SSIM window are grown symmetrically to ``min_crop`` pixels.
    """
    p = to_unit_range(pred)
    r = to_unit_range(real)
    row = MetricRow(image_id, psnr(p, r), ssim(p, r))
    if mask is not None and np.any(np.asarray(mask) > 0):
        m = _grow_mask_box(np.asarray(mask) > 0, min_crop)
        pc, rc = crop_to_bbox(p, m), crop_to_bbox(r, m)
        row.cropped_psnr_db = psnr(pc, rc)
        row.cropped_ssim = ssim(pc, rc)
    return row


def _grow_mask_box(mask: np.ndarray, min_size: int) -> np.ndarray:
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    h, w = mask.shape
    bounds = []
    for lo, hi, n in ((rows[0], rows[-1], h), (cols[0], cols[-1], w)):
        size = hi - lo + 1
        if size < min_size:
            grow = min_size - size
            lo = max(0, lo - grow // 2)
            hi = min(n - 1, lo + min_size - 1)
            lo = max(0, hi - min_size + 1)
        bounds.append((lo, hi))
    box = np.zeros_like(mask)
    box[bounds[0][0]:bounds[0][1] + 1, bounds[1][0]:bounds[1][1] + 1] = True
    return box
