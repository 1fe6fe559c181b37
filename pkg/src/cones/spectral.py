"""Fourier spectra and their 1D radial profiles.

Radial profiles sum the spectrum magnitude over annuli of integer radius
round(r) = k around the DC bin, for k = 0 .. M/2 - 1, then apply log(1 + .).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .kernels import annulus_sum


def fft2d(image) -> np.ndarray:
    """Unnormalized forward 2D DFT over the trailing two axes."""
    return np.fft.fft2(np.asarray(image, dtype=np.float64))


def center_crop_square(image) -> np.ndarray:
    """Largest centered square of the trailing two axes."""
    img = np.asarray(image)
    h, w = img.shape[-2:]
    m = min(h, w)
    top, left = (h - m) // 2, (w - m) // 2
    return img[..., top:top + m, left:left + m]


def radial_bins(m: int) -> np.ndarray:
    """Integer radius ``floor(r + 0.5)`` of every bin of a DC-centered M x M spectrum."""
    c = m // 2
    idx = np.arange(m) - c
    r = np.sqrt(idx[:, None] ** 2 + idx[None, :] ** 2)
    return np.floor(r + 0.5).astype(np.int64)


def n_radial_bins(m: int) -> int:
    return m // 2


def azimuthal_integration(spectrum, log: bool = True) -> np.ndarray:
    """Annulus sums of ``|spectrum|`` for a square, DC-centered spectrum.

    Returns ``log1p`` of the sums unless ``log=False``.
    """
    s = np.asarray(spectrum)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError(f"azimuthal integration needs a square 2D spectrum, got shape {s.shape}")
    m = s.shape[0]
    sums = annulus_sum(np.abs(s), radial_bins(m), n_radial_bins(m))
    return np.log1p(sums) if log else sums


def image_profile(image, log: bool = True) -> np.ndarray:
    """Radial profile of one 2D image (non-square inputs are center-cropped)."""
    img = center_crop_square(np.asarray(image, dtype=np.float64))
    if img.ndim != 2:
        raise ValueError(f"image_profile expects a 2D image, got shape {img.shape}")
    return azimuthal_integration(np.fft.fftshift(fft2d(img)), log=log)


@dataclass
class SpectrumProfile:
    omega: np.ndarray  # integer radial frequency k
    mean_log_magnitude: np.ndarray
    n_images: int

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["omega_k", "mean_log_magnitude"])
            for k, v in zip(self.omega, self.mean_log_magnitude):
                w.writerow([int(k), repr(float(v))])


def spectrum_profile(images) -> SpectrumProfile:
    """Mean of per-image log radial profiles over a dataset of equal-size 2D images."""
    images = [np.asarray(im) for im in images]
    if not images:
        raise ValueError("spectrum_profile needs at least one image")
    shape = images[0].shape
    for im in images:
        if im.shape != shape:
            raise ValueError(f"mixed image sizes in dataset: {shape} vs {im.shape}")
    total = None
    for im in images:  # fixed sequential reduction order
        p = image_profile(im)
        total = p if total is None else total + p
    mean = total / len(images)
    return SpectrumProfile(np.arange(mean.size), mean, len(images))


def read_profile_csv(path) -> SpectrumProfile:
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    omega = np.array([int(r["omega_k"]) for r in rows])
    vals = np.array([float(r["mean_log_magnitude"]) for r in rows])
    return SpectrumProfile(omega, vals, -1)


def high_band_gap(profile: SpectrumProfile, reference: SpectrumProfile, quantile: float = 0.75) -> float:
    """Mean absolute log-magnitude gap over the bins with k >= quantile * n_bins."""
    a, b = profile.mean_log_magnitude, reference.mean_log_magnitude
    if a.shape != b.shape:
        raise ValueError(f"profiles have different bin counts: {a.size} vs {b.size}")
    start = int(np.ceil(quantile * a.size))
    return float(np.mean(np.abs(a[start:] - b[start:])))


def plot_profiles(profiles: dict[str, SpectrumProfile], path) -> None:
    """Line plot of several profiles to a PNG (needs matplotlib)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.5))
    for name, prof in profiles.items():
        ax.plot(prof.omega, prof.mean_log_magnitude, label=name)
    ax.set_xlabel("radial frequency k")
    ax.set_ylabel("mean log(1 + |F|)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
