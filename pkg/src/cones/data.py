"""Synthetic paired multi-channel phantoms, normalization and image I/O.

Every sample shares one random "anatomy" across its channels: soft
ellipses carrying two tissue properties, band-limited noise, a fine
texture field and one or more lesions. Each channel renders the anatomy
through its own fixed monotone transfer function, so the channels are
co-registered but never identical. The target channels additionally show
an enhancing lesion rim and a stronger copy of the texture.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy.ndimage import gaussian_filter

from .tensorio import read_tensor, write_tensor


@dataclass(frozen=True)
class PhantomSpec:
    size: int = 64
    n_source: int = 3
    n_target: int = 1
    lesions_min: int = 1
    lesions_max: int = 2
    texture_amplitude: float = 0.06
    seed: int = 0

    def __post_init__(self):
        if self.n_source < 1 or self.n_target < 1:
            raise ValueError("n_source and n_target must both be >= 1")
        if self.size < 8:
            raise ValueError("phantom size must be >= 8")
        if not 1 <= self.lesions_min <= self.lesions_max:
            raise ValueError("need 1 <= lesions_min <= lesions_max")


@dataclass
class PairedSample:
    source: np.ndarray  # (N_s, H, W) in [-1, 1]
    target: np.ndarray  # (N_t, H, W) in [-1, 1]
    mask: np.ndarray  # (H, W) lesion mask in {0, 1}
    index: int = -1


def normalize_intensity(image, lo: float, hi: float) -> np.ndarray:
    """Affine map of [lo, hi] onto [-1, 1], clamped."""
    if not hi > lo:
        raise ValueError(f"normalize_intensity needs hi > lo, got lo={lo}, hi={hi}")
    out = 2.0 * (np.asarray(image, dtype=np.float64) - lo) / (hi - lo) - 1.0
    return np.clip(out, -1.0, 1.0)


def _soft_ellipse(yy, xx, cy, cx, ry, rx, angle, edge):
    c, s = np.cos(angle), np.sin(angle)
    dy, dx = yy - cy, xx - cx
    u = (c * dx + s * dy) / rx
    v = (-s * dx + c * dy) / ry
    r = np.sqrt(u * u + v * v)
    return 1.0 / (1.0 + np.exp(np.clip((r - 1.0) / edge, -50, 50)))


def _channel_transfer(c: int, n_channels: int):
    """Fixed per-channel (mix, contrast sign, gain, gamma); identical for every sample."""
    mix = (c + 0.5) / n_channels
    sign = 1.0 if c % 2 == 0 else -1.0
    gain = 3.0 + 0.5 * (c % 3)
    gamma = 0.8 + 0.3 * (c % 3)
    return mix, sign, gain, gamma


def _render(p1, p2, mix, sign, gain, gamma):
    u = mix * p1 + (1.0 - mix) * p2
    g = 1.0 / (1.0 + np.exp(-sign * gain * (u - 0.45) * 2.0))
    return 0.1 + 0.85 * g ** gamma


def generate_phantom(spec: PhantomSpec, index: int) -> PairedSample:
    """Deterministic in (spec.seed, index)."""
    rng = np.random.default_rng([spec.seed, index])
    n = spec.size
    ax = (2.0 * np.arange(n) + 1.0) / n - 1.0
    yy, xx = np.meshgrid(ax, ax, indexing="ij")
    edge = 1.5 / n

    head = _soft_ellipse(yy, xx, rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05),
                         rng.uniform(0.75, 0.88), rng.uniform(0.65, 0.8), rng.uniform(-0.3, 0.3), edge * 2)
    p1 = 0.55 * head
    p2 = 0.35 * head
    for _ in range(int(rng.integers(3, 7))):
        blob = _soft_ellipse(yy, xx, rng.uniform(-0.5, 0.5), rng.uniform(-0.45, 0.45),
                             rng.uniform(0.1, 0.35), rng.uniform(0.1, 0.35), rng.uniform(0, np.pi), edge * 2)
        p1 += blob * head * rng.uniform(-0.35, 0.35)
        p2 += blob * head * rng.uniform(-0.3, 0.3)

    smooth = gaussian_filter(rng.standard_normal((2, n, n)), sigma=(0, n / 20, n / 20))
    smooth /= smooth.std() + 1e-12
    p1 += 0.05 * smooth[0] * head
    p2 += 0.05 * smooth[1] * head

    white = rng.standard_normal((n, n))
    texture = white - gaussian_filter(white, sigma=1.0)
    texture = texture / (texture.std() + 1e-12) * head

    mask = np.zeros((n, n), dtype=bool)
    rim = np.zeros((n, n))
    for _ in range(int(rng.integers(spec.lesions_min, spec.lesions_max + 1))):
        cy, cx = rng.uniform(-0.35, 0.35), rng.uniform(-0.35, 0.35)
        ry, rx = rng.uniform(0.08, 0.16), rng.uniform(0.08, 0.16)
        ang = rng.uniform(0, np.pi)
        core = _soft_ellipse(yy, xx, cy, cx, ry, rx, ang, edge)
        edema = _soft_ellipse(yy, xx, cy, cx, ry * 1.9, rx * 1.9, ang, edge * 3)
        outer = _soft_ellipse(yy, xx, cy, cx, ry * 1.3, rx * 1.3, ang, edge)
        p2 += 0.35 * edema * head
        p1 -= 0.25 * core * head
        rim = np.maximum(rim, np.clip(outer - core, 0, 1))
        mask |= outer > 0.5
    if not mask.any():  # constructive guarantee: at least one lesion pixel
        mask[n // 2, n // 2] = True

    total = spec.n_source + spec.n_target
    amp = spec.texture_amplitude
    source = np.empty((spec.n_source, n, n))
    for c in range(spec.n_source):
        img = _render(p1 + 0.5 * amp * texture, p2, *_channel_transfer(c, total)) * head
        source[c] = normalize_intensity(img, 0.0, 1.0)
    target = np.empty((spec.n_target, n, n))
    for t in range(spec.n_target):
        img = _render(p1 + amp * texture, p2 - 0.2 * rim, *_channel_transfer(spec.n_source + t, total))
        img = np.clip(img + 0.45 * rim, 0.0, 1.0) * head
        target[t] = normalize_intensity(img, 0.0, 1.0)
    return PairedSample(source.astype(np.float32), target.astype(np.float32), mask.astype(np.float32), index)


# -- datasets -------------------------------------------------------------------


@dataclass(frozen=True)
class DatasetSpec:
    phantom: PhantomSpec = PhantomSpec()
    n_train: int = 200
    n_val: int = 40

    def indices(self, split: str) -> range:
        """Train and val index ranges are disjoint by construction."""
        if split == "train":
            return range(0, self.n_train)
        if split == "val":
            return range(self.n_train, self.n_train + self.n_val)
        raise ValueError(f"unknown split {split!r} (expected 'train' or 'val')")


def generate_split(spec: DatasetSpec, split: str) -> list[PairedSample]:
    return [generate_phantom(spec.phantom, i) for i in spec.indices(split)]


def _manifest_lines(spec: DatasetSpec) -> list[str]:
    lines = [f"{k}={v}" for k, v in asdict(spec.phantom).items()]
    lines += [f"n_train={spec.n_train}", f"n_val={spec.n_val}"]
    return lines


def write_dataset(root, spec: DatasetSpec) -> dict[str, str]:
    """Write ``<root>/<split>/<index>/{src_c,tgt_c,mask}.cnsf`` plus ``manifest.txt``.

    Returns a mapping of relative path -> sha256 for every file written.
    """
    hashes = {}
    for split in ("train", "val"):
        for sample in generate_split(spec, split):
            hashes.update(write_sample(root, split, sample))
    path = os.path.join(root, "manifest.txt")
    with open(path, "w") as fh:
        fh.write("\n".join(_manifest_lines(spec)) + "\n")
    hashes["manifest.txt"] = file_sha256(path)
    return hashes


def write_sample(root, split: str, sample: PairedSample) -> dict[str, str]:
    d = os.path.join(root, split, str(sample.index))
    out = {}
    for c, img in enumerate(sample.source):
        out[f"{split}/{sample.index}/src_{c}.cnsf"] = img
    for c, img in enumerate(sample.target):
        out[f"{split}/{sample.index}/tgt_{c}.cnsf"] = img
    out[f"{split}/{sample.index}/mask.cnsf"] = sample.mask
    hashes = {}
    os.makedirs(d, exist_ok=True)
    for rel, arr in out.items():
        p = os.path.join(root, rel)
        write_tensor(p, arr)
        hashes[rel] = file_sha256(p)
    return hashes


def read_manifest(root) -> DatasetSpec:
    values = {}
    with open(os.path.join(root, "manifest.txt")) as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                k, v = line.split("=", 1)
                values[k.strip()] = v.strip()
    pf = {f.name: f.type for f in fields(PhantomSpec)}
    kwargs = {}
    for k in pf:
        if k in values:
            kwargs[k] = float(values[k]) if k == "texture_amplitude" else int(values[k])
    return DatasetSpec(PhantomSpec(**kwargs), int(values.get("n_train", 0)), int(values.get("n_val", 0)))


def _channel_files(d, prefix):
    names = sorted((f for f in os.listdir(d) if f.startswith(prefix) and f.endswith(".cnsf")),
                   key=lambda f: int(f[len(prefix):-5]))
    return [os.path.join(d, f) for f in names]


def load_sample_dir(d, index: int = -1) -> PairedSample:
    src = np.stack([read_tensor(p) for p in _channel_files(d, "src_")])
    tgt_files = _channel_files(d, "tgt_")
    tgt = np.stack([read_tensor(p) for p in tgt_files]) if tgt_files else np.zeros((0,) + src.shape[1:], np.float32)
    mpath = os.path.join(d, "mask.cnsf")
    mask = read_tensor(mpath) if os.path.exists(mpath) else np.zeros(src.shape[1:], np.float32)
    return PairedSample(src, tgt, mask, index)


def list_indices(root, split: str) -> list[int]:
    d = os.path.join(root, split)
    if not os.path.isdir(d):
        raise FileNotFoundError(f"no split directory {d}")
    return sorted(int(x) for x in os.listdir(d) if x.isdigit())


def load_split(root, split: str) -> list[PairedSample]:
    return [load_sample_dir(os.path.join(root, split, str(i)), i) for i in list_indices(root, split)]


def read_image_dir(d, prefix: str = "tgt_") -> dict[int, np.ndarray]:
    """Read ``<d>/<index>/<prefix>c.cnsf`` stacks keyed by index."""
    out = {}
    for name in sorted(os.listdir(d)):
        sub = os.path.join(d, name)
        if name.isdigit() and os.path.isdir(sub):
            files = _channel_files(sub, prefix)
            if files:
                out[int(name)] = np.stack([read_tensor(p) for p in files])
    if not out:
        raise FileNotFoundError(f"no {prefix}*.cnsf images found under {d}")
    return out


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def export_png(image, path) -> None:
    """Write a 2D image in [-1, 1] as a 16-bit grayscale PNG (round half up)."""
    from PIL import Image

    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"export_png needs a 2D image, got shape {arr.shape}")
    px = np.floor((np.clip(arr, -1.0, 1.0) + 1.0) / 2.0 * 65535.0 + 0.5).astype(np.uint16)
    try:
        Image.fromarray(px).save(path, format="PNG")
    except OSError as exc:
        raise OSError(f"could not write PNG to {path}: {exc}") from exc
