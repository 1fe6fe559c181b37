"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 20]
"""

import argparse
import timeit

import numpy as np

from cones.kernels import _pure

try:
    from cones.kernels import _ext
except ImportError:
    _ext = None


def cases(rng):
    x = rng.standard_normal((2, 16, 34, 34)).astype(np.float32)
    cols = _pure.im2col(x, 3, 3, 1)
    w = rng.standard_normal((2048, 64, 64)).astype(np.float32)
    v = rng.standard_normal((2048, 64)).astype(np.float32)
    mag = rng.random((256, 256))
    idx = np.arange(256) - 128
    bins = np.floor(np.sqrt(idx[:, None] ** 2 + idx[None, :] ** 2) + 0.5).astype(np.int64)
    return {
        "im2col 2x16x34x34 k3": lambda m: m.im2col(x, 3, 3, 1),
        "col2im 2x16x34x34 k3": lambda m: m.col2im(cols, x.shape, 3, 3, 1),
        "pixel_matvec 2048x64x64": lambda m: m.pixel_matvec(w, v),
        "pixel_matvec_t 2048x64x64": lambda m: m.pixel_matvec_t(w, v),
        "annulus_sum 256x256": lambda m: m.annulus_sum(mag, bins, 128),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':28s} {'numpy ms':>10s} {'cython ms':>10s} {'speedup':>8s}")
    for name, fn in cases(rng).items():
        t_pure = min(timeit.repeat(lambda: fn(_pure), number=1, repeat=args.repeat)) * 1e3
        if _ext is None:
            print(f"{name:28s} {t_pure:10.3f} {'n/a':>10s} {'':>8s}")
            continue
        t_ext = min(timeit.repeat(lambda: fn(_ext), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:28s} {t_pure:10.3f} {t_ext:10.3f} {t_pure / t_ext:7.2f}x")


if __name__ == "__main__":
    main()
