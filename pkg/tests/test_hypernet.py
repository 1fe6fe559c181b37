import numpy as np
import pytest

from cones.autodiff import Tensor
from cones.field import FieldConfig
from cones.hypernet import (
    HypernetConfig,
    hypernet_forward,
    hypernet_forward_pixels,
    influence_radius,
    init_hypernet,
    stage_features,
)

SMALL = HypernetConfig((1, 1, 1), (4, 6, 8), 5)
NO_NORM = HypernetConfig((1, 1, 1), (4, 6, 8), 5, norm=False)


def _params(cfg, n_source=2, channels=3, seed=0, random_proj=True):
    rng = np.random.default_rng(seed)
    p = init_hypernet(cfg, n_source, channels, rng)
    if random_proj:
        p["hyper.proj.w"].data[...] = rng.standard_normal(p["hyper.proj.w"].shape).astype(np.float32)
    return p


def _source(shape, seed=1):
    return Tensor(np.random.default_rng(seed).uniform(-1, 1, shape))


def test_output_spatial_dims_match_input():
    out = hypernet_forward(_source((2, 2, 16, 24)), _params(SMALL), SMALL)
    assert out.shape == (2, 3, 16, 24)


def test_default_shift_latent_has_256_channels():
    cfg = HypernetConfig()
    channels = FieldConfig().latent_channels
    assert channels == 256
    out = hypernet_forward(_source((1, 3, 8, 8)), _params(cfg, 3, channels), cfg)
    assert out.shape == (1, 256, 8, 8)


def test_zero_projection_gives_bias():
    rng = np.random.default_rng(0)
    bias = rng.standard_normal(3).astype(np.float32)
    p = init_hypernet(SMALL, 2, 3, rng, proj_bias=bias)
    out = hypernet_forward(_source((1, 2, 8, 8)), p, SMALL).data
    np.testing.assert_array_equal(out, np.broadcast_to(bias[None, :, None, None], out.shape))


def test_pixel_rows_match_map_layout():
    p = _params(SMALL)
    src = _source((2, 2, 8, 12))
    grid = hypernet_forward(src, p, SMALL).data
    rows = hypernet_forward_pixels(src, p, SMALL).data
    np.testing.assert_allclose(rows, grid.transpose(0, 2, 3, 1).reshape(-1, 3), rtol=1e-10, atol=1e-12)


def test_batch_permutation_permutes_outputs():
    p = _params(SMALL)
    src = _source((3, 2, 8, 8))
    out = hypernet_forward(src, p, SMALL).data
    perm = [2, 0, 1]
    out_p = hypernet_forward(Tensor(src.data[perm]), p, SMALL).data
    np.testing.assert_array_equal(out_p, out[perm])


def test_indivisible_input_advises_pad_or_crop():
    with pytest.raises(ValueError, match="pad or crop"):
        hypernet_forward(_source((1, 2, 10, 8)), _params(SMALL), SMALL)


def test_mismatched_stage_lists_rejected():
    with pytest.raises(ValueError):
        HypernetConfig((1, 1), (4,))


def test_bias_shape_checked():
    with pytest.raises(ValueError, match="projection bias"):
        init_hypernet(SMALL, 2, 3, np.random.default_rng(0), proj_bias=np.zeros(4))


def test_translation_covariance_of_stage_features():
    p = _params(NO_NORM)
    d = NO_NORM.divisor
    src = _source((1, 2, 64, 64)).data
    shifted = np.zeros_like(src)
    shifted[..., d:, d:] = src[..., :-d, :-d]
    base = stage_features(Tensor(src), p, NO_NORM)
    moved = stage_features(Tensor(shifted), p, NO_NORM)
    for s, (a, b) in enumerate(zip(base, moved)):
        k = d // 2 ** s
        lo = influence_radius(NO_NORM) // 2 ** s + 1
        hi = a.shape[-1] - lo - k
        assert hi > lo
        # interior pixels: b[y + k, x + k] == a[y, x]
        np.testing.assert_allclose(b.data[..., lo + k:hi + k, lo + k:hi + k], a.data[..., lo:hi, lo:hi], atol=1e-5)


def test_influence_radius_grows_with_stages():
    radii = [influence_radius(HypernetConfig((1,) * n, (4,) * n, 4, norm=False)) for n in range(1, 5)]
    assert all(a < b for a, b in zip(radii, radii[1:]))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_single_pixel_perturbation_is_bounded(seed):
    rng = np.random.default_rng(seed)
    p = _params(NO_NORM, seed=seed)
    size = 48
    src = rng.uniform(-1, 1, (1, 2, size, size))
    py, px = rng.integers(0, size, 2)
    bumped = src.copy()
    bumped[0, :, py, px] += 1.0
    a = hypernet_forward(Tensor(src), p, NO_NORM).data
    b = hypernet_forward(Tensor(bumped), p, NO_NORM).data
    ys, xs = np.nonzero(np.any(a != b, axis=(0, 1)))
    assert len(ys) > 0
    r = influence_radius(NO_NORM)
    assert np.max(np.abs(ys - py)) <= r and np.max(np.abs(xs - px)) <= r
