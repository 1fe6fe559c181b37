import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cones import autodiff as ad
from cones.autodiff import Tensor
from cones.encoding import EncodingConfig
from cones.field import (
    ConditioningMode,
    FieldConfig,
    LatentError,
    generated_param_count,
    generator_forward,
    init_generator,
    init_mlp,
    latent_layout,
    mlp_forward_film,
    mlp_forward_hyper,
    mlp_forward_shift,
    translate,
    unconditioned_forward,
)
from cones.hypernet import HypernetConfig

IDENT = lambda t: t  # noqa: E731
SMALL_HYPER = HypernetConfig((1, 1), (4, 4), 4)


def _toy_params(w, b):
    return {"mlp.w0": Tensor(np.array([[w]])), "mlp.b0": Tensor(np.array([b]))}


def _random_setup(seed=0, p=6, hidden=(5, 4), n_t=2, d_in=3):
    rng = np.random.default_rng(seed)
    cfg = FieldConfig(hidden=hidden, n_source=1, n_target=n_t, use_intensity=False,
                      encoding=EncodingConfig(m=1, enabled=False))
    params = init_mlp(cfg, rng)
    params["mlp.w0"] = Tensor(rng.standard_normal((d_in, hidden[0])))
    enc = rng.standard_normal((p, d_in))
    return cfg, params, enc, rng


# -- counts ---------------------------------------------------------------------


def test_shift_count_four_hidden_64():
    assert generated_param_count((64, 64, 64, 64, 1), "shift", 27) == 256


def test_full_count_default_config():
    cfg = FieldConfig(mode="full")
    assert cfg.input_dim == 27
    n = generated_param_count(cfg.widths, "full", cfg.input_dim)
    assert n == 14337
    assert 14000 <= n <= 15000


def test_film_doubles_shift():
    assert generated_param_count((64, 64, 64, 64, 1), "film", 27) == 512


@settings(max_examples=50, deadline=None)
@given(hidden=st.lists(st.integers(1, 64), min_size=1, max_size=5), n_t=st.integers(1, 3), d=st.integers(1, 40))
def test_parameter_economy(hidden, n_t, d):
    widths = tuple(hidden) + (n_t,)
    s, f, h = (generated_param_count(widths, m, d) for m in ("shift", "film", "full"))
    assert s < f < h


@settings(max_examples=30, deadline=None)
@given(hidden=st.lists(st.integers(1, 8), min_size=1, max_size=4), mode=st.sampled_from(list(ConditioningMode)))
def test_layout_is_contiguous_and_exact(hidden, mode):
    widths = tuple(hidden) + (1,)
    plan = latent_layout(widths, mode, 5)
    pos = 0
    for s in plan:
        assert s.start == pos
        assert s.stop - s.start == int(np.prod(s.shape))
        pos = s.stop
    assert pos == generated_param_count(widths, mode, 5)


# -- shift ----------------------------------------------------------------------


def test_shift_toy_arithmetic():
    out = mlp_forward_shift(np.array([[0.25]]), None, _toy_params(1.0, 0.0), Tensor(np.zeros((1, 0))),
                            activation=IDENT, output_activation=IDENT, modulate_output=False)
    assert out.data.item() == 0.25
    out = mlp_forward_shift(np.array([[0.25]]), None, _toy_params(1.0, 0.0), Tensor(np.array([[0.5]])),
                            activation=IDENT, output_activation=IDENT, modulate_output=True)
    assert out.data.item() == 0.75


def test_zero_shift_is_bitwise_unconditioned():
    cfg, params, enc, rng = _random_setup()
    latent = Tensor(np.zeros((enc.shape[0], generated_param_count(cfg.widths, "shift", 3))))
    a = mlp_forward_shift(enc, None, params, latent).data
    b = unconditioned_forward(enc, None, params).data
    assert np.array_equal(a, b)


def test_shift_equal_pixels_equal_outputs():
    cfg, params, enc, rng = _random_setup()
    enc[3] = enc[1]
    latent = rng.standard_normal((enc.shape[0], 9))
    latent[3] = latent[1]
    out = mlp_forward_shift(enc, None, params, Tensor(latent)).data
    assert np.array_equal(out[1], out[3])


def test_latent_shortfall_names_layer():
    cfg, params, enc, _ = _random_setup()
    with pytest.raises(LatentError, match="layer 1"):
        mlp_forward_shift(enc, None, params, Tensor(np.zeros((enc.shape[0], 6))))


def test_output_range_tanh():
    cfg, params, enc, rng = _random_setup()
    out = mlp_forward_shift(enc * 50, None, params, Tensor(rng.standard_normal((enc.shape[0], 9)) * 50)).data
    assert np.all(np.abs(out) <= 1.0)


def test_locality_latent_change_affects_only_its_pixel():
    cfg, params, enc, rng = _random_setup(p=10)
    latent = rng.standard_normal((10, 9))
    base = mlp_forward_shift(enc, None, params, Tensor(latent)).data
    latent[4] += 1.0
    moved = mlp_forward_shift(enc, None, params, Tensor(latent)).data
    changed = np.any(base != moved, axis=1)
    assert changed[4] and changed.sum() == 1


# -- FiLM -----------------------------------------------------------------------


def test_film_identity_modulation_is_bitwise_unconditioned():
    cfg, params, enc, _ = _random_setup()
    plan = latent_layout(cfg.widths, "film", 3)
    latent = np.zeros((enc.shape[0], plan[-1].stop))
    for s in plan:
        if s.kind == "alpha":
            latent[:, s.start:s.stop] = 1.0
    a = mlp_forward_film(enc, None, params, Tensor(latent)).data
    b = unconditioned_forward(enc, None, params).data
    assert np.array_equal(a, b)


def test_film_toy_arithmetic():
    out = mlp_forward_film(np.array([[0.5]]), None, _toy_params(1.0, 0.0), Tensor(np.array([[2.0, -1.0]])),
                           activation=IDENT, output_activation=IDENT, modulate_output=True)
    assert out.data.item() == 0.0


def test_film_zero_alpha_annihilates_input():
    cfg, params, enc, rng = _random_setup()
    plan = latent_layout(cfg.widths, "film", 3)
    latent = rng.standard_normal((enc.shape[0], plan[-1].stop))
    for s in plan:
        if s.kind == "alpha":
            latent[:, s.start:s.stop] = 0.0
    latent[:] = latent[0]  # same betas everywhere
    out = mlp_forward_film(enc, None, params, Tensor(latent)).data
    assert np.allclose(out, out[0])  # input encoding no longer matters


# -- full hypernetwork ----------------------------------------------------------


def test_hyper_zero_latent_identity_activation_gives_zero():
    latent = Tensor(np.zeros((4, generated_param_count((3, 2), "full", 5))))
    out = mlp_forward_hyper(np.ones((4, 5)), None, latent, (3, 2), activation=IDENT, output_activation=IDENT)
    assert np.array_equal(out.data, np.zeros((4, 2)))


def test_hyper_identical_pixels_identical_outputs():
    rng = np.random.default_rng(2)
    n = generated_param_count((3, 1), "full", 2)
    latent = np.tile(rng.standard_normal(n), (3, 1))
    out = mlp_forward_hyper(np.tile(rng.standard_normal(2), (3, 1)), None, Tensor(latent), (3, 1)).data
    assert np.array_equal(out[0], out[1]) and np.array_equal(out[1], out[2])


def test_hyper_two_layer_width_one_toy():
    # layer0: w=2, b=0.5; layer1: w=-3, b=1 -> (2x + 0.5) * -3 + 1
    latent = Tensor(np.array([[2.0, 0.5, -3.0, 1.0]]))
    x = 0.25
    out = mlp_forward_hyper(np.array([[x]]), None, latent, (1, 1), activation=IDENT, output_activation=IDENT)
    assert out.data.item() == pytest.approx((2 * x + 0.5) * -3 + 1, abs=1e-12)


def test_hyper_shortfall_names_layer():
    with pytest.raises(LatentError, match="layer 0"):
        mlp_forward_hyper(np.ones((2, 3)), None, Tensor(np.zeros((2, 5))), (2, 1))


# -- generator --------------------------------------------------------------------


@pytest.mark.parametrize("mode", ["shift", "film", "full"])
def test_generator_shapes_and_range(mode):
    cfg = FieldConfig(mode=mode, hidden=(8, 8), n_source=2, n_target=2)
    gen = init_generator(cfg, SMALL_HYPER, seed=1)
    src = np.random.default_rng(0).uniform(-1, 1, (2, 2, 8, 8)).astype(np.float32)
    out, latent = generator_forward(src, gen)
    assert out.shape == (2, 2, 8, 8)
    assert latent.shape == (2 * 64, cfg.latent_channels)
    assert np.all(np.abs(out.data) <= 1)


@pytest.mark.parametrize("mode", ["shift", "film"])
def test_generator_starts_at_bare_mlp(mode):
    cfg = FieldConfig(mode=mode, hidden=(8, 8), n_source=2)
    gen = init_generator(cfg, SMALL_HYPER, seed=3)
    src = np.random.default_rng(0).uniform(-1, 1, (1, 2, 8, 8)).astype(np.float32)
    out, latent = generator_forward(src, gen)
    assert np.all(latent.data == 0)
    from cones.field import encoded_grid

    enc = encoded_grid(8, 8, cfg.encoding)
    intens = src.transpose(0, 2, 3, 1).reshape(64, 2)
    ref = unconditioned_forward(enc, intens, gen.params, activation=lambda t: ad.leaky_relu(t, 0.2))
    assert np.array_equal(out.data.reshape(-1), ref.data.reshape(-1))


def test_translate_deterministic_and_same_size():
    gen = init_generator(FieldConfig(hidden=(8,), n_source=3), SMALL_HYPER, seed=0)
    src = np.random.default_rng(1).uniform(-1, 1, (3, 16, 8)).astype(np.float32)
    a, b = translate(src, gen), translate(src, gen)
    assert a.shape == (1, 16, 8)
    assert np.array_equal(a, b)


def test_translate_rejects_indivisible_size():
    gen = init_generator(FieldConfig(hidden=(8,), n_source=3), HypernetConfig(), seed=0)
    with pytest.raises(ValueError, match="divisible by 8"):
        translate(np.zeros((3, 12, 16), np.float32), gen)


def test_generator_channel_check():
    gen = init_generator(FieldConfig(hidden=(8,), n_source=3), SMALL_HYPER, seed=0)
    with pytest.raises(ValueError, match="3"):
        translate(np.zeros((2, 8, 8), np.float32), gen)


def test_crop_windows_match_full_image_coordinates():
    # the crop of a full-frame translation equals the translation of the crop when
    # the hypernetwork has no influence (zero projection) and coordinates are global
    gen = init_generator(FieldConfig(hidden=(8,), n_source=1), SMALL_HYPER, seed=0)
    src = np.random.default_rng(3).uniform(-1, 1, (1, 1, 16, 16)).astype(np.float32)
    full, _ = generator_forward(src, gen)
    crop, _ = generator_forward(src[..., 4:12, 8:16], gen, windows=[(4, 8, 16, 16)])
    np.testing.assert_allclose(crop.data, full.data[..., 4:12, 8:16], rtol=0, atol=1e-6)
    with pytest.raises(ValueError, match="windows"):
        generator_forward(src[..., :8, :8], gen, windows=[])
