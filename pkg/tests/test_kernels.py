import numpy as np
import pytest

from cones import kernels
from cones.kernels import _pure

_ext = pytest.importorskip("cones.kernels._ext")


def test_backend_reported():
    assert kernels.BACKEND in ("cython", "python")


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
@pytest.mark.parametrize("k,stride", [(3, 1), (4, 2), (1, 1), (3, 2)])
def test_im2col_bit_identical(dtype, k, stride):
    x = np.random.default_rng(0).standard_normal((2, 3, 11, 9)).astype(dtype)
    assert np.array_equal(_ext.im2col(x, k, k, stride), _pure.im2col(x, k, k, stride))


@pytest.mark.parametrize("k,stride", [(3, 1), (4, 2), (3, 2)])
def test_col2im_agrees(k, stride):
    shape = (2, 3, 11, 9)
    ho, wo = (11 - k) // stride + 1, (9 - k) // stride + 1
    cols = np.random.default_rng(1).standard_normal((2, 3 * k * k, ho * wo))
    np.testing.assert_allclose(_ext.col2im(cols, shape, k, k, stride), _pure.col2im(cols, shape, k, k, stride),
                               rtol=1e-13, atol=1e-13)


def test_col2im_is_adjoint_of_im2col():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((1, 2, 8, 8))
    cols = rng.standard_normal((1, 2 * 9, 36))
    for mod in (_pure, _ext):
        lhs = np.sum(mod.im2col(x, 3, 3, 1) * cols)
        rhs = np.sum(x * mod.col2im(cols, x.shape, 3, 3, 1))
        assert lhs == pytest.approx(rhs, rel=1e-12)


def test_pixel_matvec_agrees():
    rng = np.random.default_rng(3)
    w = rng.standard_normal((50, 4, 7))
    x = rng.standard_normal((50, 7))
    g = rng.standard_normal((50, 4))
    np.testing.assert_allclose(_ext.pixel_matvec(w, x), _pure.pixel_matvec(w, x), rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(_ext.pixel_matvec_t(w, g), _pure.pixel_matvec_t(w, g), rtol=1e-12, atol=1e-12)


def test_annulus_sum_bit_identical():
    rng = np.random.default_rng(4)
    v = rng.random((32, 32))
    b = rng.integers(0, 20, (32, 32))
    assert np.array_equal(_ext.annulus_sum(v, b, 16), _pure.annulus_sum(v, b, 16))
