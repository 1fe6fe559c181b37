import csv
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cones.metrics import (
    PSNR_SENTINEL,
    DegenerateTestError,
    MetricReport,
    MetricRow,
    crop_to_bbox,
    evaluate_pair,
    psnr,
    ssim,
    to_unit_range,
    wilcoxon_signed_rank,
)


# -- PSNR -------------------------------------------------------------------------


def test_identical_gives_sentinel_with_flag():
    x = np.random.default_rng(0).random((8, 8))
    assert psnr(x, x, with_flag=True) == (PSNR_SENTINEL, True)


@pytest.mark.parametrize("mse,db", [(0.01, 20.0), (1.0, 0.0), (1e-4, 40.0)])
def test_psnr_closed_form(mse, db):
    a = np.zeros((4, 4))
    b = np.full((4, 4), math.sqrt(mse))
    value, exact = psnr(a, b, with_flag=True)
    assert abs(value - db) <= 1e-9 and not exact


def test_psnr_monotone_in_noise():
    rng = np.random.default_rng(1)
    x = rng.random((32, 32))
    noise = rng.standard_normal((32, 32))
    values = [psnr(x, x + s * noise) for s in (0.01, 0.02, 0.05, 0.1, 0.3)]
    assert all(a > b for a, b in zip(values, values[1:]))


def test_psnr_shape_mismatch():
    with pytest.raises(ValueError):
        psnr(np.zeros((2, 2)), np.zeros((2, 3)))


# -- SSIM -------------------------------------------------------------------------


def _ssim_oracle(a, b, win=11, sigma=1.5, k1=0.01, k2=0.03):
    # direct formula, one window at a time, no shared filtering
    g = [math.exp(-((i - (win - 1) / 2) ** 2) / (2 * sigma * sigma)) for i in range(win)]
    s = sum(g)
    w = [[gi * gj / (s * s) for gj in g] for gi in g]
    c1, c2 = k1 ** 2, k2 ** 2
    vals = []
    for y in range(a.shape[0] - win + 1):
        for x in range(a.shape[1] - win + 1):
            ma = mb = 0.0
            for i in range(win):
                for j in range(win):
                    ma += w[i][j] * a[y + i, x + j]
                    mb += w[i][j] * b[y + i, x + j]
            va = vb = cov = 0.0
            for i in range(win):
                for j in range(win):
                    da, db = a[y + i, x + j] - ma, b[y + i, x + j] - mb
                    va += w[i][j] * da * da
                    vb += w[i][j] * db * db
                    cov += w[i][j] * da * db
            vals.append((2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2)))
    return sum(vals) / len(vals)


def test_ssim_matches_direct_oracle():
    rng = np.random.default_rng(2)
    a = rng.random((32, 32))
    b = np.clip(a + 0.2 * rng.standard_normal((32, 32)), 0, 1)
    assert abs(ssim(a, b) - _ssim_oracle(a, b)) <= 1e-8


def test_ssim_identity_and_symmetry():
    rng = np.random.default_rng(3)
    a, b = rng.random((16, 20)), rng.random((16, 20))
    assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)
    assert ssim(a, b) == ssim(b, a)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_ssim_bounded(seed):
    rng = np.random.default_rng(seed)
    v = ssim(rng.random((12, 12)), rng.random((12, 12)))
    assert -1.0 <= v <= 1.0


def test_ssim_stack_averages_channels():
    rng = np.random.default_rng(4)
    a, b = rng.random((2, 12, 12)), rng.random((2, 12, 12))
    assert ssim(a, b) == pytest.approx((ssim(a[0], b[0]) + ssim(a[1], b[1])) / 2, abs=1e-15)


def test_ssim_too_small():
    with pytest.raises(ValueError, match="window"):
        ssim(np.zeros((5, 5)), np.zeros((5, 5)))


# -- cropping ---------------------------------------------------------------------


def test_crop_full_mask_identity():
    x = np.arange(12.0).reshape(3, 4)
    np.testing.assert_array_equal(crop_to_bbox(x, np.ones((3, 4))), x)


def test_crop_single_pixel():
    x = np.arange(12.0).reshape(3, 4)
    m = np.zeros((3, 4))
    m[1, 2] = 1
    np.testing.assert_array_equal(crop_to_bbox(x, m), [[6.0]])


def test_crop_lesion_extent_brute_force():
    from cones.data import PhantomSpec, generate_phantom

    s = generate_phantom(PhantomSpec(), 5)
    pts = [(y, x) for y in range(64) for x in range(64) if s.mask[y, x] > 0]
    ys, xs = [p[0] for p in pts], [p[1] for p in pts]
    out = crop_to_bbox(s.target, s.mask)
    assert out.shape == (1, max(ys) - min(ys) + 1, max(xs) - min(xs) + 1)


def test_crop_empty_mask():
    with pytest.raises(ValueError, match="empty"):
        crop_to_bbox(np.zeros((3, 3)), np.zeros((3, 3)))


def test_evaluate_pair_grows_small_boxes():
    rng = np.random.default_rng(5)
    real = rng.uniform(-1, 1, (1, 32, 32))
    m = np.zeros((32, 32))
    m[0, 0] = 1
    row = evaluate_pair(0, real * 0.9, real, m)
    assert np.isfinite(row.cropped_ssim) and np.isfinite(row.cropped_psnr_db)
    assert row.psnr_db == psnr(to_unit_range(real * 0.9), to_unit_range(real))


def test_report_csv(tmp_path):
    rep = MetricReport([MetricRow(0, 20.5, 0.5), MetricRow(1, 30.25, 0.75, 10.0, 0.1)])
    p = tmp_path / "m.csv"
    rep.write_csv(p)
    rows = list(csv.reader(open(p)))
    assert rows[0] == ["image_id", "psnr_db", "ssim", "cropped_psnr_db", "cropped_ssim"]
    assert rows[2] == ["1", "30.25", "0.75", "10.0", "0.1"]
    assert rep.summary()["cropped_ssim"] == (0.1, 0.0)


# -- Wilcoxon ---------------------------------------------------------------------


def _enumeration_p(d):
    # two-sided p from all 2^n sign patterns of the absolute-rank statistic
    from scipy.stats import rankdata

    d = np.asarray(d, float)
    d = d[d != 0]
    r = rankdata(np.abs(d))
    observed = r[d > 0].sum()
    stats = [sum(ri for ri, s in zip(r, signs) if s) for signs in itertools.product((0, 1), repeat=len(r))]
    n = len(stats)
    lower = sum(1 for s in stats if s <= observed + 1e-9) / n
    upper = sum(1 for s in stats if s >= observed - 1e-9) / n
    return min(1.0, 2 * min(lower, upper))


def test_all_positive_has_zero_w_minus():
    res = wilcoxon_signed_rank([1, 2, 3, 4, 5], [0, 0, 0, 0, 0])
    assert res.w_minus == 0 and res.statistic == 0
    assert res.pvalue == pytest.approx(2 / 32)


def test_equal_samples_degenerate():
    with pytest.raises(DegenerateTestError):
        wilcoxon_signed_rank([1, 2, 3, 4, 5], [1, 2, 3, 4, 5])


def test_too_few_differences():
    with pytest.raises(ValueError, match="at least 5"):
        wilcoxon_signed_rank([1, 2, 3, 4], [0, 0, 0, 0])


@pytest.mark.parametrize("n", [5, 6, 8, 10, 12])
@pytest.mark.parametrize("seed", range(3))
def test_exact_matches_enumeration(n, seed):
    rng = np.random.default_rng(seed * 31 + n)
    a = rng.normal(size=n)
    b = rng.normal(size=n) + 0.3
    res = wilcoxon_signed_rank(a, b)
    assert res.method == "exact"
    assert res.pvalue == _enumeration_p(a - b)


def test_exact_with_ties_matches_enumeration():
    a = np.array([1.0, 2.0, 2.0, -3.0, 4.0, 4.0, 5.0, -1.0])
    res = wilcoxon_signed_rank(a, np.zeros(8))
    assert res.pvalue == _enumeration_p(a)


def test_normal_approximation_matches_scipy():
    from scipy.stats import wilcoxon

    rng = np.random.default_rng(9)
    a, b = rng.normal(size=40), rng.normal(size=40) + 0.2
    res = wilcoxon_signed_rank(a, b)
    ref = wilcoxon(a, b, method="approx", correction=False)
    assert res.method == "normal"
    assert res.pvalue == pytest.approx(ref.pvalue, rel=1e-10)
    assert res.statistic == ref.statistic
