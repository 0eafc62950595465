import math

import numpy as np
import pytest

from fgrn.errors import ShapeMismatch, TooSmall
from fgrn.metrics import MetricReport, psnr_plane, psnr_y, ssim_plane, ssim_y


def gray(level, size=16):
    return np.full((3, size, size), level, dtype=np.float64)


def test_psnr_identical_is_inf():
    img = np.random.default_rng(0).uniform(size=(3, 12, 12))
    assert psnr_y(img, img) == math.inf


def test_psnr_offset_255_is_zero():
    assert psnr_plane(np.zeros((4, 4)), np.full((4, 4), 255.0)) == pytest.approx(0.0, abs=1e-12)


def test_psnr_offset_16():
    # luma step of 16 on the 0-255 scale: 10*log10(255^2 / 16^2) = 20*log10(255/16)
    expected = 24.04840
    assert 20 * math.log10(255 / 16) == pytest.approx(expected, abs=1e-4)
    a, b = gray(0.3), gray(0.3 + 16 / 219)
    assert psnr_y(a, b, border_crop=2) == pytest.approx(expected, abs=1e-4)
    assert psnr_plane(np.zeros((3, 3)), np.full((3, 3), 16.0)) == pytest.approx(expected, abs=1e-4)


def test_psnr_accepts_uint8():
    a = np.zeros((3, 8, 8), np.uint8)
    b = np.full((3, 8, 8), 255, np.uint8)
    assert psnr_y(a, b) == pytest.approx(psnr_y(a / 255.0, b / 255.0))


def test_border_crop_removes_edges():
    a = gray(0.5)
    b = a.copy()
    b[:, 0, :] = 0.0
    assert psnr_y(a, b, border_crop=1) == math.inf
    assert psnr_y(a, b, border_crop=0) < math.inf


def test_psnr_decreases_with_noise():
    rng = np.random.default_rng(1)
    img = rng.uniform(0.2, 0.8, (3, 24, 24))
    noise = rng.uniform(-1, 1, img.shape)
    values = [psnr_y(img, np.clip(img + amp * noise, 0, 1)) for amp in (0.01, 0.03, 0.1, 0.2)]
    assert all(x > y for x, y in zip(values, values[1:]))


def test_ssim_identical_is_one():
    img = np.random.default_rng(2).uniform(size=(3, 20, 20))
    assert ssim_y(img, img) == 1.0


def test_ssim_two_constants_closed_form():
    c1, c2 = (0.01 * 255) ** 2, (0.03 * 255) ** 2
    lo, hi = 16.0, 235.0
    expected = (2 * lo * hi + c1) * c2 / ((lo ** 2 + hi ** 2 + c1) * c2)
    assert ssim_y(gray(0.0), gray(1.0)) == pytest.approx(expected, rel=1e-9)
    expected_plane = c1 / (255.0 ** 2 + c1)
    assert ssim_plane(np.zeros((12, 12)), np.full((12, 12), 255.0)) == pytest.approx(expected_plane, rel=1e-9)


def test_symmetry_and_bounds():
    rng = np.random.default_rng(3)
    for _ in range(50):
        a = rng.uniform(size=(3, 16, 16))
        b = np.clip(a + rng.normal(0, 0.1, a.shape), 0, 1)
        assert psnr_y(a, b, 2) == psnr_y(b, a, 2)
        assert ssim_y(a, b) == pytest.approx(ssim_y(b, a), abs=1e-15)
        assert ssim_y(a, b) < 1.0


def test_ssim_against_direct_window_loop():
    rng = np.random.default_rng(4)
    a = rng.uniform(0, 255, (13, 12))
    b = rng.uniform(0, 255, (13, 12))
    ax = np.arange(11) - 5.0
    g = np.exp(-ax ** 2 / 4.5)
    w = np.outer(g, g) / np.outer(g, g).sum()
    c1, c2 = 6.5025, 58.5225
    vals = []
    for i in range(13 - 10):
        for j in range(12 - 10):
            pa, pb = a[i:i + 11, j:j + 11], b[i:i + 11, j:j + 11]
            ma, mb = (w * pa).sum(), (w * pb).sum()
            va = (w * (pa - ma) ** 2).sum()
            vb = (w * (pb - mb) ** 2).sum()
            cv = (w * (pa - ma) * (pb - mb)).sum()
            vals.append((2 * ma * mb + c1) * (2 * cv + c2) / ((ma ** 2 + mb ** 2 + c1) * (va + vb + c2)))
    assert ssim_plane(a, b) == pytest.approx(np.mean(vals), abs=1e-10)


def test_errors():
    with pytest.raises(ShapeMismatch):
        psnr_y(gray(0.1, 8), gray(0.1, 9))
    with pytest.raises(TooSmall):
        ssim_y(gray(0.1, 12), gray(0.2, 12), border_crop=2)


def test_report_csv():
    rep = MetricReport()
    rep.add("a.png", 30.0, 0.9)
    rep.add("b.png", 32.0, 0.8)
    lines = rep.to_csv().splitlines()
    assert lines[0] == "file,psnr_db,ssim"
    assert len(lines) == 4
    assert lines[-1] == "mean,31.000000,0.850000"
