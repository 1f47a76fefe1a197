import math

import numpy as np
import numpy.testing as npt
import pytest

from SRRN.data import degrade
from SRRN.exceptions import ConfigurationError, DataError, UsageError
from SRRN.metrics import (
    PSNR_CAP, EvalReport, EvalRow, bicubic_baseline, evaluate, format_report, psnr, quantize,
    shave_border, ssim, write_report_csv,
)


def test_identical_images_hit_the_cap(rng):
    image = rng.uniform(size=(16, 16))
    assert psnr(image, image) == PSNR_CAP == 100.0


def test_black_against_white():
    assert psnr(np.zeros((8, 8)), np.ones((8, 8))) == pytest.approx(0.0, abs=1e-12)


def test_one_level_everywhere():
    assert psnr(np.full((8, 8), 0.5), np.full((8, 8), 0.5 + 1 / 255)) == pytest.approx(48.1308, abs=1e-4)


def test_psnr_is_symmetric(rng):
    a, b = rng.uniform(size=(12, 12)), rng.uniform(size=(12, 12))
    assert psnr(a, b) == psnr(b, a)


def test_psnr_falls_with_noise_amplitude():
    base = np.full((16, 16), 0.5)
    signs = np.where(np.indices((16, 16)).sum(axis=0) % 2, 1.0, -1.0)
    values = [psnr(base, base + signs * levels / 255) for levels in (2, 4, 8, 16, 32)]
    assert all(a > b for a, b in zip(values, values[1:]))
    assert values[0] == pytest.approx(10 * math.log10(255 ** 2 / 4), abs=1e-9)


def test_quantize_rounds_half_up():
    npt.assert_array_equal(quantize([0.0, 0.5, 1.0, 1.5, -0.2]), [0, 128, 255, 255, 0])


def test_shave_border():
    assert shave_border(np.zeros((10, 12)), 3).shape == (4, 6)
    with pytest.raises(UsageError):
        shave_border(np.zeros((10, 12)), 5)


def test_shave_ignores_border_errors(rng):
    a = rng.uniform(size=(20, 20))
    b = a.copy()
    b[:2] = 1 - b[:2]
    b[:, -2:] = 0
    assert psnr(a, b, shave=2) == PSNR_CAP
    assert ssim(a, b, shave=2) == pytest.approx(1.0)


def test_dims_must_match():
    with pytest.raises(ConfigurationError):
        psnr(np.zeros((4, 4)), np.zeros((4, 5)))


def gaussian_window(size=11, sigma=1.5):
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2
    g = np.exp(-(offsets ** 2) / (2 * sigma ** 2))
    window = np.outer(g, g)
    return window / window.sum()


def windowed_ssim(x, y):
    """Mean SSIM over every full 11x11 window, one window at a time, on 8-bit levels."""
    w = gaussian_window()
    c1, c2 = (0.01 * 255) ** 2, (0.03 * 255) ** 2
    values = []
    for i in range(x.shape[0] - 10):
        for j in range(x.shape[1] - 10):
            px, py = x[i:i + 11, j:j + 11], y[i:i + 11, j:j + 11]
            mx, my = (w * px).sum(), (w * py).sum()
            vx, vy = (w * (px - mx) ** 2).sum(), (w * (py - my) ** 2).sum()
            cov = (w * (px - mx) * (py - my)).sum()
            values.append((2 * mx * my + c1) * (2 * cov + c2) / ((mx ** 2 + my ** 2 + c1) * (vx + vy + c2)))
    return np.mean(values)


def test_ssim_of_identical_images(rng):
    image = rng.uniform(size=(24, 24))
    assert ssim(image, image) == pytest.approx(1.0, abs=1e-12)


def test_ssim_drops_for_inverted_image(rng):
    image = rng.uniform(size=(24, 24))
    assert ssim(image, 1 - image) < 1.0


def test_ssim_is_symmetric(rng):
    a, b = rng.uniform(size=(20, 20)), rng.uniform(size=(20, 20))
    assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-9)


def test_ssim_matches_windowed_formula(rng):
    a, b = rng.uniform(size=(32, 32)), rng.uniform(size=(32, 32))
    assert ssim(a, b) == pytest.approx(windowed_ssim(quantize(a), quantize(b)), abs=1e-6)


def test_shaved_ssim_matches_windowed_formula(rng):
    a = rng.uniform(size=(30, 27))
    b = np.clip(a + rng.normal(0, 0.05, size=a.shape), 0, 1)
    expected = windowed_ssim(quantize(a)[3:-3, 3:-3], quantize(b)[3:-3, 3:-3])
    assert ssim(a, b, shave=3) == pytest.approx(expected, abs=1e-6)


def test_ssim_needs_a_full_window():
    with pytest.raises(DataError):
        ssim(np.zeros((8, 8)), np.zeros((8, 8)))


def test_zero_network_matches_bicubic(zero_net, textures):
    model = evaluate(zero_net, textures[:2], (2, 3, 4))
    baseline = bicubic_baseline(textures[:2], (2, 3, 4))
    assert model.scales == [2, 3, 4]
    for scale in (2, 3, 4):
        assert model.mean(scale) == baseline.mean(scale)
        lr = degrade(textures[0], scale).astype(np.float32)
        assert model.rows_for(scale)[0].psnr == pytest.approx(psnr(lr, textures[0], scale), abs=1e-9)


def test_report_means_are_recomputable(tiny_net, textures):
    report = evaluate(tiny_net, textures[:3], (2,), names=['a', 'b', 'c'])
    rows = report.rows_for(2)
    assert [row.image for row in rows] == ['a', 'b', 'c']
    assert report.mean(2)[0] == pytest.approx(sum(r.psnr for r in rows) / 3)
    assert report.shave == {2: 2}


def test_empty_evaluation_set(zero_net):
    with pytest.raises(DataError):
        evaluate(zero_net, [], (2,))


def test_report_csv_and_text(tmp_path):
    report = EvalReport('bicubic', 'set5', [EvalRow('a', 2, 30.0, 0.9), EvalRow('b', 2, 32.0, 0.8)], {2: 2})
    path = tmp_path / 'report.csv'
    write_report_csv([report], path)
    lines = path.read_text().splitlines()
    assert lines == ['dataset,scale,method,psnr,ssim,shave,images', 'set5,2,bicubic,31.0000,0.8500,2,2']
    assert 'x2' in format_report(report) and '31.0000' in format_report(report)
