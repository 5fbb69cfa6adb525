"""一致性指标测试：MSE、PSNR、SSIM。"""
import math

import numpy as np
import pytest

from app.core.errors import ShapeMismatchError
from app.metrics.consistency import (
    SSIM_C1,
    SSIM_C2,
    SSIM_WINDOW,
    ZERO_VARIANCE,
    mse,
    psnr,
    ssim,
    ssim_channels,
)


def scalar_ssim(a, b):
    """逐窗口标量循环计算的 SSIM。"""
    scores = []
    for top in range(0, a.shape[0] - SSIM_WINDOW + 1, SSIM_WINDOW):
        for left in range(0, a.shape[1] - SSIM_WINDOW + 1, SSIM_WINDOW):
            xs, ys = [], []
            for i in range(top, top + SSIM_WINDOW):
                for j in range(left, left + SSIM_WINDOW):
                    xs.append(float(a[i, j]))
                    ys.append(float(b[i, j]))
            count = len(xs)
            mu_x = sum(xs) / count
            mu_y = sum(ys) / count
            var_x = sum((x - mu_x) ** 2 for x in xs) / count
            var_y = sum((y - mu_y) ** 2 for y in ys) / count
            cov = sum((x - mu_x) * (y - mu_y) for x, y in zip(xs, ys)) / count
            luminance = (2 * mu_x * mu_y + SSIM_C1) / (mu_x ** 2 + mu_y ** 2 + SSIM_C1)
            if var_x < ZERO_VARIANCE and var_y < ZERO_VARIANCE:
                structure = 1.0
            else:
                structure = (2 * cov + SSIM_C2) / (var_x + var_y + SSIM_C2)
            scores.append(luminance * structure)
    return sum(scores) / len(scores)


class TestMse:
    def test_constant_offset(self):
        a = np.zeros((3, 3))
        assert mse(a + 0.5, a) == 0.25

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            mse(np.zeros(3), np.zeros(4))

    def test_matches_scalar_loop(self, rng):
        a = rng.standard_normal((3, 5, 4))
        b = rng.standard_normal((3, 5, 4))
        total = 0.0
        for x, y in zip(a.ravel(), b.ravel()):
            total += (float(x) - float(y)) ** 2
        assert mse(a, b) == pytest.approx(total / a.size, rel=1e-12)

    def test_symmetric(self, rng):
        for _ in range(50):
            a, b = rng.standard_normal((2, 6, 6))
            assert mse(a, b) == mse(b, a)


class TestPsnr:
    def test_forty_db(self):
        a = np.zeros(100)
        b = np.full(100, 0.01)
        assert abs(psnr(a, b, max_val=1.0) - 40.0) < 1e-9

    def test_identical_is_infinite(self, rng):
        a = rng.random((4, 4))
        assert psnr(a, a.copy()) == math.inf

    def test_max_val_positive(self):
        with pytest.raises(ValueError):
            psnr(np.zeros(2), np.ones(2), max_val=0.0)

    def test_error_equal_to_peak_is_zero_db(self):
        a = np.zeros(16)
        b = np.full(16, 2.0)
        assert mse(a, b) == 4.0
        assert psnr(a, b, max_val=2.0) == 0.0

    def test_strictly_decreasing_in_error(self, rng):
        a = rng.random(64)
        direction = rng.standard_normal(64)
        scales = np.linspace(0.01, 3.0, 40)
        errors = [mse(a, a + s * direction) for s in scales]
        values = [psnr(a, a + s * direction, max_val=1.0) for s in scales]
        assert all(e1 < e2 for e1, e2 in zip(errors, errors[1:]))
        assert all(v1 > v2 for v1, v2 in zip(values, values[1:]))


class TestSsim:
    def test_identical_is_one(self, rng):
        a = rng.random((16, 16))
        assert abs(ssim(a, a.copy()) - 1.0) < 1e-12

    def test_flat_images(self):
        a = np.full((8, 8), 0.5)
        assert abs(ssim(a, a.copy()) - 1.0) < 1e-12

    def test_constant_offset_only_lowers_luminance(self):
        a = np.full((8, 8), 0.2)
        b = a + 0.5
        luminance = (2 * 0.2 * 0.7 + SSIM_C1) / (0.2 ** 2 + 0.7 ** 2 + SSIM_C1)
        assert luminance < 1.0
        # 两个窗口都没有方差，结构项记为 1
        assert ssim(a, b) == pytest.approx(luminance, rel=1e-12)

    def test_matches_scalar_windows(self, rng):
        for shape in ((8, 8), (16, 24), (19, 17)):
            a = rng.random(shape)
            b = np.clip(a + 0.2 * rng.standard_normal(shape), 0.0, 1.0)
            assert ssim(a, b) == pytest.approx(scalar_ssim(a, b), rel=1e-10, abs=1e-12)

    def test_symmetric(self, rng):
        for _ in range(20):
            a, b = rng.random((2, 16, 16))
            assert ssim(a, b) == pytest.approx(ssim(b, a), rel=0, abs=1e-15)

    def test_noise_lowers_score(self, rng):
        a = rng.random((16, 16))
        b = a + 0.3 * rng.standard_normal((16, 16))
        assert ssim(a, b) < 0.9

    def test_partial_windows_dropped(self, rng):
        a = rng.random((8, 8))
        b = rng.random((8, 8))
        padded_a = np.pad(a, ((0, 3), (0, 5)), constant_values=0.0)
        padded_b = np.pad(b, ((0, 3), (0, 5)), constant_values=1.0)
        assert ssim(padded_a, padded_b) == ssim(a, b)

    def test_too_small(self):
        with pytest.raises(ShapeMismatchError):
            ssim(np.zeros((7, 8)), np.zeros((7, 8)))

    def test_requires_2d(self):
        with pytest.raises(ShapeMismatchError):
            ssim(np.zeros((2, 8, 8)), np.zeros((2, 8, 8)))

    def test_per_channel(self, rng):
        a = rng.random((3, 8, 8))
        b = a.copy()
        b[1] = rng.random((8, 8))
        scores = ssim_channels(a, b)
        assert len(scores) == 3
        assert scores[0] == pytest.approx(1.0)
        assert scores[1] < 1.0
