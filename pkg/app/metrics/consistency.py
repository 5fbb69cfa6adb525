"""背景保持一致性指标：MSE、PSNR、SSIM。"""
import logging
import math

import numpy as np

from app.core.errors import ShapeMismatchError

logger = logging.getLogger(__name__)

SSIM_WINDOW = 8
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2
# 两个窗口方差都低于该值时，对比度/结构项记为 1
ZERO_VARIANCE = 1e-12


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"两个输入形状不一致: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise ShapeMismatchError("输入为空")
    return a, b


def mse(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.mean((a - b) ** 2))


def psnr(a, b, max_val: float = 1.0) -> float:
    """10·log10(max²/mse)，两者完全相同时返回 math.inf。"""
    if not max_val > 0.0:
        raise ValueError(f"max_val 必须为正: {max_val}")
    error = mse(a, b)
    if error == 0.0:
        return math.inf
    return 10.0 * math.log10(max_val * max_val / error)


def _windows(x: np.ndarray) -> np.ndarray:
    rows, cols = x.shape[0] // SSIM_WINDOW, x.shape[1] // SSIM_WINDOW
    x = x[: rows * SSIM_WINDOW, : cols * SSIM_WINDOW]
    return (
        x.reshape(rows, SSIM_WINDOW, cols, SSIM_WINDOW)
        .swapaxes(1, 2)
        .reshape(rows * cols, SSIM_WINDOW * SSIM_WINDOW)
    )


def ssim(a, b) -> float:
    """8×8 不重叠窗口上的平均局部 SSIM，不足整窗的边缘行列丢弃。"""
    a, b = _pair(a, b)
    if a.ndim != 2:
        raise ShapeMismatchError(f"SSIM 需要二维单通道输入: {a.shape}")
    if a.shape[0] < SSIM_WINDOW or a.shape[1] < SSIM_WINDOW:
        raise ShapeMismatchError(f"输入 {a.shape} 小于一个 {SSIM_WINDOW}×{SSIM_WINDOW} 窗口")

    wa, wb = _windows(a), _windows(b)
    mu_a, mu_b = wa.mean(axis=1), wb.mean(axis=1)
    var_a, var_b = wa.var(axis=1), wb.var(axis=1)
    cov = ((wa - mu_a[:, None]) * (wb - mu_b[:, None])).mean(axis=1)

    luminance = (2.0 * mu_a * mu_b + SSIM_C1) / (mu_a ** 2 + mu_b ** 2 + SSIM_C1)
    structure = (2.0 * cov + SSIM_C2) / (var_a + var_b + SSIM_C2)
    flat = (var_a < ZERO_VARIANCE) & (var_b < ZERO_VARIANCE)
    structure = np.where(flat, 1.0, structure)
    return float(np.mean(luminance * structure))


def ssim_channels(a, b) -> list[float]:
    """三维输入按首轴逐通道计算 SSIM。"""
    a, b = _pair(a, b)
    if a.ndim == 2:
        return [ssim(a, b)]
    if a.ndim != 3:
        raise ShapeMismatchError(f"逐通道 SSIM 需要二维或三维输入: {a.shape}")
    return [ssim(a[c], b[c]) for c in range(a.shape[0])]
