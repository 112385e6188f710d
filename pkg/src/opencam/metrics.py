"""Image- and key-quality metrics: PSNR, SSIM, scale-optimal error, IoU."""

from __future__ import annotations

import numpy as np
from scipy.signal import fftconvolve

from .errors import DimMismatch, TooSmall, ZeroTruth

PSNR_CAP_DB = 100.0

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _check_same_dims(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimMismatch(f"shape mismatch: {a.shape} vs {b.shape}")


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """10 log10(peak^2 / MSE), capped at 100 dB."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_same_dims(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return float(min(PSNR_CAP_DB, 10.0 * np.log10(peak * peak / mse)))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    win = np.outer(g, g)
    return win / win.sum()


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Windowed SSIM with the canonical constants on [0, 1] data.

    11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03, L=1; the map is
    averaged over valid window positions and channels.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_same_dims(a, b)
    if min(a.shape[0], a.shape[1]) < SSIM_WINDOW:
        raise TooSmall(f"inputs must be at least {SSIM_WINDOW} pixels per side")

    a3 = a[:, :, None] if a.ndim == 2 else a
    b3 = b[:, :, None] if b.ndim == 2 else b
    win = gaussian_window()
    c1 = SSIM_K1**2
    c2 = SSIM_K2**2

    scores = []
    for ch in range(a3.shape[2]):
        x = a3[:, :, ch]
        y = b3[:, :, ch]
        mu_x = fftconvolve(x, win, mode="valid")
        mu_y = fftconvolve(y, win, mode="valid")
        mu_xx = fftconvolve(x * x, win, mode="valid")
        mu_yy = fftconvolve(y * y, win, mode="valid")
        mu_xy = fftconvolve(x * y, win, mode="valid")
        var_x = mu_xx - mu_x**2
        var_y = mu_yy - mu_y**2
        cov = mu_xy - mu_x * mu_y
        num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
        den = (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
        scores.append(float(np.mean(num / den)))
    return float(np.mean(scores))


def scale_optimal_error(est: np.ndarray, truth: np.ndarray) -> float:
    """min over c of ||est - c truth|| / ||truth|| (c* by projection)."""
    est = np.asarray(est, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    _check_same_dims(est, truth)
    denom = float(np.dot(truth.ravel(), truth.ravel()))
    if denom == 0.0:
        raise ZeroTruth("truth tensor is identically zero")
    c_star = float(np.dot(est.ravel(), truth.ravel())) / denom
    resid = est - c_star * truth
    return float(np.linalg.norm(resid) / np.sqrt(denom))


def optimal_scale(est: np.ndarray, truth: np.ndarray) -> float:
    est = np.asarray(est, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    denom = float(np.dot(truth.ravel(), truth.ravel()))
    if denom == 0.0:
        raise ZeroTruth("truth tensor is identically zero")
    return float(np.dot(est.ravel(), truth.ravel())) / denom


def support_iou(a: np.ndarray, b: np.ndarray) -> float:
    """|a AND b| / |a OR b| for binary masks; two empty masks give 1."""
    a = np.asarray(a) != 0
    b = np.asarray(b) != 0
    _check_same_dims(a, b)
    union = int(np.logical_or(a, b).sum())
    if union == 0:
        return 1.0
    inter = int(np.logical_and(a, b).sum())
    return inter / union
