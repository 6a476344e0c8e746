"""PSNR and single-scale SSIM for [0, 1] grayscale images."""

from __future__ import annotations

import numpy as np

from .errors import DimensionError

PSNR_CAP_DB = 100.0

_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03


def _check_pair(reference: np.ndarray, candidate: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    reference = np.asarray(reference, dtype=float)
    candidate = np.asarray(candidate, dtype=float)
    if reference.shape != candidate.shape:
        raise DimensionError(
            f"image shapes differ: {reference.shape} vs {candidate.shape}"
        )
    return reference, candidate


def psnr(reference: np.ndarray, candidate: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for unit-peak images.

    Zero error is reported as the 100 dB cap instead of infinity.
    """
    reference, candidate = _check_pair(reference, candidate)
    mse = float(np.mean((reference - candidate) ** 2))
    if mse <= 0.0:
        return PSNR_CAP_DB
    return min(10.0 * np.log10(1.0 / mse), PSNR_CAP_DB)


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    half = size // 2
    x = np.arange(size, dtype=float) - half
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter_valid(image: np.ndarray, window: np.ndarray) -> np.ndarray:
    """Separable 2-D correlation keeping only fully-overlapped pixels."""
    size = window.size
    h, w = image.shape
    rows = np.zeros((h, w - size + 1))
    for j, wt in enumerate(window):
        rows += wt * image[:, j : j + rows.shape[1]]
    out = np.zeros((h - size + 1, rows.shape[1]))
    for i, wt in enumerate(window):
        out += wt * rows[i : i + out.shape[0], :]
    return out


def ssim(reference: np.ndarray, candidate: np.ndarray) -> float:
    """Mean structural similarity with the standard 11x11 Gaussian window.

    Uses sigma = 1.5 and stabilizers C1 = (0.01 L)^2, C2 = (0.03 L)^2
    with dynamic range L = 1.  The local statistics are computed over
    fully-interior windows only, so images must be at least 11 x 11.
    """
    reference, candidate = _check_pair(reference, candidate)
    if min(reference.shape) < _SSIM_WINDOW:
        raise DimensionError(
            f"images must be at least {_SSIM_WINDOW}x{_SSIM_WINDOW} for SSIM, "
            f"got {reference.shape}"
        )
    window = _gaussian_window(_SSIM_WINDOW, _SSIM_SIGMA)
    c1 = _SSIM_K1**2
    c2 = _SSIM_K2**2

    mu_x = _filter_valid(reference, window)
    mu_y = _filter_valid(candidate, window)
    var_x = _filter_valid(reference * reference, window) - mu_x * mu_x
    var_y = _filter_valid(candidate * candidate, window) - mu_y * mu_y
    cov = _filter_valid(reference * candidate, window) - mu_x * mu_y

    num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))
