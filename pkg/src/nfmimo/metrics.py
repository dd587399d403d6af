"""Reconstruction quality metrics: 3D PSNR and range-slice-averaged SSIM.

Both metrics act on magnitudes only, so complex inputs are accepted and
phase never influences the scores.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter

from .geometry import ImagingConfig

PSNR_CAP_DB = 300.0  # reported instead of +inf for a zero-MSE pair

SSIM_WIN = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _magnitudes(truth, recon) -> tuple[np.ndarray, np.ndarray]:
    t = np.abs(np.asarray(truth))
    r = np.abs(np.asarray(recon))
    if t.shape != r.shape:
        raise ValueError(f"shape mismatch: {t.shape} vs {r.shape}")
    return t, r


def psnr3d(truth, recon, peak: float | None = None) -> float:
    """10*log10(s_max^2 / MSE) over voxel magnitudes.

    peak=None uses max|truth| (1 for normalized volumes); a zero-MSE pair
    reports the 300 dB cap.
    """
    t, r = _magnitudes(truth, recon)
    s_max = float(t.max()) if peak is None else float(peak)
    if s_max <= 0:
        raise ValueError("peak magnitude must be positive")
    mse = float(np.mean((t - r) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return float(10.0 * np.log10(s_max**2 / mse))


def _ssim2d(x: np.ndarray, y: np.ndarray, data_range: float = 1.0) -> float:
    # Gaussian-weighted SSIM, 11x11 window, population statistics; the mean
    # is taken over the window-radius-cropped interior.
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    truncate = (SSIM_WIN - 1) / 2 / SSIM_SIGMA

    def filt(a):
        return gaussian_filter(a, sigma=SSIM_SIGMA, truncate=truncate)

    mu_x = filt(x)
    mu_y = filt(y)
    mu_xx = filt(x * x)
    mu_yy = filt(y * y)
    mu_xy = filt(x * y)
    var_x = mu_xx - mu_x**2
    var_y = mu_yy - mu_y**2
    cov = mu_xy - mu_x * mu_y
    ssim_map = ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) / (
        (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
    )
    pad = (SSIM_WIN - 1) // 2
    return float(np.mean(ssim_map[pad:-pad, pad:-pad]))


def ssim_slice_avg(truth, recon, data_range: float = 1.0) -> float:
    """Mean SSIM of the x-y magnitude slices along the range (z) axis."""
    t, r = _magnitudes(truth, recon)
    if t.ndim != 3:
        raise ValueError("expected 3D volumes")
    if t.shape[0] < SSIM_WIN or t.shape[1] < SSIM_WIN:
        raise ValueError(f"slices must be at least {SSIM_WIN}x{SSIM_WIN}")
    scores = [_ssim2d(t[:, :, z], r[:, :, z], data_range) for z in range(t.shape[2])]
    return float(np.mean(scores))


def compression_ratio(config: ImagingConfig) -> float:
    """Measurements per unknown, M/N."""
    return config.n_measurements / config.n_voxels
