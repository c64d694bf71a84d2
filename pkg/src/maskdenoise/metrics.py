"""Image quality metrics over [0,1]-valued arrays.

Both metrics are computed on RGB values directly (no luma conversion) so
reported numbers are self-consistent across this package. PSNR is clamped
to 100 dB, the sentinel reported for identical images.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import convolve1d

from .tensor import ShapeError

PSNR_CAP_DB = 100.0

_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_SSIM_C1 = (0.01 * 1.0) ** 2
_SSIM_C2 = (0.03 * 1.0) ** 2


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB: ``10*log10(1/MSE)``, capped at 100."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"psnr shapes disagree: {a.shape} vs {b.shape}")
    mse = np.mean((a - b) ** 2)
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, float(10.0 * np.log10(1.0 / mse)))


def _gaussian_taps(n: int, sigma: float) -> np.ndarray:
    x = np.arange(n, dtype=np.float64) - (n - 1) / 2.0
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def _window_mean(x: np.ndarray, taps: np.ndarray) -> np.ndarray:
    # separable Gaussian; cropping the contaminated border leaves the
    # valid-mode result exactly
    r = len(taps) // 2
    out = convolve1d(x, taps, axis=0, mode="constant")
    out = convolve1d(out, taps, axis=1, mode="constant")
    return out[r:-r, r:-r]


def _ssim_channel(x: np.ndarray, y: np.ndarray, taps: np.ndarray) -> float:
    mx = _window_mean(x, taps)
    my = _window_mean(y, taps)
    vx = _window_mean(x * x, taps) - mx * mx
    vy = _window_mean(y * y, taps) - my * my
    cxy = _window_mean(x * y, taps) - mx * my
    num = (2.0 * mx * my + _SSIM_C1) * (2.0 * cxy + _SSIM_C2)
    den = (mx * mx + my * my + _SSIM_C1) * (vx + vy + _SSIM_C2)
    return float(np.mean(num / den))


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean structural similarity with an 11x11 Gaussian window (sigma 1.5).

    Channels are scored independently and averaged. Inputs need at least
    11 pixels along each spatial axis.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"ssim shapes disagree: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a = a[:, :, None]
        b = b[:, :, None]
    if a.ndim != 3:
        raise ShapeError("ssim expects (H, W) or (H, W, C) images")
    if min(a.shape[0], a.shape[1]) < _SSIM_WINDOW:
        raise ValueError(f"image smaller than the {_SSIM_WINDOW}x{_SSIM_WINDOW} window")
    taps = _gaussian_taps(_SSIM_WINDOW, _SSIM_SIGMA)
    scores = [_ssim_channel(a[:, :, c], b[:, :, c], taps) for c in range(a.shape[2])]
    return float(np.mean(scores))


@dataclass(frozen=True)
class MetricReport:
    """PSNR/SSIM pair for one image comparison."""

    psnr_db: float
    ssim: float


def compare(clean: np.ndarray, restored: np.ndarray) -> MetricReport:
    return MetricReport(psnr_db=psnr(clean, restored), ssim=ssim(clean, restored))
