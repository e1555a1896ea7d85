"""PSNR and SSIM distortion metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .imageio import ImageBuffer


@dataclass
class SsimConfig:
    window: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    data_range: float = 1.0

    def __post_init__(self):
        if self.window % 2 == 0 or self.window < 1:
            raise ValueError("window must be odd and >= 1")
        if self.sigma <= 0 or not (0 < self.k1 < 1) or not (0 < self.k2 < 1):
            raise ValueError("invalid SSIM constants")


def psnr(a: ImageBuffer, b: ImageBuffer, data_range: float = 1.0) -> float:
    """10*log10(range^2 / MSE); math.inf when the images are identical."""
    if a.data.shape != b.data.shape:
        raise ValueError("shape mismatch")
    mse = float(np.mean((a.data.astype(np.float64) - b.data.astype(np.float64)) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(data_range * data_range / mse)


def _gaussian_window(size, sigma):
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r ** 2) / (2.0 * sigma ** 2))
    w = np.outer(g, g)
    return w / w.sum()


def _ssim_single(x, y, cfg: SsimConfig):
    win = _gaussian_window(cfg.window, cfg.sigma)
    c1 = (cfg.k1 * cfg.data_range) ** 2
    c2 = (cfg.k2 * cfg.data_range) ** 2

    def filt(z):
        return fftconvolve(z, win, mode="valid")

    mu_x = filt(x)
    mu_y = filt(y)
    mu_xx = mu_x * mu_x
    mu_yy = mu_y * mu_y
    mu_xy = mu_x * mu_y
    sxx = filt(x * x) - mu_xx
    syy = filt(y * y) - mu_yy
    sxy = filt(x * y) - mu_xy
    num = (2 * mu_xy + c1) * (2 * sxy + c2)
    den = (mu_xx + mu_yy + c1) * (sxx + syy + c2)
    return num / den


def ssim(a: ImageBuffer, b: ImageBuffer, cfg: SsimConfig | None = None) -> float:
    """Mean of the Gaussian-weighted local SSIM map, averaged over channels."""
    cfg = cfg or SsimConfig()
    if a.data.shape != b.data.shape:
        raise ValueError("shape mismatch")
    if min(a.height, a.width) < cfg.window:
        raise ValueError("image smaller than SSIM window")
    if a.data is b.data or np.array_equal(a.data, b.data):
        return 1.0
    vals = []
    for c in range(a.channels):
        x = a.data[:, :, c].astype(np.float64)
        y = b.data[:, :, c].astype(np.float64)
        vals.append(float(np.mean(_ssim_single(x, y, cfg))))
    return float(np.mean(vals))


def crop_border(img: ImageBuffer, border: int) -> ImageBuffer:
    """Drop a border band before computing metrics."""
    if border <= 0:
        return img
    if 2 * border >= min(img.height, img.width):
        raise ValueError("border too large")
    return ImageBuffer(data=img.data[border:-border, border:-border].copy(), space=img.space)
