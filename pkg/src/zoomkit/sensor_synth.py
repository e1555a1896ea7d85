"""Synthetic sensor simulation: CFA subsampling of sRGB images, Gaussian
noise of random variance, and Catmull-Rom bicubic resampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imageio import BayerMosaic, CfaPattern, ColorSpace, ImageBuffer

_CHANNEL_INDEX = {"R": 0, "G": 1, "B": 2}


@dataclass
class NoiseConfig:
    sigma_min: float = 0.0001
    sigma_max: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.sigma_min <= self.sigma_max:
            raise ValueError("need 0 <= sigma_min <= sigma_max")


def mosaic_rgb(img: ImageBuffer, cfa: CfaPattern = CfaPattern.RGGB) -> BayerMosaic:
    """Keep one color channel per pixel according to the CFA layout."""
    if img.channels != 3:
        raise ValueError("mosaicking requires a 3-channel image")
    h, w = img.height, img.width
    if h % 2 or w % 2:
        raise ValueError("odd dimensions")
    layout = cfa.layout
    out = np.empty((h, w), dtype=np.float32)
    for dy in (0, 1):
        for dx in (0, 1):
            c = _CHANNEL_INDEX[layout[dy][dx]]
            out[dy::2, dx::2] = img.data[dy::2, dx::2, c]
    return BayerMosaic(data=out, cfa=cfa, black_level=0.0, white_level=1.0)


def add_gaussian_noise(m: BayerMosaic, cfg: NoiseConfig) -> BayerMosaic:
    """Add i.i.d. Gaussian noise; sigma is drawn uniformly from
    [sigma_min, sigma_max] once per image. Deterministic given the seed."""
    rng = np.random.default_rng(cfg.seed)
    sigma = rng.uniform(cfg.sigma_min, cfg.sigma_max)
    noisy = m.data + rng.normal(0.0, sigma, size=m.data.shape)
    from dataclasses import replace

    return replace(m, data=np.clip(noisy, 0.0, 1.0).astype(np.float32))


def _catmull_rom_weights(t):
    """Weights of the 4-tap Catmull-Rom kernel (a = -0.5) at fractional
    offset t in [0,1), for taps at offsets (-1, 0, 1, 2)."""
    t2 = t * t
    t3 = t2 * t
    w0 = -0.5 * t3 + t2 - 0.5 * t
    w1 = 1.5 * t3 - 2.5 * t2 + 1.0
    w2 = -1.5 * t3 + 2.0 * t2 + 0.5 * t
    w3 = 0.5 * t3 - 0.5 * t2
    return w0, w1, w2, w3


def _resize_axis(data, out_len, scale, axis):
    """Separable 1-D Catmull-Rom resample along `axis`, half-pixel centered,
    edge-clamped."""
    in_len = data.shape[axis]
    dst = np.arange(out_len, dtype=np.float64)
    src = (dst + 0.5) / scale - 0.5
    base = np.floor(src).astype(np.int64)
    t = src - base
    weights = _catmull_rom_weights(t)
    moved = np.moveaxis(data, axis, 0).astype(np.float64)
    out = np.zeros((out_len,) + moved.shape[1:], dtype=np.float64)
    for k, w in enumerate(weights):
        idx = np.clip(base + (k - 1), 0, in_len - 1)
        out += w.reshape((-1,) + (1,) * (moved.ndim - 1)) * moved[idx]
    return np.moveaxis(out, 0, axis)


def resize_bicubic(img: ImageBuffer, scale: float) -> ImageBuffer:
    """Catmull-Rom bicubic resize by a uniform scale factor."""
    if scale <= 0:
        raise ValueError("scale must be positive")
    out_h = int(round(img.height * scale))
    out_w = int(round(img.width * scale))
    if out_h < 1 or out_w < 1:
        raise ValueError("output dimension < 1")
    x = _resize_axis(img.data, out_h, scale, axis=0)
    x = _resize_axis(x, out_w, scale, axis=1)
    if img.space is not ColorSpace.LINEAR_RAW:
        x = np.clip(x, 0.0, 1.0)
    return ImageBuffer(data=x.astype(np.float32), space=img.space)


def synth_pair(rgb_hr: ImageBuffer, zoom: int, cfa: CfaPattern, cfg: NoiseConfig):
    """Build a (noisy low-res mosaic, high-res RGB target) training pair."""
    if zoom not in (2, 4, 8):
        raise ValueError("zoom must be 2, 4 or 8")
    if rgb_hr.height % (2 * zoom) or rgb_hr.width % (2 * zoom):
        raise ValueError("dimensions must be divisible by 2*zoom")
    low = resize_bicubic(rgb_hr, 1.0 / zoom)
    mosaic = add_gaussian_noise(mosaic_rgb(low, cfa), cfg)
    return mosaic, rgb_hr
