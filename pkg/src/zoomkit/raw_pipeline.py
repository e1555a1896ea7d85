"""Raw-domain preprocessing: black-level normalization, CFA-aligned crops,
2x2 block packing, white balance and sRGB gamma."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .imageio import BayerMosaic, CfaPattern, ColorSpace, ImageBuffer


@dataclass
class PackedRaw:
    """Half-resolution 4-channel rearrangement of a Bayer mosaic.

    Channel order is positional: (top-left, top-right, bottom-left,
    bottom-right) of each 2x2 block. Color identity comes from `cfa`.
    """

    data: np.ndarray
    cfa: CfaPattern

    def __post_init__(self):
        a = np.asarray(self.data, dtype=np.float32)
        if a.ndim != 3 or a.shape[2] != 4:
            raise ValueError("packed raw must be H x W x 4")
        self.data = a

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]


def normalize_raw(m: BayerMosaic) -> BayerMosaic:
    """Subtract the black level, scale to [0,1] and clamp."""
    scale = m.white_level - m.black_level
    out = np.clip((m.data - m.black_level) / scale, 0.0, 1.0).astype(np.float32)
    return replace(m, data=out, black_level=0.0, white_level=1.0)


def pack_bayer(m: BayerMosaic) -> PackedRaw:
    """Pack each 2x2 block into 4 channels; halves H and W losslessly."""
    d = m.data
    packed = np.stack(
        [d[0::2, 0::2], d[0::2, 1::2], d[1::2, 0::2], d[1::2, 1::2]], axis=2
    )
    return PackedRaw(data=packed, cfa=m.cfa)


def unpack_bayer(p: PackedRaw, black_level=0.0, white_level=1.0,
                 wb_gains=(1.0, 1.0, 1.0), focal_mm=35.0) -> BayerMosaic:
    """Exact inverse of pack_bayer."""
    h, w = p.height * 2, p.width * 2
    out = np.empty((h, w), dtype=np.float32)
    out[0::2, 0::2] = p.data[:, :, 0]
    out[0::2, 1::2] = p.data[:, :, 1]
    out[1::2, 0::2] = p.data[:, :, 2]
    out[1::2, 1::2] = p.data[:, :, 3]
    return BayerMosaic(data=out, cfa=p.cfa, black_level=black_level,
                       white_level=white_level, wb_gains=wb_gains,
                       focal_mm=focal_mm)


def crop_cfa_aligned(m: BayerMosaic, x0: int, y0: int, w: int, h: int) -> BayerMosaic:
    """Crop a mosaic without shifting CFA phase; all arguments must be even."""
    for name, v in (("x0", x0), ("y0", y0), ("w", w), ("h", h)):
        if v % 2:
            raise ValueError("odd %s would shift CFA phase" % name)
    if x0 < 0 or y0 < 0 or x0 + w > m.width or y0 + h > m.height:
        raise ValueError("crop out of bounds")
    return replace(m, data=m.data[y0 : y0 + h, x0 : x0 + w].copy())


def apply_white_balance(img: ImageBuffer, gains) -> ImageBuffer:
    """Per-channel multiply by (r,g,b) gains, clamped to [0,1]."""
    if img.channels != 3:
        raise ValueError("white balance requires a 3-channel image")
    g = np.asarray(gains, dtype=np.float32)
    if g.shape != (3,) or np.any(g <= 0):
        raise ValueError("gains must be 3 positive values")
    out = np.clip(img.data * g[None, None, :], 0.0, 1.0).astype(np.float32)
    return ImageBuffer(data=out, space=img.space)


_SRGB_KNEE_LINEAR = 0.0031308
_SRGB_KNEE_ENCODED = 0.04045


def linear_to_srgb(img: ImageBuffer) -> ImageBuffer:
    x = img.data.astype(np.float64)
    lo = x <= _SRGB_KNEE_LINEAR
    out = np.where(lo, 12.92 * x, 1.055 * np.power(np.maximum(x, 1e-12), 1 / 2.4) - 0.055)
    return ImageBuffer(data=out.astype(np.float32), space=ColorSpace.SRGB)


def srgb_to_linear(img: ImageBuffer) -> ImageBuffer:
    x = img.data.astype(np.float64)
    lo = x <= _SRGB_KNEE_ENCODED
    out = np.where(lo, x / 12.92, np.power((x + 0.055) / 1.055, 2.4))
    return ImageBuffer(data=out.astype(np.float32), space=ColorSpace.LINEAR_RGB)
