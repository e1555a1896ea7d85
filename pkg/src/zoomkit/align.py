"""Optically-zoomed-pair preprocessing: FOV matching, scale-offset
computation, Euclidean registration by enhanced-correlation-coefficient
maximization, warping, and a misalignment synthesizer for fixtures."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import cv2
import numpy as np

from .imageio import BayerMosaic, ImageBuffer, ZoomkitError
from .raw_pipeline import crop_cfa_aligned

_LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float64)


class EccConvergenceError(ZoomkitError):
    """Registration failed to make progress on the coarsest pyramid level."""


@dataclass
class EuclideanTransform:
    """Rotation theta (radians) about the image center plus translation
    (tx, ty) in pixels: p_dst = R(theta) (p_src - c) + c + t."""

    theta: float = 0.0
    tx: float = 0.0
    ty: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.theta, self.tx, self.ty)):
            raise ValueError("transform parameters must be finite")
        if abs(self.theta) >= math.pi:
            raise ValueError("|theta| must be < pi")

    def matrix(self, width, height):
        """2x3 forward affine matrix in pixel coordinates."""
        c = np.array([(width - 1) / 2.0, (height - 1) / 2.0])
        ct, st = math.cos(self.theta), math.sin(self.theta)
        r = np.array([[ct, -st], [st, ct]])
        b = c + np.array([self.tx, self.ty]) - r @ c
        return np.hstack([r, b[:, None]])

    def inverse(self, width, height):
        m = self.matrix(width, height)
        r, b = m[:, :2], m[:, 2]
        c = np.array([(width - 1) / 2.0, (height - 1) / 2.0])
        t_inv = r.T @ (c - b) - c
        return EuclideanTransform(theta=-self.theta, tx=t_inv[0], ty=t_inv[1])


@dataclass
class EccConfig:
    pyramid_levels: int = 3
    max_iters_per_level: int = 50
    eps: float = 1e-6

    def __post_init__(self):
        if self.pyramid_levels < 1 or self.max_iters_per_level < 1 or self.eps <= 0:
            raise ValueError("invalid ECC configuration")


def match_fov(img, f_wide: float, f_tele: float):
    """Central crop to the field of view of the longer focal length.

    Crop fraction is f_wide/f_tele per axis. Mosaic crops are rounded down
    to even offsets and sizes so the CFA phase is preserved.
    """
    if not (f_tele >= f_wide > 0):
        raise ValueError("need f_tele >= f_wide > 0")
    ratio = f_wide / f_tele
    h, w = img.height, img.width
    ch = int(round(h * ratio))
    cw = int(round(w * ratio))
    if isinstance(img, BayerMosaic):
        ch -= ch % 2
        cw -= cw % 2
        y0 = (h - ch) // 2
        x0 = (w - cw) // 2
        y0 -= y0 % 2
        x0 -= x0 % 2
        if ch < 2 or cw < 2:
            raise ValueError("FOV crop smaller than 2x2")
        return crop_cfa_aligned(img, x0, y0, cw, ch)
    if ch < 2 or cw < 2:
        raise ValueError("FOV crop smaller than 2x2")
    y0 = (h - ch) // 2
    x0 = (w - cw) // 2
    return ImageBuffer(data=img.data[y0 : y0 + ch, x0 : x0 + cw].copy(), space=img.space)


def compute_scale_offset(f_in: float, f_gt: float, zoom: int) -> float:
    """Residual resampling factor when focal lengths do not exactly realize
    the target zoom: f_gt / (f_in * zoom)."""
    if f_in <= 0 or f_gt <= 0 or zoom <= 0:
        raise ValueError("focal lengths and zoom must be positive")
    return f_gt / (f_in * zoom)


def _to_luma(img: ImageBuffer) -> np.ndarray:
    if img.channels == 1:
        return img.data[:, :, 0].astype(np.float32)
    if img.channels == 3:
        return (img.data.astype(np.float64) @ _LUMA).astype(np.float32)
    raise ValueError("ECC expects 1- or 3-channel images")


def warp_euclidean(img: ImageBuffer, t: EuclideanTransform) -> ImageBuffer:
    """Apply a Euclidean transform with bilinear sampling; out-of-bounds
    reads clamp to the nearest edge pixel."""
    h, w = img.height, img.width
    inv = t.inverse(w, h).matrix(w, h)
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    src_x = inv[0, 0] * xs + inv[0, 1] * ys + inv[0, 2]
    src_y = inv[1, 0] * xs + inv[1, 1] * ys + inv[1, 2]
    x0 = np.floor(src_x).astype(np.int64)
    y0 = np.floor(src_y).astype(np.int64)
    fx = src_x - x0
    fy = src_y - y0
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    d = img.data.astype(np.float64)
    out = (
        d[y0c, x0c] * ((1 - fy) * (1 - fx))[..., None]
        + d[y0c, x1c] * ((1 - fy) * fx)[..., None]
        + d[y1c, x0c] * (fy * (1 - fx))[..., None]
        + d[y1c, x1c] * (fy * fx)[..., None]
    )
    return ImageBuffer(data=np.clip(out, 0.0, 1.0).astype(np.float32), space=img.space)


def ecc_align(src: ImageBuffer, dst: ImageBuffer, cfg: EccConfig | None = None):
    """Estimate the Euclidean transform t maximizing the enhanced
    correlation coefficient between warp_euclidean(src, t) and dst.

    Coarse-to-fine over an image pyramid. Returns (transform, ecc_value).
    The coefficient is normalized, so the estimate is invariant to affine
    intensity changes of either image.
    """
    cfg = cfg or EccConfig()
    if (src.height, src.width) != (dst.height, dst.width):
        raise ValueError("dimension mismatch between src and dst")
    a = _to_luma(src)
    b = _to_luma(dst)
    h, w = a.shape

    levels = []
    for lvl in range(cfg.pyramid_levels):
        s = 2 ** (cfg.pyramid_levels - 1 - lvl)
        if min(h, w) // s < 16:
            continue
        if s == 1:
            levels.append((a, b, 1.0))
        else:
            size = (w // s, h // s)
            levels.append(
                (
                    cv2.resize(a, size, interpolation=cv2.INTER_AREA),
                    cv2.resize(b, size, interpolation=cv2.INTER_AREA),
                    1.0 / s,
                )
            )
    if not levels:
        levels = [(a, b, 1.0)]

    criteria = (
        cv2.TERM_CRITERIA_EPS | cv2.TERM_CRITERIA_COUNT,
        cfg.max_iters_per_level,
        cfg.eps,
    )

    def run_pyramid(warp0):
        warp = warp0.copy()
        rho = -1.0
        finest_ok = False
        prev_scale = levels[0][2]
        for i, (la, lb, scale) in enumerate(levels):
            if i > 0:
                warp[:, 2] *= scale / prev_scale
            prev_scale = scale
            try:
                rho, warp = cv2.findTransformECC(
                    lb, la, warp, cv2.MOTION_EUCLIDEAN, criteria, None, 5
                )
                if i == len(levels) - 1:
                    finest_ok = True
            except cv2.error:
                # keep the estimate propagated from the coarser level
                continue
        return warp, (rho if finest_ok else -1.0)

    # ECC only converges from nearby starts, so seed it with a small grid of
    # rotations about the center plus the phase-correlation shift estimate.
    s0 = levels[0][2]
    h0, w0 = levels[0][0].shape
    cx, cy = (w0 - 1) / 2.0, (h0 - 1) / 2.0
    (pdx, pdy), _ = cv2.phaseCorrelate(a.astype(np.float64), b.astype(np.float64))
    shifts = [(0.0, 0.0), (pdx * s0, pdy * s0), (-pdx * s0, -pdy * s0)]
    best_warp = None
    best_rho = -1.0
    for th0 in (0.0, 0.035, -0.035, 0.07, -0.07):
        ct, st = math.cos(th0), math.sin(th0)
        for sdx, sdy in shifts:
            w_init = np.array(
                [
                    [ct, -st, cx - ct * cx + st * cy + sdx],
                    [st, ct, cy - st * cx - ct * cy + sdy],
                ],
                dtype=np.float32,
            )
            warp, rho = run_pyramid(w_init)
            if rho > best_rho:
                best_warp, best_rho = warp, rho
        if best_rho > 0.95:
            break
    if best_warp is None or best_rho < 0.0:
        raise EccConvergenceError("ECC made no progress on any pyramid level")
    warp, rho = best_warp, best_rho

    # cv2 semantics: template(p) ~ input(W p); with template=dst, input=src
    # the forward src->dst map is the inverse of W.
    m = np.vstack([warp.astype(np.float64), [0.0, 0.0, 1.0]])
    fwd = np.linalg.inv(m)
    theta = math.atan2(fwd[1, 0], fwd[0, 0])
    c = np.array([(w - 1) / 2.0, (h - 1) / 2.0])
    r = fwd[:2, :2]
    t = fwd[:2, 2] - c + r @ c
    return EuclideanTransform(theta=theta, tx=t[0], ty=t[1]), float(rho)


def synth_misalignment(img: ImageBuffer, t: EuclideanTransform, gains=(1.0, 1.0, 1.0)) -> ImageBuffer:
    """Warp plus per-channel gain: a deterministic stand-in for the camera
    motion and illumination changes between optical zoom settings."""
    g = np.asarray(gains, dtype=np.float64)
    if np.any(g <= 0):
        raise ValueError("gains must be positive")
    if g.shape != (img.channels,):
        if g.shape == (3,) and img.channels == 1:
            g = g[:1]
        else:
            raise ValueError("gain count must match channels")
    warped = warp_euclidean(img, t)
    out = np.clip(warped.data * g[None, None, :], 0.0, 1.0).astype(np.float32)
    return ImageBuffer(data=out, space=img.space)


def draw_misalignment(width: int, rng: np.random.Generator) -> EuclideanTransform:
    """Random transform in the band observed for full-frame pairs, scaled to
    this width: per-axis shifts of 1.1-2.3% of width plus a small rotation."""
    mag = rng.uniform(0.011 * width, 0.023 * width, size=2)
    sign = rng.choice([-1.0, 1.0], size=2)
    theta = rng.uniform(-0.01, 0.01)
    return EuclideanTransform(theta=theta, tx=mag[0] * sign[0], ty=mag[1] * sign[1])
