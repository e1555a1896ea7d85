"""Feature spaces for contextual matching: flattened RGB patches with
normalized spatial coordinates, grids loaded from deep feature maps, and
the cosine distance."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .imageio import ImageBuffer, Tensor

COSINE_EPS = 1e-12


@dataclass
class PatchConfig:
    n: int = 10
    stride: int = 1

    def __post_init__(self):
        if self.n < 1 or self.stride < 1:
            raise ValueError("patch size and stride must be >= 1")


@dataclass
class FeatureSet:
    """N feature vectors with spatial coordinates normalized to [0,1]^2."""

    vectors: np.ndarray
    coords: np.ndarray
    source_dims: tuple = (0, 0)
    layer_name: str = ""

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.float64)
        c = np.asarray(self.coords, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 1:
            raise ValueError("vectors must be N x d with N >= 1")
        if c.shape != (v.shape[0], 2):
            raise ValueError("coords must be N x 2")
        if np.isnan(v).any() or np.isnan(c).any():
            raise ValueError("NaN in feature set")
        if c.size and (c.min() < 0 or c.max() > 1):
            raise ValueError("coords must lie in [0,1]^2")
        self.vectors = v
        self.coords = c

    @property
    def count(self):
        return self.vectors.shape[0]

    @property
    def dim(self):
        return self.vectors.shape[1]


def _norm_axis(n):
    # 1-wide axes collapse to coordinate 0
    return float(n - 1) if n > 1 else 1.0


def extract_patch_features(img: ImageBuffer, cfg: PatchConfig) -> FeatureSet:
    """Valid-position sliding n x n windows, row-major, flattened to vectors
    of dim n*n*C; coordinates are the patch-center pixel normalized by
    (W-1, H-1). Features are used as-is; see mean_shift for the shifted
    variant."""
    n, stride = cfg.n, cfg.stride
    h, w, c = img.data.shape
    if n > min(h, w):
        raise ValueError("patch larger than image")
    win = np.lib.stride_tricks.sliding_window_view(img.data, (n, n), axis=(0, 1))
    win = win[::stride, ::stride]  # (ny, nx, C, n, n)
    ny, nx = win.shape[:2]
    vectors = win.transpose(0, 1, 3, 4, 2).reshape(ny * nx, n * n * c)
    ys = (np.arange(ny) * stride + (n - 1) / 2.0) / _norm_axis(h)
    xs = (np.arange(nx) * stride + (n - 1) / 2.0) / _norm_axis(w)
    gx, gy = np.meshgrid(xs, ys)
    coords = np.stack([gx.ravel(), gy.ravel()], axis=1)
    return FeatureSet(vectors=vectors.astype(np.float64), coords=coords,
                      source_dims=(h, w))


def mean_shift(fs: FeatureSet) -> FeatureSet:
    """Subtract the per-dimension mean over the set; optional preprocessing
    some contextual-matching variants apply before cosine distance."""
    return FeatureSet(vectors=fs.vectors - fs.vectors.mean(axis=0, keepdims=True),
                      coords=fs.coords, source_dims=fs.source_dims,
                      layer_name=fs.layer_name)


def load_feature_map(t: Tensor, layer_name: str = "") -> FeatureSet:
    """Turn a [C, H, W] feature map into H*W features of dim C on the
    normalized coordinate grid."""
    if t.ndim != 3:
        raise ValueError("feature map tensor must have dims [C, H, W]")
    c, h, w = t.dims
    arr = t.as_array().astype(np.float64)
    vectors = arr.reshape(c, h * w).T
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    coords = np.stack([xs.ravel() / _norm_axis(w), ys.ravel() / _norm_axis(h)], axis=1)
    return FeatureSet(vectors=vectors, coords=coords, source_dims=(h, w),
                      layer_name=layer_name)


def cosine_distance(p, q) -> float:
    """1 - cos angle, with an epsilon guard so zero vectors map to 1."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    denom = max(float(np.linalg.norm(p) * np.linalg.norm(q)), COSINE_EPS)
    return 1.0 - float(np.dot(p, q)) / denom


def pairwise_cosine_distance(P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """N x M matrix of cosine distances with the same epsilon guard."""
    dots = P @ Q.T
    denom = np.maximum(
        np.outer(np.linalg.norm(P, axis=1), np.linalg.norm(Q, axis=1)), COSINE_EPS
    )
    return 1.0 - dots / denom
