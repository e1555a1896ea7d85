"""Contextual (CX) and Contextual Bilateral (CoBi) losses, their pixel
gradients, match diagnostics, and a spatially pruned nearest-neighbor
search.

CX averages, over source features, the smallest cosine distance to any
target feature. CoBi augments the per-pair cost with w_s times the
Euclidean distance between the features' normalized image coordinates,
which anchors matches spatially.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .features import (
    COSINE_EPS,
    FeatureSet,
    PatchConfig,
    extract_patch_features,
    pairwise_cosine_distance,
)
from .imageio import ImageBuffer


@dataclass
class CobiConfig:
    w_s: float = 0.5
    n_rgb: int = 10
    stride: int = 1
    lam: float = 1.0
    layers: tuple = ("conv1_2", "conv2_2", "conv3_2")

    def __post_init__(self):
        if self.w_s < 0 or self.lam < 0:
            raise ValueError("w_s and lam must be >= 0")


@dataclass
class MatchResult:
    """Per-source-feature argmin over targets, with cost components."""

    indices: np.ndarray       # target index j* per source feature
    feat_dist: np.ndarray     # cosine distance at the argmin
    spatial_dist: np.ndarray  # coordinate distance at the argmin
    w_s: float

    @property
    def total(self):
        return self.feat_dist + self.w_s * self.spatial_dist


@dataclass
class UniqueMatchStats:
    unique_fraction: float
    matched_targets: int
    total_targets: int


def _check_dims(P: FeatureSet, Q: FeatureSet):
    if P.dim != Q.dim:
        raise ValueError("feature dimension mismatch: %d vs %d" % (P.dim, Q.dim))


def _spatial_distances(P: FeatureSet, Q: FeatureSet) -> np.ndarray:
    diff = P.coords[:, None, :] - Q.coords[None, :, :]
    return np.sqrt((diff ** 2).sum(axis=2))


def cobi_loss(P: FeatureSet, Q: FeatureSet, w_s: float):
    """Mean over source features of min_j (D + w_s * D'), cosine feature
    distance plus weighted coordinate distance. Ties break to the lowest
    target index. Returns (loss, MatchResult)."""
    if w_s < 0:
        raise ValueError("w_s must be >= 0")
    _check_dims(P, Q)
    fd = pairwise_cosine_distance(P.vectors, Q.vectors)
    sd = _spatial_distances(P, Q)
    total = fd + w_s * sd
    j = np.argmin(total, axis=1)
    rows = np.arange(P.count)
    match = MatchResult(indices=j, feat_dist=fd[rows, j], spatial_dist=sd[rows, j], w_s=w_s)
    return float(np.mean(total[rows, j])), match


def cx_loss(P: FeatureSet, Q: FeatureSet):
    """Spatially unaware special case: CoBi with w_s = 0."""
    return cobi_loss(P, Q, 0.0)


def match_statistics(m: MatchResult, total_targets: int) -> UniqueMatchStats:
    """Fraction of target features that receive exactly one incoming match."""
    counts = np.bincount(m.indices, minlength=total_targets)
    return UniqueMatchStats(
        unique_fraction=float((counts == 1).sum()) / total_targets,
        matched_targets=int((counts > 0).sum()),
        total_targets=total_targets,
    )


def nn_search_pruned(P: FeatureSet, Q: FeatureSet, w_s: float, window: float) -> MatchResult:
    """Bilateral nearest neighbors restricted to targets within `window`
    coordinate distance; rows with no candidate fall back to a full search.
    With window = sqrt(2) the result equals the brute-force matching."""
    if w_s <= 0:
        raise ValueError("pruned search requires w_s > 0")
    if not 0 < window <= np.sqrt(2.0) + 1e-12:
        raise ValueError("window must be in (0, sqrt(2)]")
    _check_dims(P, Q)
    sd = _spatial_distances(P, Q)
    n = P.count
    indices = np.empty(n, dtype=np.int64)
    feat_d = np.empty(n)
    spat_d = np.empty(n)
    for i in range(n):
        cand = np.nonzero(sd[i] <= window)[0]
        if cand.size == 0:
            cand = np.arange(Q.count)
        fd = pairwise_cosine_distance(P.vectors[i : i + 1], Q.vectors[cand])[0]
        tot = fd + w_s * sd[i, cand]
        k = int(np.argmin(tot))
        indices[i] = cand[k]
        feat_d[i] = fd[k]
        spat_d[i] = sd[i, cand[k]]
    return MatchResult(indices=indices, feat_dist=feat_d, spatial_dist=spat_d, w_s=w_s)


def _patch_sets(src: ImageBuffer, tgt: ImageBuffer, cfg: CobiConfig):
    pc = PatchConfig(n=cfg.n_rgb, stride=cfg.stride)
    return extract_patch_features(src, pc), extract_patch_features(tgt, pc)


def cobi_objective(src: ImageBuffer, tgt: ImageBuffer, deep_src, deep_tgt,
                   cfg: CobiConfig) -> float:
    """RGB-patch CoBi plus lam times the mean CoBi over paired deep feature
    sets (one per layer)."""
    if src.channels != tgt.channels:
        raise ValueError("channel count mismatch")
    if len(deep_src) != len(deep_tgt):
        raise ValueError("deep feature layer lists differ in length")
    P, Q = _patch_sets(src, tgt, cfg)
    value, _ = cobi_loss(P, Q, cfg.w_s)
    if deep_src and cfg.lam > 0:
        deep_terms = [cobi_loss(p, q, cfg.w_s)[0] for p, q in zip(deep_src, deep_tgt)]
        value += cfg.lam * float(np.mean(deep_terms))
    return value


def cobi_grad(src: ImageBuffer, tgt: ImageBuffer, cfg: CobiConfig):
    """Value and pixel gradient of the RGB-patch CoBi term.

    Subgradient holding each argmin fixed. The spatial term does not depend
    on pixel values, so only the cosine term contributes. Returns
    (loss, grad) with grad an H x W x C float64 array.
    """
    P, Q = _patch_sets(src, tgt, cfg)
    value, match = cobi_loss(P, Q, cfg.w_s)

    p = P.vectors
    q = Q.vectors[match.indices]
    np_ = np.linalg.norm(p, axis=1)
    nq = np.linalg.norm(q, axis=1)
    denom = np.maximum(np_ * nq, COSINE_EPS)
    s = np.einsum("ij,ij->i", p, q)
    # d/dp of (1 - p.q/(|p||q|)) at the matched q
    with np.errstate(divide="ignore", invalid="ignore"):
        g = -q / denom[:, None] + (s / np.maximum(np_ ** 2, COSINE_EPS) / denom)[:, None] * p
    g[denom <= COSINE_EPS] = 0.0
    g /= P.count

    n, stride, c = cfg.n_rgb, cfg.stride, src.channels
    h, w = src.height, src.width
    ny = (h - n) // stride + 1
    nx = (w - n) // stride + 1
    g = g.reshape(ny, nx, n, n, c)
    grad = np.zeros((h, w, c), dtype=np.float64)
    for dy in range(n):
        for dx in range(n):
            grad[dy : dy + ny * stride : stride, dx : dx + nx * stride : stride] += g[:, :, dy, dx]
    return value, grad
