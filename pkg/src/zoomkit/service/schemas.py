"""Pydantic request/response models for the zoomkit service.

All image/tensor arguments are paths on the service host; the service is
intended to run next to the data (typically on localhost, or in-process
via the CLI's default ASGI transport).
"""

from __future__ import annotations

from typing import List, Optional, Tuple

from pydantic import BaseModel, Field


class PackRequest(BaseModel):
    raw_path: str
    out_ztf: str
    normalize: bool = True


class PackResponse(BaseModel):
    height: int
    width: int
    channels: int = 4
    cfa: str


class SynthRequest(BaseModel):
    image_path: str
    zoom: int = 4
    cfa: str = "RGGB"
    sigma_min: float = 0.0001
    sigma_max: float = 0.01
    seed: int = 0
    out_raw: str
    out_target: Optional[str] = None


class SynthResponse(BaseModel):
    mosaic_height: int
    mosaic_width: int
    target_height: int
    target_width: int
    sigma_range: Tuple[float, float]


class AlignRequest(BaseModel):
    src: str
    dst: str
    pyramid_levels: int = 3
    max_iters_per_level: int = 50
    eps: float = 1e-6


class AlignResponse(BaseModel):
    theta: float
    tx: float
    ty: float
    ecc: float


class FovMatchRequest(BaseModel):
    path: str
    f_wide: float
    f_tele: float
    out: str
    raw: bool = False


class FovMatchResponse(BaseModel):
    height: int
    width: int


class LossRequest(BaseModel):
    src: str
    dst: str
    type: str = Field("cobi", pattern="^(cx|cobi)$")
    ws: float = 0.5
    n: int = 10
    stride: int = 1
    lam: float = 1.0
    deep_src: List[str] = []
    deep_tgt: List[str] = []
    layers: List[str] = []
    dump_matches: Optional[str] = None


class LossResponse(BaseModel):
    loss: float
    rgb_loss: float
    vgg_loss: Optional[float] = None
    unique_fraction: float
    matched_targets: int
    total_targets: int


class MatchStatsRequest(BaseModel):
    src: str
    dst: str
    type: str = Field("cobi", pattern="^(cx|cobi)$")
    ws: float = 0.5
    n: int = 10
    stride: int = 1


class MatchStatsResponse(BaseModel):
    unique_fraction: float
    matched_targets: int
    total_targets: int


class OptimizeRequest(BaseModel):
    init: str
    target: str
    loss: str = Field("cobi", pattern="^(l1|cx|cobi)$")
    ws: float = 0.5
    n: int = 10
    stride: int = 1
    steps: int = 500
    step_size: float = 0.1
    seed: int = 0
    init_mode: str = Field("bicubic", pattern="^(bicubic|copy|noise)$")
    out: str
    trace_csv: Optional[str] = None


class OptimizeResponse(BaseModel):
    final_loss: float
    initial_loss: float
    steps: int


class MetricsRequest(BaseModel):
    a: str
    b: str
    border: int = 0


class MetricsResponse(BaseModel):
    psnr: float | str  # "inf" when images are identical
    ssim: float


class DatasetPrepRequest(BaseModel):
    root: str
    zoom: int = 4
    out: str
    seed: int = 0
    tol: float = 0.25


class DatasetPrepResponse(BaseModel):
    scenes: int
    pairs_ok: int
    pairs_failed: int
    manifest: str


class ZtfInfoRequest(BaseModel):
    path: str


class ZtfInfoResponse(BaseModel):
    dtype_code: int
    dims: List[int]


class ErrorResponse(BaseModel):
    error: str
    kind: str  # "usage" or "data"
