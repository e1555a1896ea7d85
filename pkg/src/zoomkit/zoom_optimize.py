"""Direct optimization of output pixels against a (possibly misaligned)
target, used to contrast pixel-wise and contextual-bilateral objectives."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .cobi import CobiConfig, cobi_grad
from .imageio import ColorSpace, ImageBuffer, ZoomkitError
from .sensor_synth import resize_bicubic


class LossKind(Enum):
    L1 = "l1"
    CX = "cx"
    COBI = "cobi"


class InitMode(Enum):
    BICUBIC_UPSAMPLE = "bicubic"
    COPY = "copy"
    NOISE = "noise"


class DivergenceError(ZoomkitError):
    def __init__(self, trace):
        super().__init__("optimization diverged (non-finite loss)")
        self.trace = trace


@dataclass
class OptimizeConfig:
    steps: int = 500
    step_size: float = 0.1
    loss: LossKind = LossKind.COBI
    cobi: CobiConfig = field(default_factory=CobiConfig)
    seed: int = 0
    init: InitMode = InitMode.BICUBIC_UPSAMPLE
    momentum: float = 0.9

    def __post_init__(self):
        if self.steps < 1 or self.step_size <= 0:
            raise ValueError("steps >= 1 and step_size > 0 required")


def _initialize(init_src: ImageBuffer, target: ImageBuffer, cfg: OptimizeConfig):
    if cfg.init is InitMode.BICUBIC_UPSAMPLE:
        if (init_src.height, init_src.width) != (target.height, target.width):
            scale = target.height / init_src.height
            if abs(scale - target.width / init_src.width) > 1e-9:
                raise ValueError("init and target aspect ratios differ")
            return resize_bicubic(init_src, scale)
        return init_src
    if cfg.init is InitMode.COPY:
        if init_src.data.shape != target.data.shape:
            raise ValueError("copy init requires matching shapes")
        return init_src
    rng = np.random.default_rng(cfg.seed)
    return ImageBuffer(
        data=rng.uniform(0, 1, size=target.data.shape).astype(np.float32),
        space=target.space,
    )


def _loss_and_grad(x: np.ndarray, target: ImageBuffer, cfg: OptimizeConfig):
    if cfg.loss is LossKind.L1:
        d = x - target.data.astype(np.float64)
        return float(np.mean(np.abs(d))), np.sign(d) / d.size
    cobi_cfg = cfg.cobi
    if cfg.loss is LossKind.CX:
        cobi_cfg = CobiConfig(w_s=0.0, n_rgb=cobi_cfg.n_rgb, stride=cobi_cfg.stride,
                              lam=cobi_cfg.lam, layers=cobi_cfg.layers)
    img = ImageBuffer(data=np.clip(x, 0.0, 1.0).astype(np.float32), space=target.space)
    return cobi_grad(img, target, cobi_cfg)


def optimize_image(init_src: ImageBuffer, target: ImageBuffer, cfg: OptimizeConfig):
    """Momentum gradient descent on pixel values, clamped to [0,1] each
    step. Returns (result image, trace) with trace a list of (step, loss).
    Deterministic given the config and seed."""
    current = _initialize(init_src, target, cfg)
    if current.data.shape != target.data.shape:
        raise ValueError("initialized image does not match target shape")
    x = current.data.astype(np.float64)
    v = np.zeros_like(x)
    trace = []
    for step in range(cfg.steps):
        loss, grad = _loss_and_grad(x, target, cfg)
        trace.append((step, loss))
        if not np.isfinite(loss):
            raise DivergenceError(trace)
        v = cfg.momentum * v + grad
        x = np.clip(x - cfg.step_size * v, 0.0, 1.0)
    result = ImageBuffer(data=x.astype(np.float32), space=target.space)
    return result, trace
