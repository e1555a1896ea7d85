"""Computational-zoom toolchain: raw Bayer preprocessing, optical-pair
alignment, contextual / contextual-bilateral losses, sensor synthesis,
image-domain optimization, and quality metrics."""

from .imageio import (  # noqa: F401
    BayerMosaic,
    CfaPattern,
    ColorSpace,
    FormatError,
    ImageBuffer,
    Tensor,
    ZoomkitError,
)

__version__ = "0.1.0"
