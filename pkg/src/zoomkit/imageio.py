"""Image, raw-mosaic and tensor containers plus their on-disk formats.

Images travel as binary PGM/PPM (8- or 16-bit). Raw Bayer frames are
16-bit PGM plus a JSON metadata sidecar. Feature maps use ZTF, a tiny
little-endian binary tensor format (see read_ztf/write_ztf).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

ZTF_MAGIC = b"ZTF1"
ZTF_DTYPE_REAL32 = 1


class ZoomkitError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(ZoomkitError):
    """Malformed or unsupported file contents."""


class ColorSpace(Enum):
    LINEAR_RAW = "LinearRaw"
    LINEAR_RGB = "LinearRGB"
    SRGB = "SRGB"


class CfaPattern(Enum):
    RGGB = "RGGB"
    BGGR = "BGGR"
    GRBG = "GRBG"
    GBRG = "GBRG"

    @property
    def layout(self):
        """Channel letter at each (row mod 2, col mod 2) position."""
        s = self.value
        return ((s[0], s[1]), (s[2], s[3]))


@dataclass
class ImageBuffer:
    """H x W x C planar image, float32 samples."""

    data: np.ndarray
    space: ColorSpace = ColorSpace.SRGB

    def __post_init__(self):
        a = np.asarray(self.data, dtype=np.float32)
        if a.ndim == 2:
            a = a[:, :, None]
        if a.ndim != 3 or min(a.shape) < 1:
            raise ValueError("image data must be H x W x C with all dims >= 1")
        if not np.all(np.isfinite(a)):
            raise ValueError("image contains non-finite samples")
        if self.space is not ColorSpace.LINEAR_RAW:
            if a.size and (a.min() < 0.0 or a.max() > 1.0):
                raise ValueError("samples outside [0,1] for space %s" % self.space.value)
        self.data = a

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def channels(self):
        return self.data.shape[2]


@dataclass
class BayerMosaic:
    """Single-channel raw frame with CFA pattern and capture metadata."""

    data: np.ndarray
    cfa: CfaPattern
    black_level: float
    white_level: float
    wb_gains: tuple = (1.0, 1.0, 1.0)
    focal_mm: float = 35.0

    def __post_init__(self):
        a = np.asarray(self.data, dtype=np.float32)
        if a.ndim != 2:
            raise ValueError("mosaic data must be 2-D")
        if a.shape[0] % 2 or a.shape[1] % 2:
            raise ValueError("odd dimensions: mosaic must be even in H and W")
        if not self.white_level > self.black_level:
            raise ValueError("white_level must exceed black_level")
        if any(g <= 0 for g in self.wb_gains):
            raise ValueError("wb_gains must be positive")
        if self.focal_mm <= 0:
            raise ValueError("focal_mm must be positive")
        self.data = a
        self.wb_gains = tuple(float(g) for g in self.wb_gains)

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]


@dataclass
class Tensor:
    """Row-major nd array carrier for the ZTF interchange format (ndim <= 4)."""

    dims: tuple
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        if len(self.dims) > 4 or len(self.dims) < 1:
            raise ValueError("ndim must be in 1..4")
        a = np.asarray(self.data, dtype=np.float32).reshape(-1)
        if a.size != int(np.prod(self.dims)):
            raise ValueError("payload length does not match dims product")
        self.data = a

    @property
    def ndim(self):
        return len(self.dims)

    def as_array(self):
        return self.data.reshape(self.dims)


# ---------------------------------------------------------------------------
# PNM (PGM/PPM) handling


def _read_pnm(path):
    raw = Path(path).read_bytes()
    # header tokens: magic, width, height, maxval; '#' comments allowed
    tokens = []
    i = 0
    while len(tokens) < 4:
        if i >= len(raw):
            raise FormatError("truncated header in %s" % path)
        c = raw[i : i + 1]
        if c == b"#":
            while i < len(raw) and raw[i : i + 1] != b"\n":
                i += 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < len(raw) and not raw[j : j + 1].isspace():
                j += 1
            tokens.append(raw[i:j])
            i = j
    i += 1  # single whitespace after maxval
    magic = tokens[0]
    if magic not in (b"P5", b"P6"):
        raise FormatError("unsupported magic number %r" % magic.decode("ascii", "replace"))
    width, height, maxval = (int(t) for t in tokens[1:4])
    channels = 3 if magic == b"P6" else 1
    if maxval <= 0 or maxval >= 65536:
        raise FormatError("bad maxval %d" % maxval)
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height * channels
    payload = raw[i : i + count * dtype.itemsize]
    if len(payload) != count * dtype.itemsize:
        raise FormatError("truncated payload in %s" % path)
    arr = np.frombuffer(payload, dtype=dtype).reshape(height, width, channels)
    return arr.astype(np.uint16), maxval, channels


def _write_pnm(path, arr, maxval):
    h, w, c = arr.shape
    magic = b"P6" if c == 3 else b"P5"
    header = b"%s\n%d %d\n%d\n" % (magic, w, h, maxval)
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    Path(path).write_bytes(header + arr.astype(dtype).tobytes())


def read_image(path):
    """Read an 8- or 16-bit PGM/PPM into an ImageBuffer scaled to [0,1]."""
    arr, maxval, channels = _read_pnm(path)
    data = arr.astype(np.float32) / np.float32(maxval)
    space = ColorSpace.SRGB if channels == 3 else ColorSpace.LINEAR_RGB
    return ImageBuffer(data=data, space=space)


def write_image(img, path, maxval=255):
    """Write an ImageBuffer; samples are clamped to [0,1] then quantized
    round-half-up."""
    if img.channels not in (1, 3):
        raise ValueError("PNM supports 1 or 3 channels, got %d" % img.channels)
    x = np.clip(img.data.astype(np.float64), 0.0, 1.0)
    q = np.floor(x * maxval + 0.5).astype(np.uint32)
    _write_pnm(path, np.minimum(q, maxval), maxval)


# ---------------------------------------------------------------------------
# Raw mosaic + sidecar


def _sidecar_path(path):
    return Path(str(path) + ".json")


def read_raw(path):
    """Read a 16-bit PGM raw frame and its JSON metadata sidecar.

    Sample values are preserved exactly; no normalization happens here.
    """
    sidecar = _sidecar_path(path)
    if not sidecar.exists():
        raise FormatError("missing sidecar %s" % sidecar)
    meta = json.loads(sidecar.read_text())
    arr, maxval, channels = _read_pnm(path)
    if channels != 1:
        raise FormatError("raw frame must be single-channel PGM")
    if maxval != 65535:
        raise FormatError("raw PGM maxval must be 65535, got %d" % maxval)
    try:
        cfa = CfaPattern(meta["cfa"])
    except (KeyError, ValueError):
        raise FormatError("unknown or missing cfa in sidecar %s" % sidecar)
    return BayerMosaic(
        data=arr[:, :, 0].astype(np.float32),
        cfa=cfa,
        black_level=float(meta["black_level"]),
        white_level=float(meta["white_level"]),
        wb_gains=tuple(meta.get("wb_gains", (1.0, 1.0, 1.0))),
        focal_mm=float(meta.get("focal_mm", 35.0)),
    )


def write_raw(mosaic, path):
    """Write a raw frame as 16-bit PGM plus its JSON sidecar.

    Sample values must already be integral (raw sensor counts)."""
    vals = np.round(mosaic.data).astype(np.uint16)
    _write_pnm(path, vals[:, :, None], 65535)
    meta = {
        "cfa": mosaic.cfa.value,
        "black_level": mosaic.black_level,
        "white_level": mosaic.white_level,
        "wb_gains": list(mosaic.wb_gains),
        "focal_mm": mosaic.focal_mm,
    }
    _sidecar_path(path).write_text(json.dumps(meta, indent=2))


# ---------------------------------------------------------------------------
# ZTF tensor interchange


def write_ztf(t, path):
    """ZTF layout: magic "ZTF1", u8 dtype (1 = real32), u8 ndim,
    ndim x u32 dims (LE), then row-major float32 payload (LE)."""
    header = ZTF_MAGIC + struct.pack("<BB", ZTF_DTYPE_REAL32, t.ndim)
    header += struct.pack("<%dI" % t.ndim, *t.dims)
    Path(path).write_bytes(header + t.data.astype("<f4").tobytes())


def read_ztf(path):
    raw = Path(path).read_bytes()
    if raw[:4] != ZTF_MAGIC:
        raise FormatError("bad magic")
    if len(raw) < 6:
        raise FormatError("truncated header")
    dtype_code, ndim = struct.unpack("<BB", raw[4:6])
    if dtype_code != ZTF_DTYPE_REAL32:
        raise FormatError("unsupported dtype code %d" % dtype_code)
    if ndim < 1 or ndim > 4:
        raise FormatError("ndim out of range: %d" % ndim)
    off = 6 + 4 * ndim
    dims = struct.unpack("<%dI" % ndim, raw[6:off])
    count = int(np.prod(dims))
    payload = raw[off:]
    if len(payload) != 4 * count:
        raise FormatError("dims product does not match payload length")
    return Tensor(dims=dims, data=np.frombuffer(payload, dtype="<f4").copy())


def read_ztf_header(path):
    """Parse only the ZTF header; returns (dtype_code, dims)."""
    with open(path, "rb") as f:
        head = f.read(6)
        if head[:4] != ZTF_MAGIC:
            raise FormatError("bad magic")
        dtype_code, ndim = struct.unpack("<BB", head[4:6])
        if ndim < 1 or ndim > 4:
            raise FormatError("ndim out of range: %d" % ndim)
        dims = struct.unpack("<%dI" % ndim, f.read(4 * ndim))
    return dtype_code, dims


__all__ = [
    "ZoomkitError",
    "FormatError",
    "ColorSpace",
    "CfaPattern",
    "ImageBuffer",
    "BayerMosaic",
    "Tensor",
    "read_image",
    "write_image",
    "read_raw",
    "write_raw",
    "read_ztf",
    "write_ztf",
    "read_ztf_header",
    "replace",
]
