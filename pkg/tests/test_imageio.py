import json

import numpy as np
import pytest

from zoomkit.imageio import (
    BayerMosaic,
    CfaPattern,
    ColorSpace,
    FormatError,
    ImageBuffer,
    Tensor,
    read_image,
    read_raw,
    read_ztf,
    read_ztf_header,
    write_image,
    write_raw,
    write_ztf,
)


def _write_pgm16(path, arr):
    h, w = arr.shape
    path.write_bytes(b"P5\n%d %d\n65535\n" % (w, h) + arr.astype(">u2").tobytes())


def _sidecar(path, **extra):
    meta = {"cfa": "RGGB", "black_level": 512, "white_level": 16383,
            "wb_gains": [2.0, 1.0, 1.5], "focal_mm": 35.0}
    meta.update(extra)
    (path.parent / (path.name + ".json")).write_text(json.dumps(meta))


class TestReadRaw:
    def test_lossless_read(self, tmp_path):
        p = tmp_path / "frame.pgm"
        _write_pgm16(p, np.array([[512, 600], [600, 700]], dtype=np.uint16))
        _sidecar(p)
        m = read_raw(p)
        assert m.data.tolist() == [[512.0, 600.0], [600.0, 700.0]]
        assert m.cfa is CfaPattern.RGGB
        assert m.black_level == 512 and m.white_level == 16383
        assert m.wb_gains == (2.0, 1.0, 1.5)

    def test_odd_dimensions_rejected(self, tmp_path):
        p = tmp_path / "odd.pgm"
        _write_pgm16(p, np.zeros((3, 4), dtype=np.uint16))
        _sidecar(p)
        with pytest.raises(ValueError, match="odd dimensions"):
            read_raw(p)

    def test_missing_sidecar(self, tmp_path):
        p = tmp_path / "frame.pgm"
        _write_pgm16(p, np.zeros((2, 2), dtype=np.uint16))
        with pytest.raises(FormatError, match="sidecar"):
            read_raw(p)

    def test_unknown_cfa(self, tmp_path):
        p = tmp_path / "frame.pgm"
        _write_pgm16(p, np.zeros((2, 2), dtype=np.uint16))
        _sidecar(p, cfa="XYZW")
        with pytest.raises(FormatError, match="cfa"):
            read_raw(p)

    def test_wrong_maxval(self, tmp_path):
        p = tmp_path / "frame.pgm"
        p.write_bytes(b"P5\n2 2\n255\n" + bytes(4))
        _sidecar(p)
        with pytest.raises(FormatError, match="maxval"):
            read_raw(p)

    def test_roundtrip_bit_identical(self, tmp_path, rng):
        data = rng.integers(0, 4096, size=(64, 64)).astype(np.float32)
        m = BayerMosaic(data=data, cfa=CfaPattern.GRBG, black_level=64,
                        white_level=4095, wb_gains=(1.9, 1.0, 1.4), focal_mm=70.0)
        p1 = tmp_path / "a.pgm"
        p2 = tmp_path / "b.pgm"
        write_raw(m, p1)
        write_raw(read_raw(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()


class TestReadWriteImage:
    def test_maxval_scaling(self, tmp_path):
        p = tmp_path / "img.ppm"
        p.write_bytes(b"P6\n1 2\n255\n" + bytes([255, 255, 255, 128, 128, 128]))
        img = read_image(p)
        assert img.data[0, 0, 0] == 1.0
        assert img.data[1, 0, 0] == pytest.approx(128 / 255)
        assert img.space is ColorSpace.SRGB

    def test_roundtrip_8bit(self, tmp_path, rng):
        payload = rng.integers(0, 256, size=5 * 4 * 3, dtype=np.uint8).tobytes()
        p1 = tmp_path / "a.ppm"
        p1.write_bytes(b"P6\n4 5\n255\n" + payload)
        p2 = tmp_path / "b.ppm"
        write_image(read_image(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_roundtrip_16bit(self, tmp_path, rng):
        img = ImageBuffer(data=rng.uniform(0, 1, (6, 7, 3)).astype(np.float32))
        p1 = tmp_path / "a.ppm"
        p2 = tmp_path / "b.ppm"
        write_image(img, p1, maxval=65535)
        write_image(read_image(p1), p2, maxval=65535)
        assert p1.read_bytes() == p2.read_bytes()

    def test_round_half_up(self, tmp_path):
        img = ImageBuffer(data=np.full((1, 1, 1), 0.5 / 255 * 1.0, dtype=np.float32),
                          space=ColorSpace.LINEAR_RGB)
        # 0.5/255 * 255 = 0.5 exactly -> rounds up to 1
        p = tmp_path / "x.pgm"
        write_image(img, p)
        assert p.read_bytes().endswith(b"\x01")

    def test_unsupported_magic(self, tmp_path):
        p = tmp_path / "img.pbm"
        p.write_bytes(b"P4\n4 4\n" + bytes(2))
        with pytest.raises(FormatError, match="magic"):
            read_image(p)

    def test_truncated_payload(self, tmp_path):
        p = tmp_path / "img.ppm"
        p.write_bytes(b"P6\n4 4\n255\n" + bytes(10))
        with pytest.raises(FormatError, match="truncated"):
            read_image(p)

    def test_read_output_in_unit_range(self, tmp_path, rng):
        payload = rng.integers(0, 256, size=3 * 3 * 3, dtype=np.uint8).tobytes()
        p = tmp_path / "a.ppm"
        p.write_bytes(b"P6\n3 3\n255\n" + payload)
        img = read_image(p)
        assert img.data.min() >= 0.0 and img.data.max() <= 1.0


class TestZtf:
    def test_file_size_arithmetic(self, tmp_path):
        t = Tensor(dims=(2, 2), data=np.array([1, 2, 3, 4], dtype=np.float32))
        p = tmp_path / "t.ztf"
        write_ztf(t, p)
        assert p.stat().st_size == 4 + 1 + 1 + 8 + 16

    def test_roundtrip(self, tmp_path, rng):
        for dims in [(5,), (3, 4), (2, 3, 4), (2, 2, 2, 2)]:
            t = Tensor(dims=dims, data=rng.normal(size=int(np.prod(dims))).astype(np.float32))
            p = tmp_path / "t.ztf"
            write_ztf(t, p)
            back = read_ztf(p)
            assert back.dims == t.dims
            assert np.array_equal(back.data, t.data)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "t.ztf"
        p.write_bytes(b"ZTF2" + bytes(10))
        with pytest.raises(FormatError, match="bad magic"):
            read_ztf(p)

    def test_bad_dtype(self, tmp_path):
        p = tmp_path / "t.ztf"
        p.write_bytes(b"ZTF1" + bytes([2, 1]) + (1).to_bytes(4, "little") + bytes(4))
        with pytest.raises(FormatError, match="dtype"):
            read_ztf(p)

    def test_payload_mismatch(self, tmp_path):
        p = tmp_path / "t.ztf"
        p.write_bytes(b"ZTF1" + bytes([1, 1]) + (3).to_bytes(4, "little") + bytes(8))
        with pytest.raises(FormatError, match="payload"):
            read_ztf(p)

    def test_header_only(self, tmp_path):
        t = Tensor(dims=(4, 5, 6), data=np.zeros(120, dtype=np.float32))
        p = tmp_path / "t.ztf"
        write_ztf(t, p)
        dtype_code, dims = read_ztf_header(p)
        assert dtype_code == 1 and dims == (4, 5, 6)


class TestInvariants:
    def test_image_buffer_range_checked(self):
        with pytest.raises(ValueError):
            ImageBuffer(data=np.full((2, 2, 1), 1.5, dtype=np.float32))

    def test_raw_space_allows_sensor_scale(self):
        img = ImageBuffer(data=np.full((2, 2, 1), 900.0, dtype=np.float32),
                          space=ColorSpace.LINEAR_RAW)
        assert img.data.max() == 900.0

    def test_mosaic_invariants(self):
        with pytest.raises(ValueError):
            BayerMosaic(data=np.zeros((2, 2)), cfa=CfaPattern.RGGB,
                        black_level=100, white_level=100)
        with pytest.raises(ValueError):
            BayerMosaic(data=np.zeros((2, 2)), cfa=CfaPattern.RGGB,
                        black_level=0, white_level=1, wb_gains=(0, 1, 1))
