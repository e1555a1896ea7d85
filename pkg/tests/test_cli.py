import json

import numpy as np
import pytest
from click.testing import CliRunner

from conftest import texture_image
from zoomkit.cli import cli, main
from zoomkit.imageio import Tensor, write_image, write_ztf


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def images(tmp_path):
    pa, pb = tmp_path / "a.ppm", tmp_path / "b.ppm"
    write_image(texture_image(32, seed=60), pa, maxval=65535)
    write_image(texture_image(32, seed=61), pb, maxval=65535)
    return str(pa), str(pb)


class TestExitCodes:
    def test_success(self, runner, images):
        a, b = images
        result = runner.invoke(cli, ["metrics", "--a", a, "--b", b])
        assert result.exit_code == 0

    def test_usage_error_from_click(self):
        # unknown option never reaches the service
        assert main(["metrics", "--bogus"]) == 1

    def test_usage_error_from_service(self, runner, images, tmp_path):
        a, _ = images
        big = tmp_path / "big.ppm"
        write_image(texture_image(64, seed=62), big, maxval=65535)
        result = runner.invoke(cli, ["align", "--src", a, "--dst", str(big)])
        assert result.exit_code == 1

    def test_data_error(self, runner, tmp_path):
        result = runner.invoke(cli, [
            "metrics", "--a", str(tmp_path / "missing.ppm"),
            "--b", str(tmp_path / "missing.ppm")])
        assert result.exit_code == 2
        assert "error" in result.output or result.exit_code == 2


class TestMetricsCommand:
    def test_identical_json(self, runner, images):
        a, _ = images
        result = runner.invoke(cli, ["--json", "metrics", "--a", a, "--b", a])
        assert result.exit_code == 0
        body = json.loads(result.output)
        assert body == {"psnr": "inf", "ssim": 1.0}

    def test_plain_output(self, runner, images):
        a, b = images
        result = runner.invoke(cli, ["metrics", "--a", a, "--b", b])
        assert result.exit_code == 0
        assert "psnr:" in result.output and "ssim:" in result.output


class TestLossCommand:
    def test_cx_matches_cobi_ws_zero(self, runner, images):
        a, b = images
        base = ["--json", "loss", "--src", a, "--dst", b, "--n", "5",
                "--stride", "2"]
        r1 = runner.invoke(cli, base + ["--type", "cx"])
        r2 = runner.invoke(cli, base + ["--type", "cobi", "--ws", "0"])
        assert r1.exit_code == 0 and r2.exit_code == 0
        assert json.loads(r1.output)["loss"] == json.loads(r2.output)["loss"]

    def test_match_stats(self, runner, images):
        a, b = images
        result = runner.invoke(cli, ["--json", "match-stats", "--src", a,
                                     "--dst", b, "--n", "5", "--stride", "2"])
        assert result.exit_code == 0
        body = json.loads(result.output)
        assert 0.0 <= body["unique_fraction"] <= 1.0


class TestZtfInfoCommand:
    def test_header_only(self, runner, tmp_path):
        data = np.zeros((2, 3, 4, 5), dtype=np.float32)
        p = tmp_path / "t.ztf"
        write_ztf(Tensor(dims=data.shape, data=data.ravel()), p)
        result = runner.invoke(cli, ["--json", "ztf-info", str(p)])
        assert result.exit_code == 0
        assert json.loads(result.output)["dims"] == [2, 3, 4, 5]

    def test_corrupt(self, runner, tmp_path):
        p = tmp_path / "bad.ztf"
        p.write_bytes(b"\x00" * 16)
        result = runner.invoke(cli, ["ztf-info", str(p)])
        assert result.exit_code == 2


class TestSynthAndPackPipeline:
    def test_synth_then_pack(self, runner, tmp_path):
        src = tmp_path / "hi.ppm"
        write_image(texture_image(64, seed=63), src, maxval=65535)
        raw = tmp_path / "lo.pgm"
        r1 = runner.invoke(cli, ["--seed", "2", "synth", "--image", str(src),
                                 "--zoom", "4", "--out-raw", str(raw)])
        assert r1.exit_code == 0
        ztf = tmp_path / "packed.ztf"
        r2 = runner.invoke(cli, ["--json", "pack", "--raw", str(raw),
                                 "--out", str(ztf)])
        assert r2.exit_code == 0
        body = json.loads(r2.output)
        # 64 -> 16px mosaic -> 8px packed
        assert (body["height"], body["width"]) == (8, 8)
        r3 = runner.invoke(cli, ["--json", "ztf-info", str(ztf)])
        assert json.loads(r3.output)["dims"] == [8, 8, 4]


class TestOptimizeCommand:
    def test_writes_output_and_trace(self, runner, tmp_path):
        pi, pt = tmp_path / "i.ppm", tmp_path / "t.ppm"
        write_image(texture_image(16, seed=64), pi, maxval=65535)
        write_image(texture_image(16, seed=65), pt, maxval=65535)
        out = tmp_path / "o.ppm"
        trace = tmp_path / "trace.csv"
        result = runner.invoke(cli, [
            "--json", "optimize", "--init", str(pi), "--target", str(pt),
            "--loss", "l1", "--steps", "20", "--init-mode", "copy",
            "--out", str(out), "--trace", str(trace)])
        assert result.exit_code == 0
        body = json.loads(result.output)
        assert body["final_loss"] < body["initial_loss"]
        assert out.exists() and trace.exists()


class TestVerbose:
    def test_request_logged_to_stderr(self, runner, images):
        a, _ = images
        result = runner.invoke(cli, ["--verbose", "metrics", "--a", a, "--b", a],
                               catch_exceptions=False)
        assert result.exit_code == 0
        assert "POST /metrics" in result.output
