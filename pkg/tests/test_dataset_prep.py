import json
import math

import numpy as np
import pytest

from conftest import texture_image
from zoomkit.align import EuclideanTransform, synth_misalignment
from zoomkit.dataset_prep import (
    SceneSequence,
    TrainingPair,
    build_pair,
    crop_training_patch,
    discover_scenes,
    enumerate_pairs,
    prepare_dataset,
    split_scenes,
)
from zoomkit.imageio import (
    BayerMosaic,
    CfaPattern,
    ImageBuffer,
    write_image,
    write_raw,
)
from zoomkit.metrics import crop_border, psnr
from zoomkit.raw_pipeline import PackedRaw
from zoomkit.sensor_synth import mosaic_rgb, resize_bicubic

FOCALS = [24, 35, 50, 70, 100, 150, 240]


def _scene_stub(focals):
    return SceneSequence(scene_id="s", entries=[(f, "r", "g") for f in focals])


class TestEnumeratePairs:
    def test_zoom4_tight_tol(self):
        pairs = enumerate_pairs(_scene_stub(FOCALS), 4, tol=0.1)
        assert pairs == [(24, 100), (35, 150)]

    def test_zoom4_default_tol(self):
        pairs = enumerate_pairs(_scene_stub(FOCALS), 4, tol=0.25)
        assert (24, 100) in pairs and (35, 150) in pairs and (50, 240) in pairs
        assert len(pairs) >= 3

    def test_zoom8_needs_wide_tol(self):
        assert enumerate_pairs(_scene_stub(FOCALS), 8, tol=0.1) == []
        assert (24, 240) in enumerate_pairs(_scene_stub(FOCALS), 8, tol=0.25)

    def test_zoom2_single(self):
        assert enumerate_pairs(_scene_stub([35, 70]), 2, tol=0.1) == [(35, 70)]


class TestSplitScenes:
    def test_paper_ratio(self):
        scenes = ["scene%03d" % i for i in range(500)]
        train, val, test = split_scenes(scenes, (0.8, 0.1, 0.1), seed=7)
        assert (len(train), len(val), len(test)) == (400, 50, 50)
        assert set(train) | set(val) | set(test) == set(scenes)
        assert not (set(train) & set(val) or set(train) & set(test) or set(val) & set(test))

    def test_small(self):
        train, val, test = split_scenes(list("abcdefghij"), (0.8, 0.1, 0.1), seed=0)
        assert (len(train), len(val), len(test)) == (8, 1, 1)

    def test_deterministic(self):
        scenes = ["s%d" % i for i in range(37)]
        assert split_scenes(scenes, seed=9) == split_scenes(scenes, seed=9)

    def test_too_few_scenes(self):
        with pytest.raises(ValueError):
            split_scenes(["a", "b"], (0.8, 0.1, 0.1), seed=0)

    def test_bad_ratios(self):
        with pytest.raises(ValueError):
            split_scenes(["a", "b", "c"], (0.5, 0.2, 0.2), seed=0)


def _write_scene(scene_dir, wide, f_in, f_gt, misalign=None):
    """Wide capture at f_in plus the optically zoomed capture at f_gt,
    both derived from the same underlying image."""
    scene_dir.mkdir(parents=True, exist_ok=True)
    ratio = f_in / f_gt
    s = wide.height
    ch = int(round(s * ratio))
    ch -= ch % 2
    y0 = (s - ch) // 2
    tele = ImageBuffer(data=wide.data[y0 : y0 + ch, y0 : y0 + ch].copy(), space=wide.space)
    tele = resize_bicubic(tele, s / ch)
    if misalign is not None:
        tele = synth_misalignment(tele, misalign, (1.05, 1.0, 0.95))

    mosaic = mosaic_rgb(wide)
    counts = BayerMosaic(data=np.round(mosaic.data * 65535.0), cfa=mosaic.cfa,
                         black_level=0.0, white_level=65535.0, focal_mm=f_in)
    write_raw(counts, scene_dir / ("%gmm.pgm" % f_in))
    write_image(wide, scene_dir / ("%gmm.ppm" % f_in), maxval=65535)

    tele_mosaic = mosaic_rgb(tele)
    tele_counts = BayerMosaic(data=np.round(tele_mosaic.data * 65535.0),
                              cfa=tele_mosaic.cfa, black_level=0.0,
                              white_level=65535.0, focal_mm=f_gt)
    write_raw(tele_counts, scene_dir / ("%gmm.pgm" % f_gt))
    write_image(tele, scene_dir / ("%gmm.ppm" % f_gt), maxval=65535)
    return tele


class TestBuildPair:
    def test_shapes_and_alignment(self, tmp_path):
        wide = texture_image(256, seed=30)
        truth = EuclideanTransform(theta=0.004, tx=2.0, ty=-1.5)
        _write_scene(tmp_path / "s0", wide, 35, 140, misalign=truth)
        scenes = discover_scenes(tmp_path)
        pair = build_pair(scenes[0], 35, 140, 4)
        assert pair.input.data.shape[2] == 4
        assert pair.target.height == pair.input.height * 8
        # recovered transform close to the synthesized misalignment
        assert abs(pair.transform.theta - truth.theta) < 0.002
        assert abs(pair.transform.tx - truth.tx) < 0.5
        assert abs(pair.transform.ty - truth.ty) < 0.5

    def test_alignment_helps(self, tmp_path):
        wide = texture_image(256, seed=31)
        truth = EuclideanTransform(theta=0.0, tx=3.0, ty=2.0)
        tele_misaligned = _write_scene(tmp_path / "s0", wide, 35, 140, misalign=truth)
        scene = discover_scenes(tmp_path)[0]
        pair = build_pair(scene, 35, 140, 4)
        # ground truth for the target frame: the unshifted tele rendition
        gt_dir = tmp_path / "gt"
        gt_tele = _write_scene(gt_dir / "x", wide, 35, 140, misalign=None)
        # compare on the common center
        size = pair.target.height
        y0 = (gt_tele.height - size) // 2
        gt = ImageBuffer(data=gt_tele.data[y0 : y0 + size, y0 : y0 + size], space=gt_tele.space)
        aligned = crop_border(pair.target, 12)
        misaligned = crop_border(ImageBuffer(
            data=tele_misaligned.data[y0 : y0 + size, y0 : y0 + size],
            space=tele_misaligned.space), 12)
        gt_c = crop_border(gt, 12)
        assert psnr(aligned, gt_c) > psnr(misaligned, gt_c)

    def test_degenerate_zoom1(self, tmp_path):
        wide = texture_image(128, seed=32)
        _write_scene(tmp_path / "s0", wide, 35, 140)
        scene = discover_scenes(tmp_path)[0]
        pair = build_pair(scene, 35, 35, 1)
        assert pair.target.height == pair.input.height * 2
        inner = crop_border(pair.target, 8)
        ref = crop_border(wide, 8)
        assert psnr(inner, ref) > 40


class TestTrainingPairInvariant:
    def _pair(self, packed_size=16, zoom=4):
        packed = PackedRaw(data=np.random.default_rng(0).uniform(
            0, 1, (packed_size, packed_size, 4)).astype(np.float32), cfa=CfaPattern.RGGB)
        tgt = ImageBuffer(data=np.random.default_rng(1).uniform(
            0, 1, (packed_size * 2 * zoom, packed_size * 2 * zoom, 3)).astype(np.float32))
        return TrainingPair(input=packed, target=tgt, zoom=zoom,
                            provenance=("s", 35.0, 140.0))

    def test_dims_checked(self):
        packed = PackedRaw(data=np.zeros((16, 16, 4), dtype=np.float32), cfa=CfaPattern.RGGB)
        tgt = ImageBuffer(data=np.zeros((100, 100, 3), dtype=np.float32))
        with pytest.raises(ValueError, match="dims"):
            TrainingPair(input=packed, target=tgt, zoom=4, provenance=("s", 1, 4))

    def test_patch_geometry(self):
        pair = self._pair(16, 4)
        patch = crop_training_patch(pair, 8, seed=5)
        assert patch.input.data.shape == (8, 8, 4)
        assert patch.target.data.shape == (64, 64, 3)

    def test_patch_determinism(self):
        pair = self._pair(16, 4)
        a = crop_training_patch(pair, 8, seed=5)
        b = crop_training_patch(pair, 8, seed=5)
        assert np.array_equal(a.input.data, b.input.data)
        assert np.array_equal(a.target.data, b.target.data)

    def test_corner_correspondence(self):
        pair = self._pair(8, 2)
        patch = crop_training_patch(pair, 8, seed=0)  # only one position
        assert np.array_equal(patch.input.data, pair.input.data)
        assert np.array_equal(patch.target.data, pair.target.data)

    def test_too_small(self):
        pair = self._pair(8, 2)
        with pytest.raises(ValueError):
            crop_training_patch(pair, 9)


class TestPrepareDataset:
    def test_end_to_end(self, tmp_path):
        for i in range(3):
            _write_scene(tmp_path / "scenes" / ("scene%d" % i),
                         texture_image(128, seed=40 + i), 35, 140)
        out = tmp_path / "out"
        manifest = prepare_dataset(tmp_path / "scenes", 4, out, seed=1,
                                   ratios=(0.5, 0.25, 0.25))
        assert (out / "manifest.json").exists()
        disk = json.loads((out / "manifest.json").read_text())
        assert disk["zoom"] == 4
        ok = [p for p in disk["pairs"] if p["status"] == "ok"]
        assert len(ok) == 3
        for p in ok:
            assert (out / p["input"]).exists()
            assert (out / p["target"]).exists()
        buckets = disk["splits"]
        all_ids = buckets["train"] + buckets["val"] + buckets["test"]
        assert sorted(all_ids) == ["scene0", "scene1", "scene2"]
