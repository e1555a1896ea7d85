"""Turn per-scene focal-length sequences into aligned, FOV-matched,
scale-corrected training pairs with scene-level train/val/test splits."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .align import (
    EccConfig,
    EccConvergenceError,
    compute_scale_offset,
    ecc_align,
    match_fov,
    warp_euclidean,
)
from .imageio import (
    BayerMosaic,
    ImageBuffer,
    Tensor,
    read_image,
    read_raw,
    write_image,
    write_ztf,
)
from .raw_pipeline import PackedRaw, crop_cfa_aligned, normalize_raw, pack_bayer
from .sensor_synth import resize_bicubic

log = logging.getLogger(__name__)

VALID_ZOOMS = (1, 2, 4, 8)


@dataclass
class SceneSequence:
    """Ordered captures of one scene at strictly increasing focal lengths."""

    scene_id: str
    entries: list  # of (focal_mm, raw_path, rgb_path)

    def __post_init__(self):
        if len(self.entries) < 2:
            raise ValueError("scene needs at least 2 focal lengths")
        focals = [e[0] for e in self.entries]
        if any(b <= a for a, b in zip(focals, focals[1:])):
            raise ValueError("focal lengths must be strictly increasing")

    def entry_for(self, focal_mm):
        for e in self.entries:
            if abs(e[0] - focal_mm) < 1e-9:
                return e
        raise KeyError("no entry at %.3f mm" % focal_mm)


@dataclass
class TrainingPair:
    input: PackedRaw
    target: ImageBuffer
    zoom: int
    provenance: tuple  # (scene_id, f_in, f_gt)
    transform: object = None
    ecc: float = 0.0

    def __post_init__(self):
        th, tw = self.target.height, self.target.width
        if (th, tw) != (self.input.height * 2 * self.zoom, self.input.width * 2 * self.zoom):
            raise ValueError("target dims must be packed dims x 2 x zoom")


def enumerate_pairs(s: SceneSequence, zoom: int, tol: float = 0.25):
    """All ordered focal pairs whose ratio realizes the zoom within a
    relative tolerance on the scale offset."""
    if tol < 0:
        raise ValueError("tol must be >= 0")
    out = []
    for f_in, _, _ in s.entries:
        for f_gt, _, _ in s.entries:
            if f_gt <= f_in:
                continue
            if abs(compute_scale_offset(f_in, f_gt, zoom) - 1.0) <= tol:
                out.append((f_in, f_gt))
    return out


def _center_crop_even(m: BayerMosaic, h, w):
    y0 = (m.height - h) // 2
    x0 = (m.width - w) // 2
    return crop_cfa_aligned(m, x0 - x0 % 2, y0 - y0 % 2, w, h)


def _center_crop_image(img: ImageBuffer, h, w):
    y0 = (img.height - h) // 2
    x0 = (img.width - w) // 2
    return ImageBuffer(data=img.data[y0 : y0 + h, x0 : x0 + w].copy(), space=img.space)


def build_pair(scene: SceneSequence, f_in: float, f_gt: float, zoom: int,
               ecc_cfg: EccConfig | None = None) -> TrainingPair:
    """FOV-match the low-focal capture, register its RGB rendition against
    the zoomed-in ground truth, warp the target into the input frame, and
    resample away the residual scale offset."""
    if zoom not in VALID_ZOOMS:
        raise ValueError("zoom must be one of %s" % (VALID_ZOOMS,))
    _, raw_path, rgb_l_path = scene.entry_for(f_in)
    _, _, rgb_h_path = scene.entry_for(f_gt)
    raw_l = read_raw(raw_path)
    rgb_l = read_image(rgb_l_path)
    rgb_h = read_image(rgb_h_path)

    raw_crop = match_fov(raw_l, f_in, f_gt)
    y0 = (raw_l.height - raw_crop.height) // 2
    x0 = (raw_l.width - raw_crop.width) // 2
    y0 -= y0 % 2
    x0 -= x0 % 2
    rgb_l_crop = ImageBuffer(
        data=rgb_l.data[y0 : y0 + raw_crop.height, x0 : x0 + raw_crop.width].copy(),
        space=rgb_l.space,
    )

    offset = compute_scale_offset(f_in, f_gt, zoom)
    target = rgb_h if abs(offset - 1.0) < 1e-9 else resize_bicubic(rgb_h, 1.0 / offset)

    # final mosaic crop: largest even size whose zoomed footprint fits the target
    mh = min(raw_crop.height, (target.height // zoom) - (target.height // zoom) % 2)
    mw = min(raw_crop.width, (target.width // zoom) - (target.width // zoom) % 2)
    if mh < 2 or mw < 2:
        raise ValueError("pair too small after FOV matching")
    raw_final = _center_crop_even(raw_crop, mh, mw)
    rgb_l_final = _center_crop_image(rgb_l_crop, mh, mw)
    target = _center_crop_image(target, mh * zoom, mw * zoom)

    if zoom == 1:
        rgb_l_up = rgb_l_final
    else:
        rgb_l_up = resize_bicubic(rgb_l_final, float(zoom))
    t, rho = ecc_align(rgb_l_up, target, ecc_cfg)
    target_aligned = warp_euclidean(target, t.inverse(target.width, target.height))

    packed = pack_bayer(normalize_raw(raw_final))
    return TrainingPair(input=packed, target=target_aligned, zoom=zoom,
                        provenance=(scene.scene_id, f_in, f_gt),
                        transform=t, ecc=rho)


def split_scenes(scenes, ratios=(0.8, 0.1, 0.1), seed: int = 0):
    """Deterministic scene-level split; no scene crosses buckets. Rounded
    val/test sizes, remainder to train."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("ratios must sum to 1")
    nonzero = sum(1 for r in ratios if r > 0)
    if len(scenes) < nonzero:
        raise ValueError("fewer scenes than nonzero ratio buckets")
    order = list(scenes)
    rng = np.random.default_rng(seed)
    rng.shuffle(order)
    n = len(order)
    n_val = int(round(n * ratios[1]))
    n_test = int(round(n * ratios[2]))
    n_train = n - n_val - n_test
    return order[:n_train], order[n_train : n_train + n_val], order[n_train + n_val :]


def crop_training_patch(pair: TrainingPair, size: int, seed: int = 0) -> TrainingPair:
    """Random size x size crop of the packed input with the geometrically
    corresponding target crop (size * 2 * zoom square)."""
    ph, pw = pair.input.height, pair.input.width
    if size > min(ph, pw):
        raise ValueError("pair too small for patch size %d" % size)
    rng = np.random.default_rng(seed)
    py = int(rng.integers(0, ph - size + 1))
    px = int(rng.integers(0, pw - size + 1))
    tsize = size * 2 * pair.zoom
    ty, tx = py * 2 * pair.zoom, px * 2 * pair.zoom
    packed = PackedRaw(data=pair.input.data[py : py + size, px : px + size].copy(),
                       cfa=pair.input.cfa)
    target = ImageBuffer(data=pair.target.data[ty : ty + tsize, tx : tx + tsize].copy(),
                         space=pair.target.space)
    return TrainingPair(input=packed, target=target, zoom=pair.zoom,
                        provenance=pair.provenance, transform=pair.transform,
                        ecc=pair.ecc)


def discover_scenes(root):
    """Each subdirectory of root is a scene; every raw PGM with a sidecar
    plus a same-stem PPM forms one focal-length entry."""
    scenes = []
    for scene_dir in sorted(p for p in Path(root).iterdir() if p.is_dir()):
        entries = []
        for raw_path in sorted(scene_dir.glob("*.pgm")):
            sidecar = Path(str(raw_path) + ".json")
            rgb_path = raw_path.with_suffix(".ppm")
            if not sidecar.exists() or not rgb_path.exists():
                continue
            focal = float(json.loads(sidecar.read_text())["focal_mm"])
            entries.append((focal, str(raw_path), str(rgb_path)))
        entries.sort(key=lambda e: e[0])
        if len(entries) >= 2:
            scenes.append(SceneSequence(scene_id=scene_dir.name, entries=entries))
    return scenes


def prepare_dataset(root, zoom: int, out_dir, seed: int = 0, tol: float = 0.25,
                    ratios=(0.8, 0.1, 0.1), ecc_cfg: EccConfig | None = None):
    """Build all pairs under root and write them plus manifest.json.

    Packed inputs are stored as ZTF tensors with dims [H, W, 4]; targets as
    16-bit PPM. Alignment failures are logged and skipped.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scenes = discover_scenes(root)
    if not scenes:
        raise ValueError("no scenes found under %s" % root)
    train, val, test = split_scenes([s.scene_id for s in scenes], ratios, seed)
    bucket = {}
    for name, ids in (("train", train), ("val", val), ("test", test)):
        for sid in ids:
            bucket[sid] = name

    manifest = {"zoom": zoom, "seed": seed, "tol": tol,
                "splits": {"train": train, "val": val, "test": test},
                "pairs": []}
    for scene in scenes:
        for f_in, f_gt in enumerate_pairs(scene, zoom, tol):
            tag = "%s_%gmm_%gmm" % (scene.scene_id, f_in, f_gt)
            try:
                pair = build_pair(scene, f_in, f_gt, zoom, ecc_cfg)
            except EccConvergenceError:
                log.warning("alignment failed for %s; skipping", tag)
                manifest["pairs"].append({"scene": scene.scene_id, "f_in": f_in,
                                          "f_gt": f_gt, "status": "alignment_failed"})
                continue
            input_path = out / ("%s_input.ztf" % tag)
            target_path = out / ("%s_target.ppm" % tag)
            write_ztf(Tensor(dims=pair.input.data.shape, data=pair.input.data.ravel()),
                      input_path)
            write_image(pair.target, target_path, maxval=65535)
            manifest["pairs"].append({
                "scene": scene.scene_id, "f_in": f_in, "f_gt": f_gt,
                "status": "ok", "split": bucket[scene.scene_id],
                "input": input_path.name, "target": target_path.name,
                "cfa": pair.input.cfa.value,
                "transform": {"theta": pair.transform.theta,
                              "tx": pair.transform.tx, "ty": pair.transform.ty},
                "ecc": pair.ecc,
            })
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return manifest
