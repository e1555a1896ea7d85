"""Export VGG-19 conv1_2 / conv2_2 / conv3_2 feature maps to ZTF files.

Offline batch tool: reads one RGB image, runs the network up to each
requested layer and writes one ZTF tensor per layer plus a manifest.json
describing the preprocessing, so downstream consumers can reproduce the
coordinate grid. Inference only, always on CPU, deterministic.

ZTF layout (little endian): magic "ZTF1", u8 dtype code (1 = real32),
u8 ndim, ndim u32 dims, then the row-major float32 payload.

Activations are exported raw (no L2 normalization); consumers using
cosine distance are insensitive to per-feature scaling anyway.
"""

from __future__ import annotations

import argparse
import json
import struct
import sys
from pathlib import Path

import numpy as np
from PIL import Image

# end index (exclusive) of each layer in torchvision's vgg19().features,
# taken right after the conv, and the channel count it produces
LAYERS = {
    "conv1_2": (3, 64),
    "conv2_2": (8, 128),
    "conv3_2": (13, 256),
}

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

WEIGHTS_URL = "https://download.pytorch.org/models/vgg19-dcbb9e9d.pth"


class ExportError(RuntimeError):
    pass


def write_ztf(array: np.ndarray, path) -> None:
    """Write a float32 tensor in ZTF form."""
    arr = np.ascontiguousarray(array, dtype="<f4")
    if arr.ndim > 4:
        raise ExportError("ZTF supports at most 4 dimensions")
    with open(path, "wb") as f:
        f.write(b"ZTF1")
        f.write(struct.pack("<BB", 1, arr.ndim))
        f.write(struct.pack("<%dI" % arr.ndim, *arr.shape))
        f.write(arr.tobytes())


def load_rgb(path) -> np.ndarray:
    """Read an image as float32 HxWx3 in [0,1]; grayscale is rejected."""
    with Image.open(path) as im:
        if im.mode not in ("RGB", "RGBA"):
            raise ExportError(
                "expected a 3-channel image, got mode %r in %s" % (im.mode, path))
        arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    return arr


def build_backbone(weights: str, seed: int):
    """VGG-19 feature stack up to the deepest exported layer.

    weights is "pretrained" or "random". Random initialization is seeded
    and meant for environments without access to the weight file; the
    feature maps have the right shapes but carry no semantics.
    """
    import torch
    import torchvision

    max_index = max(end for end, _ in LAYERS.values())
    if weights == "pretrained":
        try:
            model = torchvision.models.vgg19(
                weights=torchvision.models.VGG19_Weights.IMAGENET1K_V1)
        except Exception as e:
            raise ExportError(
                "pretrained VGG-19 weights are not available (%s). "
                "Download %s and place it under %s, or rerun with "
                "--weights random for architecture-only output."
                % (e, WEIGHTS_URL, Path(torch.hub.get_dir()) / "checkpoints")
            ) from e
    elif weights == "random":
        torch.manual_seed(seed)
        model = torchvision.models.vgg19(weights=None)
    else:
        raise ExportError("unknown weights mode %r" % weights)
    backbone = model.features[:max_index].eval()
    for p in backbone.parameters():
        p.requires_grad_(False)
    return backbone


def export_features(image_path, layers, out_dir, weights="pretrained", seed=0):
    """Run the backbone and write one ZTF per requested layer.

    Returns the manifest dict (also written to out_dir/manifest.json).
    """
    import torch

    for name in layers:
        if name not in LAYERS:
            raise ExportError(
                "unknown layer %r; choose from %s" % (name, ", ".join(LAYERS)))
    img = load_rgb(image_path)
    backbone = build_backbone(weights, seed)

    mean = torch.tensor(IMAGENET_MEAN).view(3, 1, 1)
    std = torch.tensor(IMAGENET_STD).view(3, 1, 1)
    x = torch.from_numpy(img).permute(2, 0, 1)
    x = ((x - mean) / std).unsqueeze(0)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = {}
    with torch.no_grad():
        h = x
        for idx, module in enumerate(backbone):
            h = module(h)
            for name in layers:
                if LAYERS[name][0] == idx + 1:
                    fmap = h[0].numpy()
                    assert fmap.shape[0] == LAYERS[name][1]
                    path = out_dir / (name + ".ztf")
                    write_ztf(fmap, path)
                    outputs[name] = {"path": path.name,
                                     "dims": list(fmap.shape)}

    manifest = {
        "input": str(image_path),
        "layers": list(layers),
        "outputs": outputs,
        "weights": weights,
        "preprocessing": {
            "scale": "1/255",
            "mean": list(IMAGENET_MEAN),
            "std": list(IMAGENET_STD),
            "resize": None,
        },
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return manifest


def main(argv=None):
    parser = argparse.ArgumentParser(
        description="Export VGG-19 feature maps as ZTF tensors.")
    parser.add_argument("--image", required=True, help="3-channel input image")
    parser.add_argument("--layers", default="conv1_2,conv2_2,conv3_2",
                        help="comma-separated subset of %s" % ",".join(LAYERS))
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--weights", default="pretrained",
                        choices=["pretrained", "random"],
                        help="random = seeded untrained network (testing only)")
    parser.add_argument("--seed", type=int, default=0,
                        help="seed for --weights random")
    args = parser.parse_args(argv)
    layers = [s.strip() for s in args.layers.split(",") if s.strip()]
    try:
        manifest = export_features(args.image, layers, args.out,
                                   weights=args.weights, seed=args.seed)
    except (ExportError, FileNotFoundError) as e:
        print("error: %s" % e, file=sys.stderr)
        return 2
    for name, rec in manifest["outputs"].items():
        print("%s -> %s %s" % (name, rec["path"], rec["dims"]))
    return 0


if __name__ == "__main__":
    sys.exit(main())
