"""FastAPI service wrapping the core pipeline operations.

Usage errors (bad parameters) come back as HTTP 400, data errors
(unreadable or malformed files, failed alignment) as HTTP 422, both with
an ErrorResponse body.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from .. import align as align_mod
from .. import cobi as cobi_mod
from .. import dataset_prep as dataset_mod
from .. import metrics as metrics_mod
from .. import sensor_synth as synth_mod
from .. import zoom_optimize as opt_mod
from ..features import PatchConfig, extract_patch_features, load_feature_map
from ..imageio import (
    CfaPattern,
    FormatError,
    Tensor,
    read_image,
    read_raw,
    read_ztf,
    read_ztf_header,
    write_image,
    write_raw,
    write_ztf,
)
from ..raw_pipeline import normalize_raw, pack_bayer
from . import schemas as s

app = FastAPI(title="zoomkit", version="0.1.0")


@app.exception_handler(RequestValidationError)
async def _validation_handler(request: Request, exc: RequestValidationError):
    return JSONResponse(status_code=400, content={"error": str(exc), "kind": "usage"})


@app.exception_handler(ValueError)
async def _value_handler(request: Request, exc: ValueError):
    return JSONResponse(status_code=400, content={"error": str(exc), "kind": "usage"})


@app.exception_handler(FileNotFoundError)
async def _missing_handler(request: Request, exc: FileNotFoundError):
    return JSONResponse(status_code=422, content={"error": str(exc), "kind": "data"})


@app.exception_handler(FormatError)
async def _format_handler(request: Request, exc: FormatError):
    return JSONResponse(status_code=422, content={"error": str(exc), "kind": "data"})


@app.exception_handler(align_mod.EccConvergenceError)
async def _ecc_handler(request: Request, exc: align_mod.EccConvergenceError):
    return JSONResponse(status_code=422, content={"error": str(exc), "kind": "data"})


@app.get("/health")
def health():
    return {"status": "ok"}


@app.post("/pack", response_model=s.PackResponse)
def pack(req: s.PackRequest):
    mosaic = read_raw(req.raw_path)
    if req.normalize:
        mosaic = normalize_raw(mosaic)
    packed = pack_bayer(mosaic)
    write_ztf(Tensor(dims=packed.data.shape, data=packed.data.ravel()), req.out_ztf)
    return s.PackResponse(height=packed.height, width=packed.width, cfa=packed.cfa.value)


@app.post("/synth", response_model=s.SynthResponse)
def synth(req: s.SynthRequest):
    img = read_image(req.image_path)
    cfg = synth_mod.NoiseConfig(sigma_min=req.sigma_min, sigma_max=req.sigma_max,
                                seed=req.seed)
    mosaic, target = synth_mod.synth_pair(img, req.zoom, CfaPattern(req.cfa), cfg)
    # persist as integer counts on a 16-bit scale
    from dataclasses import replace

    scaled = replace(mosaic, data=np.round(mosaic.data * 65535.0).astype(np.float32),
                     black_level=0.0, white_level=65535.0)
    write_raw(scaled, req.out_raw)
    if req.out_target:
        write_image(target, req.out_target, maxval=65535)
    return s.SynthResponse(
        mosaic_height=mosaic.height, mosaic_width=mosaic.width,
        target_height=target.height, target_width=target.width,
        sigma_range=(req.sigma_min, req.sigma_max),
    )


@app.post("/align", response_model=s.AlignResponse)
def align(req: s.AlignRequest):
    cfg = align_mod.EccConfig(pyramid_levels=req.pyramid_levels,
                              max_iters_per_level=req.max_iters_per_level,
                              eps=req.eps)
    t, rho = align_mod.ecc_align(read_image(req.src), read_image(req.dst), cfg)
    return s.AlignResponse(theta=t.theta, tx=t.tx, ty=t.ty, ecc=rho)


@app.post("/fov-match", response_model=s.FovMatchResponse)
def fov_match(req: s.FovMatchRequest):
    if req.raw:
        cropped = align_mod.match_fov(read_raw(req.path), req.f_wide, req.f_tele)
        write_raw(cropped, req.out)
    else:
        cropped = align_mod.match_fov(read_image(req.path), req.f_wide, req.f_tele)
        write_image(cropped, req.out, maxval=65535)
    return s.FovMatchResponse(height=cropped.height, width=cropped.width)


def _load_deep_sets(paths, layers):
    names = list(layers) + [""] * (len(paths) - len(layers))
    return [load_feature_map(read_ztf(p), name) for p, name in zip(paths, names)]


@app.post("/loss", response_model=s.LossResponse)
def loss(req: s.LossRequest):
    src = read_image(req.src)
    dst = read_image(req.dst)
    ws = 0.0 if req.type == "cx" else req.ws
    pc = PatchConfig(n=req.n, stride=req.stride)
    P = extract_patch_features(src, pc)
    Q = extract_patch_features(dst, pc)
    rgb_value, match = cobi_mod.cobi_loss(P, Q, ws)
    stats = cobi_mod.match_statistics(match, Q.count)
    vgg_value = None
    total = rgb_value
    if req.deep_src:
        if len(req.deep_src) != len(req.deep_tgt):
            raise ValueError("deep_src and deep_tgt must pair up")
        dsrc = _load_deep_sets(req.deep_src, req.layers)
        dtgt = _load_deep_sets(req.deep_tgt, req.layers)
        terms = [cobi_mod.cobi_loss(p, q, ws)[0] for p, q in zip(dsrc, dtgt)]
        vgg_value = float(np.mean(terms))
        total = rgb_value + req.lam * vgg_value
    if req.dump_matches:
        Path(req.dump_matches).write_text(json.dumps({
            "indices": match.indices.tolist(),
            "feat_dist": match.feat_dist.tolist(),
            "spatial_dist": match.spatial_dist.tolist(),
            "w_s": ws,
        }))
    return s.LossResponse(loss=total, rgb_loss=rgb_value, vgg_loss=vgg_value,
                          unique_fraction=stats.unique_fraction,
                          matched_targets=stats.matched_targets,
                          total_targets=stats.total_targets)


@app.post("/match-stats", response_model=s.MatchStatsResponse)
def match_stats(req: s.MatchStatsRequest):
    src = read_image(req.src)
    dst = read_image(req.dst)
    ws = 0.0 if req.type == "cx" else req.ws
    pc = PatchConfig(n=req.n, stride=req.stride)
    P = extract_patch_features(src, pc)
    Q = extract_patch_features(dst, pc)
    _, match = cobi_mod.cobi_loss(P, Q, ws)
    st = cobi_mod.match_statistics(match, Q.count)
    return s.MatchStatsResponse(unique_fraction=st.unique_fraction,
                                matched_targets=st.matched_targets,
                                total_targets=st.total_targets)


@app.post("/optimize", response_model=s.OptimizeResponse)
def optimize(req: s.OptimizeRequest):
    init = read_image(req.init)
    target = read_image(req.target)
    cfg = opt_mod.OptimizeConfig(
        steps=req.steps, step_size=req.step_size,
        loss=opt_mod.LossKind(req.loss),
        cobi=cobi_mod.CobiConfig(w_s=req.ws, n_rgb=req.n, stride=req.stride),
        seed=req.seed, init=opt_mod.InitMode(req.init_mode),
    )
    result, trace = opt_mod.optimize_image(init, target, cfg)
    write_image(result, req.out, maxval=65535)
    if req.trace_csv:
        with open(req.trace_csv, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["step", "loss"])
            writer.writerows(trace)
    return s.OptimizeResponse(final_loss=trace[-1][1], initial_loss=trace[0][1],
                              steps=len(trace))


@app.post("/metrics", response_model=s.MetricsResponse)
def metrics(req: s.MetricsRequest):
    a = metrics_mod.crop_border(read_image(req.a), req.border)
    b = metrics_mod.crop_border(read_image(req.b), req.border)
    p = metrics_mod.psnr(a, b)
    return s.MetricsResponse(psnr="inf" if p == float("inf") else p,
                             ssim=metrics_mod.ssim(a, b))


@app.post("/dataset-prep", response_model=s.DatasetPrepResponse)
def dataset_prep(req: s.DatasetPrepRequest):
    manifest = dataset_mod.prepare_dataset(req.root, req.zoom, req.out,
                                           seed=req.seed, tol=req.tol)
    ok = sum(1 for p in manifest["pairs"] if p["status"] == "ok")
    failed = len(manifest["pairs"]) - ok
    return s.DatasetPrepResponse(
        scenes=sum(len(v) for v in manifest["splits"].values()),
        pairs_ok=ok, pairs_failed=failed,
        manifest=str(Path(req.out) / "manifest.json"),
    )


@app.post("/ztf-info", response_model=s.ZtfInfoResponse)
def ztf_info(req: s.ZtfInfoRequest):
    dtype_code, dims = read_ztf_header(req.path)
    return s.ZtfInfoResponse(dtype_code=dtype_code, dims=list(dims))
