"""`zoomkit` command line tool.

A thin client over the service API: each subcommand builds a request,
posts it to the service and prints the JSON reply. By default the service
app runs in-process over an ASGI test transport (no server needed); pass
--server to talk to a running instance instead.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import json
import sys

import click
import httpx


def _client(server):
    if server:
        return httpx.Client(base_url=server, timeout=600.0)
    from fastapi.testclient import TestClient

    from .service.app import app

    return TestClient(app, raise_server_exceptions=False)


def _call(ctx, endpoint, payload):
    opts = ctx.obj
    if opts["verbose"]:
        click.echo("POST %s %s" % (endpoint, json.dumps(payload)), err=True)
    with _client(opts["server"]) as client:
        try:
            resp = client.post(endpoint, json=payload)
        except httpx.HTTPError as e:
            click.echo("error: %s" % e, err=True)
            sys.exit(2)
    if resp.status_code != 200:
        try:
            body = resp.json()
            message, kind = body.get("error", resp.text), body.get("kind", "data")
        except ValueError:
            message, kind = resp.text, "data"
        click.echo("error: %s" % message, err=True)
        sys.exit(1 if kind == "usage" else 2)
    body = resp.json()
    if opts["json"]:
        click.echo(json.dumps(body))
    else:
        for k, v in body.items():
            click.echo("%s: %s" % (k, v))
    return body


@click.group()
@click.option("--seed", default=0, show_default=True, help="Seed for all randomness.")
@click.option("--threads", default=0, show_default="all cores",
              help="Cap internal parallelism (0 = library default).")
@click.option("--json", "json_out", is_flag=True, help="Machine-readable JSON to stdout.")
@click.option("--verbose", is_flag=True, help="Log requests to stderr.")
@click.option("--server", default=None, help="Service URL; default runs in-process.")
@click.pass_context
def cli(ctx, seed, threads, json_out, verbose, server):
    """Computational-zoom toolchain: raw packing, pair synthesis, alignment,
    contextual losses, image-domain optimization and quality metrics."""
    if threads:
        try:
            import threadpoolctl

            threadpoolctl.threadpool_limits(threads)
        except ImportError:
            if verbose:
                click.echo("threadpoolctl not installed; --threads ignored", err=True)
    ctx.obj = {"seed": seed, "threads": threads, "json": json_out,
               "verbose": verbose, "server": server}


@cli.command()
@click.option("--raw", "raw_path", required=True, help="16-bit PGM raw frame (+ JSON sidecar).")
@click.option("--out", "out_ztf", required=True, help="Output ZTF path for the packed tensor.")
@click.option("--no-normalize", is_flag=True, help="Keep raw counts instead of [0,1].")
@click.pass_context
def pack(ctx, raw_path, out_ztf, no_normalize):
    """Normalize and pack a Bayer mosaic into a half-res 4-channel tensor."""
    _call(ctx, "/pack", {"raw_path": raw_path, "out_ztf": out_ztf,
                         "normalize": not no_normalize})


@cli.command()
@click.option("--image", required=True, help="High-resolution sRGB PPM.")
@click.option("--zoom", default=4, show_default=True, type=click.Choice(["2", "4", "8"]))
@click.option("--cfa", default="RGGB", show_default=True)
@click.option("--sigma-min", default=0.0001, show_default=True)
@click.option("--sigma-max", default=0.01, show_default=True)
@click.option("--out-raw", required=True)
@click.option("--out-target", default=None)
@click.pass_context
def synth(ctx, image, zoom, cfa, sigma_min, sigma_max, out_raw, out_target):
    """Synthesize a noisy low-res mosaic / high-res target pair."""
    _call(ctx, "/synth", {"image_path": image, "zoom": int(zoom), "cfa": cfa,
                          "sigma_min": sigma_min, "sigma_max": sigma_max,
                          "seed": ctx.obj["seed"], "out_raw": out_raw,
                          "out_target": out_target})


@cli.command()
@click.option("--src", required=True)
@click.option("--dst", required=True)
@click.option("--out", "out_path", default=None, help="Write transform JSON here too.")
@click.option("--levels", default=3, show_default=True)
@click.option("--iters", default=50, show_default=True)
@click.option("--eps", default=1e-6, show_default=True)
@click.pass_context
def align(ctx, src, dst, out_path, levels, iters, eps):
    """Estimate the Euclidean transform aligning src to dst."""
    body = _call(ctx, "/align", {"src": src, "dst": dst, "pyramid_levels": levels,
                                 "max_iters_per_level": iters, "eps": eps})
    if out_path:
        with open(out_path, "w") as f:
            json.dump(body, f)


@cli.command("fov-match")
@click.option("--path", required=True)
@click.option("--f-wide", required=True, type=float)
@click.option("--f-tele", required=True, type=float)
@click.option("--out", required=True)
@click.option("--raw", is_flag=True, help="Input is a raw mosaic (PGM + sidecar).")
@click.pass_context
def fov_match(ctx, path, f_wide, f_tele, out, raw):
    """Central crop to a longer focal length's field of view."""
    _call(ctx, "/fov-match", {"path": path, "f_wide": f_wide, "f_tele": f_tele,
                              "out": out, "raw": raw})


@cli.command()
@click.option("--type", "loss_type", default="cobi", show_default=True,
              type=click.Choice(["cx", "cobi"]))
@click.option("--src", required=True)
@click.option("--dst", required=True)
@click.option("--ws", default=0.5, show_default=True)
@click.option("--n", default=10, show_default=True)
@click.option("--stride", default=1, show_default=True)
@click.option("--lam", default=1.0, show_default=True)
@click.option("--deep-src", multiple=True, help="ZTF feature map(s) for src.")
@click.option("--deep-tgt", multiple=True, help="ZTF feature map(s) for dst.")
@click.option("--layer", "layers", multiple=True)
@click.option("--dump-matches", default=None)
@click.pass_context
def loss(ctx, loss_type, src, dst, ws, n, stride, lam, deep_src, deep_tgt,
         layers, dump_matches):
    """Evaluate CX or CoBi between two images (optionally plus deep terms)."""
    _call(ctx, "/loss", {"src": src, "dst": dst, "type": loss_type, "ws": ws,
                         "n": n, "stride": stride, "lam": lam,
                         "deep_src": list(deep_src), "deep_tgt": list(deep_tgt),
                         "layers": list(layers), "dump_matches": dump_matches})


@cli.command("match-stats")
@click.option("--type", "loss_type", default="cobi", show_default=True,
              type=click.Choice(["cx", "cobi"]))
@click.option("--src", required=True)
@click.option("--dst", required=True)
@click.option("--ws", default=0.5, show_default=True)
@click.option("--n", default=10, show_default=True)
@click.option("--stride", default=1, show_default=True)
@click.pass_context
def match_stats(ctx, loss_type, src, dst, ws, n, stride):
    """Unique-match diagnostics for the chosen matching."""
    _call(ctx, "/match-stats", {"src": src, "dst": dst, "type": loss_type,
                                "ws": ws, "n": n, "stride": stride})


@cli.command()
@click.option("--init", "init_path", required=True)
@click.option("--target", required=True)
@click.option("--loss", "loss_type", default="cobi", show_default=True,
              type=click.Choice(["l1", "cx", "cobi"]))
@click.option("--ws", default=0.5, show_default=True)
@click.option("--n", default=10, show_default=True)
@click.option("--stride", default=1, show_default=True)
@click.option("--steps", default=500, show_default=True)
@click.option("--step-size", default=0.1, show_default=True)
@click.option("--init-mode", default="bicubic", show_default=True,
              type=click.Choice(["bicubic", "copy", "noise"]))
@click.option("--out", required=True)
@click.option("--trace", "trace_csv", default=None, help="CSV of (step, loss).")
@click.pass_context
def optimize(ctx, init_path, target, loss_type, ws, n, stride, steps, step_size,
             init_mode, out, trace_csv):
    """Gradient descent on output pixels against a target image."""
    _call(ctx, "/optimize", {"init": init_path, "target": target,
                             "loss": loss_type, "ws": ws, "n": n,
                             "stride": stride, "steps": steps,
                             "step_size": step_size, "seed": ctx.obj["seed"],
                             "init_mode": init_mode, "out": out,
                             "trace_csv": trace_csv})


@cli.command()
@click.option("--a", "a_path", required=True)
@click.option("--b", "b_path", required=True)
@click.option("--border", default=0, show_default=True,
              help="Exclude an N-pixel border before computing metrics.")
@click.pass_context
def metrics(ctx, a_path, b_path, border):
    """PSNR and SSIM between two images."""
    _call(ctx, "/metrics", {"a": a_path, "b": b_path, "border": border})


@cli.command("dataset-prep")
@click.option("--root", required=True, help="Directory of per-scene capture folders.")
@click.option("--zoom", default=4, show_default=True, type=int)
@click.option("--out", required=True)
@click.option("--tol", default=0.25, show_default=True)
@click.pass_context
def dataset_prep(ctx, root, zoom, out, tol):
    """Build aligned training pairs plus manifest.json from raw captures."""
    _call(ctx, "/dataset-prep", {"root": root, "zoom": zoom, "out": out,
                                 "seed": ctx.obj["seed"], "tol": tol})


@cli.command("ztf-info")
@click.argument("path")
@click.pass_context
def ztf_info(ctx, path):
    """Print tensor dims from a ZTF header (header only, no full read)."""
    _call(ctx, "/ztf-info", {"path": path})


@cli.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
def serve(host, port):
    """Run the service with uvicorn."""
    import uvicorn

    from .service.app import app

    uvicorn.run(app, host=host, port=port)


def main(argv=None):
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.UsageError as e:
        click.echo("usage error: %s" % e.format_message(), err=True)
        return 1
    except click.ClickException as e:
        e.show()
        return 1
    except SystemExit as e:
        return int(e.code or 0)
    return 0


if __name__ == "__main__":
    sys.exit(main())
