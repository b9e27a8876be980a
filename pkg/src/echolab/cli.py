"""Batch front door: filter, echo, compress, reconstruct, and report verbs.

Exit codes: 0 on success, 1 on usage errors (unknown flags, missing files
named on the command line, invalid parameter combinations), 2 on runtime
failures (solver breakdown, malformed input files). All randomised verbs
are deterministic under --seed.
"""

import argparse
import os
import sys

import numpy as np

from . import compression
from .echo import EchoRequest, echo_for_request
from .errors import EchoLabError
from .filters import build_smoothing_filter, diffusivity_from_name
from .grid import (
    Image,
    mark_location,
    read_mask,
    read_pgm,
    rescale_for_display,
    write_csv_vector,
    write_pgm,
    write_ppm,
)
from .inpainting import InpaintConfig, cumulative_echo_set, inpaint
from .osmosis import OsmosisConfig, drift_from_guidance, osmosis_evolve, steady_state_echo_check
from .opticflow import (
    FlowConfig,
    assemble_flow_system,
    flow_to_csv,
    frame_derivatives,
    solve_flow,
    write_flow_ppm,
)

RESCALE_MODES = {"joint": "joint-linear", "per": "per-image-linear", "log": "logarithmic"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_filter_flags(p):
    p.add_argument("--method", default="hd", help="hd | nld | eed | bilateral | nlmeans")
    p.add_argument("--diffusivity", default="charbonnier")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--tau", type=float, default=5.0)
    p.add_argument("--time", type=float, default=None, help="stopping time (steps = time/tau)")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--sigma-t", dest="sigma_t", type=float, default=30.0)
    p.add_argument("--sigma-s", dest="sigma_s", type=float, default=10.0)
    p.add_argument("--window-radius", type=int, default=0)
    p.add_argument("--patch-radius", type=int, default=3)
    p.add_argument("--search-radius", type=int, default=0)


def _filter_params(args):
    return {
        "method": args.method,
        "diffusivity": args.diffusivity,
        "lambda": args.lam,
        "sigma": args.sigma,
        "tau": args.tau,
        "time": args.time,
        "steps": args.steps,
        "sigma_t": args.sigma_t,
        "sigma_s": args.sigma_s,
        "window_radius": args.window_radius,
        "patch_radius": args.patch_radius,
        "search_radius": args.search_radius,
    }


def _build_parser():
    parser = _Parser(prog="echolab", description=__doc__)
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("filter", help="apply a smoothing filter")
    _add_filter_flags(p)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("echo", help="extract one source/drain echo")
    _add_filter_flags(p)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--direction", choices=["source", "drain"], default="source")
    p.add_argument("--x", type=int, required=True)
    p.add_argument("--y", type=int, required=True)
    p.add_argument("--rescale", choices=sorted(RESCALE_MODES), default="per")
    p.add_argument("--mark", action="store_true", help="write a PPM with a red marker dot")

    p = sub.add_parser("cumulative", help="sum of source echoes over a pixel set")
    _add_filter_flags(p)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--pixels", required=True, help='semicolon list "x,y;x,y;..."')
    p.add_argument("--rescale", choices=sorted(RESCALE_MODES), default="per")

    p = sub.add_parser("inpaint", help="diffusion-based inpainting from a mask")
    p.add_argument("--operator", choices=["homogeneous", "nld", "eed"], default="homogeneous")
    p.add_argument("--diffusivity", default="charbonnier")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--mode", choices=["parabolic", "elliptic_kacanov"], default="parabolic")
    p.add_argument("--tolerance", type=float, default=1e-8)
    p.add_argument("--max-outer", type=int, default=200)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--echo", default=None, help='source echo location "x,y" to export')
    p.add_argument("--echo-out", default=None)
    p.add_argument("--cumulative", default=None, help='mask pixel list "x,y;x,y" to export')
    p.add_argument("--cumulative-out", default=None)
    p.add_argument("--rescale", choices=sorted(RESCALE_MODES), default="per")

    p = sub.add_parser("osmosis", help="drift-diffusion evolution towards a guidance image")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--guidance", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tau", type=float, default=1000.0)
    p.add_argument("--steps", type=int, default=0, help="0 iterates to the steady state")
    p.add_argument("--tolerance", type=float, default=1e-10)
    p.add_argument("--check-echoes", action="store_true",
                   help="verify the rank-1 steady-state echo structure")

    p = sub.add_parser("flow", help="variational optic flow between two frames")
    p.add_argument("--frame1", required=True)
    p.add_argument("--frame2", required=True)
    p.add_argument("--regularizer", choices=["hs", "ne"], default="hs")
    p.add_argument("--alpha", type=float, default=100.0)
    p.add_argument("--ne-lambda", dest="ne_lambda", type=float, default=1.0)
    p.add_argument("--epsilon", type=float, default=0.255)
    p.add_argument("--out", required=True, help="CSV of i,j,u,v")
    p.add_argument("--color", default=None, help="optional colour-coded PPM")

    p = sub.add_parser("compress", help="compress the echo set of a filter")
    _add_filter_flags(p)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rank", type=int, default=None)
    p.add_argument("--rank-frac", type=float, default=None)
    p.add_argument("--q", type=int, default=3)
    p.add_argument("--oversample", type=int, default=10)
    p.add_argument("--epsilon", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--float32", action="store_true")
    p.add_argument("--estimate-error", action="store_true",
                   help="print a Hutchinson estimate of the reconstruction error")
    p.add_argument("--probes", type=int, default=100)

    p = sub.add_parser("reconstruct", help="reconstruct echoes from an .echosvd file")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--x", type=int, required=True)
    p.add_argument("--y", type=int, required=True)
    p.add_argument("--direction", choices=["source", "drain"], default="source")
    p.add_argument("--rank", type=int, default=None)
    p.add_argument("--rescale", choices=sorted(RESCALE_MODES), default="per")
    p.add_argument("--raw-csv", default=None, help="also export raw values as CSV")

    p = sub.add_parser("spectrum", help="export singular values as CSV")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("report", help="render spectrum CSVs and figures")
    p.add_argument("--in", dest="infiles", required=True, nargs="+")
    p.add_argument("--outdir", required=True)
    p.add_argument("--vectors", type=int, default=0,
                   help="also render the first n left singular vectors")

    p = sub.add_parser("serve", help="run the echo HTTP service")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--budget", type=int, default=3300, help="maximum k + oversample")
    p.add_argument("--max-sessions", type=int, default=4)

    return parser


def _parse_pixels(text):
    pixels = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        try:
            x, y = (int(v) for v in chunk.split(","))
        except ValueError as exc:
            raise UsageError(f"bad pixel {chunk!r}, expected x,y") from exc
        pixels.append((x, y))
    if not pixels:
        raise UsageError("empty pixel list")
    return pixels


def _write_raster(raw, nx, ny, out, mode, mark=None):
    (raster,) = rescale_for_display([raw], RESCALE_MODES[mode])
    if mark is not None:
        rgb = mark_location(raster, nx, ny, mark)
        write_ppm(rgb, nx, ny, out)
    else:
        write_pgm(Image(nx, ny, raster.astype(np.float64)), out)


def _cmd_filter(args):
    img = read_pgm(args.infile)
    inst = build_smoothing_filter(img, _filter_params(args))
    write_pgm(inst.filtered, args.out)
    print(f"wrote {args.out} [{inst.summary()}]")


def _cmd_echo(args):
    img = read_pgm(args.infile)
    inst = build_smoothing_filter(img, _filter_params(args))
    request = EchoRequest(pixel=(args.x, args.y), direction=args.direction)
    echo = echo_for_request(inst.operator, request, img.nx, img.ny)
    _write_raster(echo.raw, img.nx, img.ny, args.out, args.rescale,
                  mark=(args.x, args.y) if args.mark else None)
    print(f"wrote {args.out} [{args.direction} echo at ({args.x}, {args.y})]")


def _cmd_cumulative(args):
    img = read_pgm(args.infile)
    inst = build_smoothing_filter(img, _filter_params(args))
    pixels = _parse_pixels(args.pixels)
    total = np.zeros(inst.operator.dim)
    for x, y in pixels:
        echo = echo_for_request(inst.operator, EchoRequest(pixel=(x, y)), img.nx, img.ny)
        total += echo.raw
    _write_raster(total, img.nx, img.ny, args.out, args.rescale)
    print(f"wrote {args.out} [cumulative echo of {len(pixels)} pixels]")


def _cmd_inpaint(args):
    img = read_pgm(args.infile)
    mask = read_mask(args.mask)
    operator = {"homogeneous": "homogeneous", "nld": "isotropic_nonlinear", "eed": "eed"}[args.operator]
    diffusivity = None
    if operator != "homogeneous":
        diffusivity = diffusivity_from_name(args.diffusivity, args.lam)
    cfg = InpaintConfig(operator=operator, diffusivity=diffusivity, sigma=args.sigma,
                        mode=args.mode, tolerance=args.tolerance, max_outer=args.max_outer)
    out, frozen = inpaint(img, mask, cfg)
    write_pgm(out, args.out)
    print(f"wrote {args.out} [{args.operator} inpainting]")
    if args.echo:
        (pixel,) = _parse_pixels(args.echo)
        echo = echo_for_request(frozen.as_operator(), EchoRequest(pixel=pixel), img.nx, img.ny)
        _write_raster(echo.raw, img.nx, img.ny, args.echo_out or "echo.pgm", args.rescale, mark=pixel)
        print(f"wrote {args.echo_out or 'echo.pgm'} [source echo at {pixel}]")
    if args.cumulative:
        pixels = _parse_pixels(args.cumulative)
        indices = [img.index(x, y) for x, y in pixels]
        total = cumulative_echo_set(frozen, indices)
        _write_raster(total, img.nx, img.ny, args.cumulative_out or "cumulative.pgm", args.rescale)
        print(f"wrote {args.cumulative_out or 'cumulative.pgm'} [cumulative echo]")


def _cmd_osmosis(args):
    img = read_pgm(args.infile)
    guidance = read_pgm(args.guidance)
    drift = drift_from_guidance(guidance)
    cfg = OsmosisConfig(tau=args.tau, steps=args.steps, steady=args.steps == 0,
                        tolerance=args.tolerance)
    out = osmosis_evolve(img, drift, cfg)
    write_pgm(out, args.out)
    print(f"wrote {args.out} [osmosis, {'steady state' if cfg.steady else f'{cfg.steps} steps'}]")
    if args.check_echoes:
        report = steady_state_echo_check(drift, OsmosisConfig(tau=args.tau, steady=True,
                                                              tolerance=args.tolerance))
        print(f"steady-state echoes: max source deviation {report.max_source_deviation:.3e}, "
              f"max drain variation {report.max_drain_variation:.3e}")


def _cmd_flow(args):
    f1 = read_pgm(args.frame1)
    f2 = read_pgm(args.frame2)
    fx, fy, ft = frame_derivatives(f1, f2)
    cfg = FlowConfig(regularizer={"hs": "horn_schunck", "ne": "nagel_enkelmann"}[args.regularizer],
                     alpha=args.alpha, ne_lambda=args.ne_lambda, epsilon=args.epsilon)
    system = assemble_flow_system(fx, fy, f1, cfg)
    flow = solve_flow(system, ft)
    flow_to_csv(flow, args.out)
    print(f"wrote {args.out} [{args.regularizer} flow]")
    if args.color:
        write_flow_ppm(flow, args.color)
        print(f"wrote {args.color} [colour-coded flow]")


def _cmd_compress(args):
    img = read_pgm(args.infile)
    inst = build_smoothing_filter(img, _filter_params(args))
    cfg = compression.CompressionConfig(
        rank=args.rank, rank_fraction=args.rank_frac, power=args.q,
        oversample=args.oversample, seed=args.seed, epsilon=args.epsilon,
        hutchinson_probes=args.probes,
    )
    compressed = compression.compress_echoes(
        inst.operator, cfg, img.nx, img.ny,
        meta={"filter": inst.method, "params": inst.params},
    )
    compression.serialize(compressed, args.out, float32=args.float32)
    stats = compressed.meta["stats"]
    print(f"wrote {args.out} [k={compressed.svd.k}, excluded={len(compressed.exclusions)}, "
          f"rangefinder applications={stats['rangefinder_applications']}]")
    if args.estimate_error:
        err = compression.frobenius_error_estimate(
            inst.operator, compressed, probes=args.probes, seed=args.seed + 1
        )
        print(f"estimated Frobenius error: {err:.6g} ({args.probes} probes)")


def _cmd_reconstruct(args):
    compressed = compression.deserialize(args.infile)
    if compressed.dim != compressed.nx * compressed.ny:
        raise UsageError("cannot rasterise a flow-transition echo file")
    index = args.y * compressed.nx + args.x
    if not (0 <= args.x < compressed.nx and 0 <= args.y < compressed.ny):
        raise UsageError(f"pixel ({args.x}, {args.y}) outside "
                         f"{compressed.nx}x{compressed.ny} grid")
    if args.rank is not None and not 0 < args.rank <= compressed.svd.k:
        raise UsageError(f"rank must lie in [1, {compressed.svd.k}]")
    if args.direction == "source":
        echo = compression.reconstruct_source(compressed, index, rank=args.rank)
    else:
        echo = compression.reconstruct_drain(compressed, index, rank=args.rank)
    _write_raster(echo.raw, compressed.nx, compressed.ny, args.out, args.rescale)
    if args.raw_csv:
        write_csv_vector(echo.raw, args.raw_csv)
    print(f"wrote {args.out} [{args.direction} echo at ({args.x}, {args.y})]")


def _cmd_spectrum(args):
    compressed = compression.deserialize(args.infile)
    compression.spectrum_export(compressed, args.out)
    print(f"wrote {args.out} [{compressed.svd.k} singular values]")


def _cmd_report(args):
    from .report import render_singular_vector_panel, render_spectrum_figure

    os.makedirs(args.outdir, exist_ok=True)
    spectra = {}
    last = None
    for infile in args.infiles:
        compressed = compression.deserialize(infile)
        label = os.path.splitext(os.path.basename(infile))[0]
        spectra[label] = compressed.svd.sigma
        csv_path = os.path.join(args.outdir, f"{label}_spectrum.csv")
        compression.spectrum_export(compressed, csv_path)
        print(f"wrote {csv_path}")
        last = compressed
    fig_path = os.path.join(args.outdir, "spectra.png")
    render_spectrum_figure(spectra, fig_path)
    print(f"wrote {fig_path}")
    if args.vectors > 0 and last is not None:
        panel = os.path.join(args.outdir, "singular_vectors.png")
        render_singular_vector_panel(last, range(args.vectors), panel)
        print(f"wrote {panel}")


def _cmd_serve(args):
    import uvicorn

    from .service import create_app

    app = create_app(max_sessions=args.max_sessions, width_budget=args.budget)
    uvicorn.run(app, host=args.host, port=args.port)


_COMMANDS = {
    "filter": _cmd_filter,
    "echo": _cmd_echo,
    "cumulative": _cmd_cumulative,
    "inpaint": _cmd_inpaint,
    "osmosis": _cmd_osmosis,
    "flow": _cmd_flow,
    "compress": _cmd_compress,
    "reconstruct": _cmd_reconstruct,
    "spectrum": _cmd_spectrum,
    "report": _cmd_report,
    "serve": _cmd_serve,
}


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        _COMMANDS[args.verb](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except EchoLabError as exc:
        # malformed or inconsistent data encountered while running
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
