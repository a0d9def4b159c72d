"""Command-line interface.

Subcommands: scanpath (generate gaze paths), convert (image + paths ->
frame-sequence container), score (reference vs distorted containers),
eval (manifest-driven benchmark). Exit codes: 0 success, 1 runtime error,
2 usage error. Identical flags, inputs, and seeds produce byte-identical
outputs regardless of --threads.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from ._json import canonical_json_bytes
from ._version import __version__
from .containers import read_gsr, write_gsr
from .evaluation import PipelineConfig, evaluate, load_manifest
from .geometry import EquirectImage, NormPoint
from .gsr import SAMPLING_ERP, SAMPLING_TANGENT, GsrConfig, convert
from .metrics import PoolingMethod, score_sequences
from .scanpaths import (
    MODEL_FIXED,
    MODEL_MARKOV,
    MODEL_UNIFORM,
    GeneratorConfig,
    ViewingCondition,
    generate,
    load_scanpaths,
    save_scanpaths,
)

_MODEL_FLAGS = {"markov": MODEL_MARKOV, "random": MODEL_UNIFORM, "fixed": MODEL_FIXED}
_SAMPLING_FLAGS = {"tangent": SAMPLING_TANGENT, "erp": SAMPLING_ERP}


def _parse_start(text: str) -> NormPoint:
    try:
        y_str, x_str = text.split(",")
        return NormPoint(float(y_str), float(x_str))
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected Y,X with both in [0,1]: {e}") from None


def _parse_pool(text: str) -> PoolingMethod:
    kind, _, sigma = text.partition(":")
    try:
        return PoolingMethod(kind, float(sigma) if sigma else None)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def _parse_pitch(text: str):
    if text == "auto":
        return None
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'auto' or degrees, got {text!r}") from None


def _gsr_config(args, n: int) -> GsrConfig:
    return GsrConfig(
        patch_h=args.patch,
        patch_w=args.patch,
        n=n,
        pitch_deg=args.pitch,
        sampling=_SAMPLING_FLAGS[args.sampling],
    )


def cmd_scanpath(args) -> int:
    if args.image:
        EquirectImage.from_file(args.image)  # validate readability; the built-in
        # walk models do not condition on image content
    cond = ViewingCondition(args.start, args.duration)
    cfg = GeneratorConfig(model=_MODEL_FLAGS[args.model], seed=args.seed)
    sset = generate(cond, args.n, cfg, workers=args.threads)
    save_scanpaths(sset, args.out)
    return 0


def cmd_convert(args) -> int:
    img = EquirectImage.from_file(args.image)
    sset = load_scanpaths(args.paths, flip_y=args.flip_y, flip_x=args.flip_x, lonlat=args.lonlat)
    cfg = _gsr_config(args, sset.count)
    seq = convert(img, sset, cfg, workers=args.threads)
    write_gsr(seq, args.out)
    return 0


def cmd_score(args) -> int:
    ref = read_gsr(args.ref)
    dist = read_gsr(args.dist)
    mode = args.mode.replace("-", "_")
    report = score_sequences(ref, dist, args.metric, mode, args.pool)
    if args.out:
        Path(args.out).write_bytes(report.to_json_bytes())
    print(f"{report.pooled:.6f}")
    return 0


def cmd_eval(args) -> int:
    manifest = load_manifest(args.manifest)
    cache = args.cache or os.environ.get("GSR_CACHE_DIR")
    config = PipelineConfig(
        metric=args.metric,
        mode=args.mode.replace("-", "_"),
        pooling=args.pool,
        gsr=_gsr_config(args, args.n),
        generator=GeneratorConfig(seed=args.seed),
        repeats=args.repeats,
        seed=args.seed,
        logistic=args.logistic,
        s_psnr_points=args.spoints,
        workers=args.threads,
        cache_dir=Path(cache) if cache else None,
        flip_y=args.flip_y,
        flip_x=args.flip_x,
        lonlat=args.lonlat,
    )
    result = evaluate(manifest, config)
    Path(args.out).write_bytes(result.to_json_bytes())
    print(
        f"srcc {result.srcc_mean:.6f} (+/-{result.srcc_std:.6f})  "
        f"plcc {result.plcc_mean:.6f} (+/-{result.plcc_std:.6f})"
    )
    return 0


def _add_loader_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--flip-y", action="store_true", help="mirror the normalized y axis of loaded paths")
    p.add_argument("--flip-x", action="store_true", help="mirror the normalized x axis of loaded paths")
    p.add_argument("--lonlat", action="store_true", help="loaded points are (lat deg, lon deg) pairs")


def _add_threads_flag(p: argparse.ArgumentParser) -> None:
    p.add_argument("--threads", type=int, default=1, help="worker threads (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gsr360", description=__doc__)
    parser.add_argument("--version", action="version", version=f"gsr360 {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scanpath", help="generate gaze scanpaths")
    p.add_argument("--image", help="optional 360 image (validated, not sampled)")
    p.add_argument("--start", type=_parse_start, default=NormPoint(0.5, 0.5), metavar="Y,X")
    p.add_argument("--duration", type=int, default=20, metavar="N", help="seconds / points per path")
    p.add_argument("--n", type=int, default=49, help="number of paths")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--model", choices=sorted(_MODEL_FLAGS), default="markov")
    p.add_argument("--out", required=True, metavar="FILE")
    _add_threads_flag(p)
    p.set_defaults(func=cmd_scanpath)

    p = sub.add_parser("convert", help="convert an image + scanpaths into a frame container")
    p.add_argument("--image", required=True)
    p.add_argument("--paths", required=True, metavar="FILE")
    p.add_argument("--patch", type=int, default=32, help="patch size in pixels")
    p.add_argument("--pitch", type=_parse_pitch, default=None, metavar="auto|DEG")
    p.add_argument("--sampling", choices=sorted(_SAMPLING_FLAGS), default="tangent")
    p.add_argument("--out", required=True, metavar="PATH[.gsr]")
    _add_loader_flags(p)
    _add_threads_flag(p)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("score", help="score a reference/distorted container pair")
    p.add_argument("--ref", required=True)
    p.add_argument("--dist", required=True)
    p.add_argument("--metric", choices=["psnr", "ssim"], default="psnr")
    p.add_argument("--mode", choices=["per-patch", "per-frame"], default="per-patch")
    p.add_argument("--pool", type=_parse_pool, default=PoolingMethod(), metavar="am|gw[:SIGMA]")
    p.add_argument("--out", metavar="FILE", help="write the full score report as JSON")
    _add_threads_flag(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", help="benchmark a metric against a subjective manifest")
    p.add_argument("--manifest", required=True, metavar="CSV")
    p.add_argument("--metric", choices=["g-psnr", "g-ssim", "ws-psnr", "s-psnr"], default="g-psnr")
    p.add_argument("--mode", choices=["per-patch", "per-frame"], default="per-patch")
    p.add_argument("--pool", type=_parse_pool, default=PoolingMethod(), metavar="am|gw[:SIGMA]")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cache", metavar="DIR", help="GSR cache directory (default $GSR_CACHE_DIR)")
    p.add_argument("--out", required=True, metavar="FILE")
    p.add_argument("--n", type=int, default=49, help="scanpaths per image")
    p.add_argument("--patch", type=int, default=32)
    p.add_argument("--pitch", type=_parse_pitch, default=None, metavar="auto|DEG")
    p.add_argument("--sampling", choices=sorted(_SAMPLING_FLAGS), default="tangent")
    p.add_argument("--logistic", action="store_true", help="fit a 4-parameter logistic before PLCC")
    p.add_argument("--spoints", type=int, default=655362, help="s-psnr sample count")
    _add_loader_flags(p)
    _add_threads_flag(p)
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
