"""Command-line interface.

Subcommands: train, entropy-train, compress, decompress, eval, rd-curve.
Exit codes: 0 success, 2 usage error, 3 malformed file, 4 model-binding
mismatch, 5 internal failure.
"""

import argparse
import csv
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import bitstream, cells, codec
from .data import PatchSet, extract_tiles, sample_high_entropy
from .entropy import EntropyArchitecture
from .errors import (
    FormatError,
    ModelMismatchError,
    RnicError,
    TrainingDiverged,
    UsageError,
)
from .evaluate import evaluate_images, rd_rows
from .images import load_png
from .metrics import write_rd_csv
from .params import content_hash, load_model, save_model
from .train import TrainConfig, codes_from_patches, train_codec, train_entropy

log = logging.getLogger("rnic")

EXIT_USAGE = 2
EXIT_FORMAT = 3
EXIT_MISMATCH = 4
EXIT_INTERNAL = 5


def _iter_pngs(root):
    root = Path(root)
    if not root.is_dir():
        raise UsageError(f"not a directory: {root}")
    files = sorted(p for p in root.rglob("*.png"))
    if not files:
        raise UsageError(f"no .png files under {root}")
    return files


def _gather_patches(image_dir, he_tiles):
    sets = []
    for path in _iter_pngs(image_dir):
        img = load_png(path)
        if he_tiles:
            sets.append(sample_high_entropy(img, count=he_tiles, source_id=path.name))
        else:
            sets.append(extract_tiles(img, source_id=path.name))
    patches = PatchSet.concatenate(sets)
    if len(patches) == 0:
        raise UsageError(f"no whole 32x32 tiles found under {image_dir}")
    return patches


def _load_codec(path):
    model = load_model(path)
    if not hasattr(model, "encoder"):
        raise ModelMismatchError(f"{path} is not a codec model file")
    return model


def _load_entropy(path):
    model = load_model(path)
    if not hasattr(model, "context_conv"):
        raise ModelMismatchError(f"{path} is not an entropy model file")
    return model


def cmd_train(args):
    build = codec.PROFILES[args.profile]
    arch = build(cell=args.cell, mode=args.mode)
    cfg = TrainConfig(
        steps=args.steps, batch_size=args.batch_size, learning_rate=args.lr,
        seed=args.seed, iterations=args.iterations,
    )
    patches = _gather_patches(args.data, args.he_tiles)
    log.info("training %s/%s codec on %d patches for %d steps", args.profile, args.cell, len(patches), cfg.steps)
    model, history = train_codec(patches, arch, cfg)
    digest = save_model(model, args.out)
    log.info("saved %s (hash %s); loss %.5f -> %.5f", args.out, digest.hex()[:12], history[0], history[-1])
    if args.history:
        with open(args.history, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["step", "loss"])
            out.writerows((i + 1, v) for i, v in enumerate(history))
    return 0


def cmd_entropy_train(args):
    model = _load_codec(args.model)
    patches = _gather_patches(args.data, args.he_tiles)
    log.info("generating codes from %d patches", len(patches))
    seqs = codes_from_patches(model, patches, iterations=args.iterations)
    arch = EntropyArchitecture(code_depth=model.arch.code_depth)
    cfg = TrainConfig(steps=args.steps, batch_size=args.batch_size, learning_rate=args.lr, seed=args.seed)
    ent, history = train_entropy(seqs, arch, cfg, codec_hash=content_hash(model))
    digest = save_model(ent, args.out)
    log.info("saved %s (hash %s); bits/bit %.4f -> %.4f", args.out, digest.hex()[:12], history[0], history[-1])
    return 0


def cmd_compress(args):
    model = _load_codec(args.model)
    ent = _load_entropy(args.entropy_model) if args.entropy_model else None
    n = bitstream.compress_file(args.input, model, args.out, iterations=args.iterations, entropy_model=ent)
    log.info("wrote %s (%d bytes)", args.out, n)
    return 0


def cmd_decompress(args):
    model = _load_codec(args.model)
    ent = _load_entropy(args.entropy_model) if args.entropy_model else None
    bitstream.decompress_file(args.input, model, args.out, iterations=args.iterations, entropy_model=ent)
    log.info("wrote %s", args.out)
    return 0


def _load_images(image_dir):
    return [(p.name, load_png(p)) for p in _iter_pngs(image_dir)]


def cmd_eval(args):
    model = _load_codec(args.model)
    ent = _load_entropy(args.entropy_model) if args.entropy_model else None
    results = evaluate_images(
        model, _load_images(args.images), iterations=args.iterations,
        entropy_model=ent, msssim_scales=args.msssim_scales, workers=args.workers,
    )
    with open(args.out, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["image", "metric", "iteration", "bpp_raw", "bpp_coded", "quality"])
        for r in results:
            out.writerow([
                r.image_id, r.metric, r.iteration, repr(r.bpp_raw),
                "" if math.isnan(r.bpp_coded) else repr(r.bpp_coded), repr(r.quality),
            ])
    log.info("wrote %s (%d rows)", args.out, len(results))
    return 0


def cmd_rd_curve(args):
    model = _load_codec(args.model)
    ent = _load_entropy(args.entropy_model) if args.entropy_model else None
    rows = rd_rows(
        model, _load_images(args.images), iterations=args.iterations,
        entropy_model=ent, msssim_scales=args.msssim_scales, workers=args.workers,
    )
    write_rd_csv(args.out, rows)
    log.info("wrote %s (%d rows)", args.out, len(rows))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="rnic", description="Recurrent neural image codec")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_train_like(p):
        p.add_argument("--data", required=True, help="directory tree of PNG images")
        p.add_argument("--out", required=True, help="output model file")
        p.add_argument("--steps", type=int, default=2000)
        p.add_argument("--batch-size", type=int, default=16)
        p.add_argument("--lr", type=float, default=2e-3)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--iterations", type=int, default=None, help="unroll iterations")
        p.add_argument("--he-tiles", type=int, default=0,
                       help="keep only the N least-compressible tiles per image (0 = all tiles)")

    p = sub.add_parser("train", help="train a codec on image tiles")
    add_train_like(p)
    p.add_argument("--profile", choices=sorted(codec.PROFILES), default="desk")
    p.add_argument("--cell", choices=cells.CELL_KINDS, default=cells.GRU)
    p.add_argument("--mode", choices=codec.MODES, default=codec.ONESHOT)
    p.add_argument("--history", default=None, help="write per-step loss CSV here")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("entropy-train", help="train an entropy model bound to a codec")
    add_train_like(p)
    p.add_argument("--model", required=True, help="codec model file the codes come from")
    p.set_defaults(fn=cmd_entropy_train)

    p = sub.add_parser("compress", help="compress a PNG image")
    p.add_argument("input")
    p.add_argument("--model", required=True)
    p.add_argument("--entropy-model", default=None)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_compress)

    p = sub.add_parser("decompress", help="decode a compressed stream to PNG")
    p.add_argument("input")
    p.add_argument("--model", required=True)
    p.add_argument("--entropy-model", default=None)
    p.add_argument("--iterations", type=int, default=None, help="use only the first J iterations")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_decompress)

    def add_eval_like(p):
        p.add_argument("--model", required=True)
        p.add_argument("--entropy-model", default=None)
        p.add_argument("--images", required=True, help="directory of PNG images")
        p.add_argument("--iterations", type=int, default=None)
        p.add_argument("--msssim-scales", type=int, default=5)
        p.add_argument("--workers", type=int, default=2)
        p.add_argument("--out", required=True, help="output CSV path")

    p = sub.add_parser("eval", help="per-image quality metrics at every iteration")
    add_eval_like(p)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("rd-curve", help="aggregate rate-distortion curve CSV")
    add_eval_like(p)
    p.set_defaults(fn=cmd_rd_curve)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(message)s",
    )
    try:
        return args.fn(args)
    except UsageError as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except ModelMismatchError as exc:
        log.error("%s", exc)
        return EXIT_MISMATCH
    except FormatError as exc:
        log.error("%s", exc)
        return EXIT_FORMAT
    except TrainingDiverged as exc:
        log.error("training diverged: %s", exc)
        return EXIT_INTERNAL
    except RnicError as exc:
        log.error("%s", exc)
        return EXIT_INTERNAL
    except KeyboardInterrupt:
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
