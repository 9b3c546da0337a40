"""Command line entry point: ``segdepth <command> [options]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..core import ClassTable, default_class_table, PRESETS
from ..dbst import AugmentConfig, SynthConfig
from ..errors import SegDepthError
from .fixtures import FixtureSpec
from . import runner


def load_class_table(spec: str, things: str | None = None) -> ClassTable:
    if spec in PRESETS:
        table = default_class_table(spec)
    else:
        table = ClassTable.from_dict(json.loads(Path(spec).read_text()))
    if things is not None:
        names = [t.strip() for t in things.split(",") if t.strip()]
        table = table.with_things(int(n) if n.isdigit() else n for n in names)
    return table


def _size(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}") from None


def _floats(n: int):
    def parse(text: str) -> tuple[float, ...]:
        parts = [float(p) for p in text.split(",")]
        if len(parts) == 1 and n > 1:
            parts = parts * n
        if len(parts) != n:
            raise argparse.ArgumentTypeError(f"expected {n} comma-separated numbers, got {text!r}")
        return tuple(parts)
    return parse


def _workers(text: str) -> int:
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError("--workers must be >= 1")
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="segdepth",
        description="Fuse depth-derived and UDA segmentation predictions and synthesise "
                    "depth-ordered self-training samples.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, manifest=True):
        if manifest:
            p.add_argument("--manifest", required=True, type=Path, help="line-delimited JSON manifest")
        p.add_argument("--classes", default="cityscapes19",
                       help="class table preset (cityscapes19, synseq12) or JSON file")
        p.add_argument("--things", default=None,
                       help="comma-separated class names or ids overriding the things subset")
        p.add_argument("--workers", type=_workers, default=1)
        p.add_argument("--out", required=True, type=Path, help="output directory")

    p = sub.add_parser("weights", help="class frequencies and fusion weights from source labels")
    common(p)
    p.add_argument("--delta", type=float, default=1.02)
    p.add_argument("--raw-weights", action="store_true",
                   help="skip max-normalisation of the UDA weights")

    p = sub.add_parser("fuse", help="fuse the two prediction branches into label maps")
    common(p)
    p.add_argument("--weights", required=True, type=Path)
    p.add_argument("--temperature", type=float, default=6.0)
    p.add_argument("--save-scores", action="store_true", help="also write fused scores as LGT1")
    p.add_argument("--colorize", action="store_true", help="also write palette PNGs")

    p = sub.add_parser("synth", help="depth-ordered copy-paste synthesis of training samples")
    common(p)
    p.add_argument("--pseudo", type=Path, default=None,
                   help="directory of <id>.png pseudo-labels (default: manifest labels)")
    p.add_argument("--n-images", type=int, default=2)
    p.add_argument("--percentile", type=float, default=0.8)
    p.add_argument("--samples-per-base", type=int, default=4)
    p.add_argument("--scale-range", type=_floats(2), default=(0.75, 1.5), metavar="LO,HI")
    p.add_argument("--crop", type=_size, default=(1024, 512), metavar="WxH")
    p.add_argument("--jitter", type=_floats(4), default=(0.2, 0.2, 0.2, 0.05),
                   metavar="B,C,S,H", help="brightness,contrast,saturation,hue strengths")
    p.add_argument("--no-augment", action="store_true", help="skip scaling, cropping and jitter")
    p.add_argument("--exclude-base", action="store_true",
                   help="the base image's own pixels are not candidates")
    p.add_argument("--depth-scale", type=float, default=256.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--colorize", action="store_true")

    p = sub.add_parser("eval", help="confusion matrix, per-class IoU, mIoU and pixel accuracy")
    common(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--pred", type=Path, help="directory of <id>.png predicted label maps")
    src.add_argument("--branch", choices=("dep", "uda"), help="evaluate the argmax of a logits branch")

    p = sub.add_parser("fixtures", help="generate a synthetic scene set with a manifest")
    common(p, manifest=False)
    p.add_argument("--scenes", type=int, default=50)
    p.add_argument("--size", type=_size, default=(128, 64), metavar="WxH")
    p.add_argument("--dep-corruption", type=float, default=0.5,
                   help="fraction of thing pixels mislabelled in the depth branch")
    p.add_argument("--uda-corruption", type=float, default=0.5,
                   help="fraction of stuff pixels mislabelled in the UDA branch")
    p.add_argument("--max-things", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)
    return parser


def run(args: argparse.Namespace) -> runner.RunReport:
    table = load_class_table(args.classes, args.things)
    if args.command == "weights":
        return runner.cmd_weights(args.manifest, table, args.out, delta=args.delta,
                                  normalize=not args.raw_weights, workers=args.workers)
    if args.command == "fuse":
        return runner.cmd_fuse(args.manifest, table, args.weights, args.out,
                               temperature=args.temperature, workers=args.workers,
                               save_scores=args.save_scores, colorize=args.colorize)
    if args.command == "synth":
        b, c, s, h = args.jitter
        augment = AugmentConfig(scale_range=args.scale_range, crop=args.crop, brightness=b,
                                contrast=c, saturation=s, hue=h, enabled=not args.no_augment)
        cfg = SynthConfig(n_images=args.n_images, percentile=args.percentile,
                          samples_per_base=args.samples_per_base, seed=args.seed,
                          include_base=not args.exclude_base, augment=augment)
        return runner.cmd_synth(args.manifest, table, cfg, args.out, workers=args.workers,
                                pseudo_dir=args.pseudo, depth_scale=args.depth_scale,
                                colorize=args.colorize)
    if args.command == "eval":
        report = runner.cmd_eval(args.manifest, table, args.out, pred_dir=args.pred,
                                 branch=args.branch, workers=args.workers)
        if report.summary:
            print(f"mIoU {100 * report.summary['miou']:.2f}  Acc {100 * report.summary['acc']:.2f}")
        return report
    if args.command == "fixtures":
        w, h = args.size
        spec = FixtureSpec(width=w, height=h, scenes=args.scenes,
                           dep_things_rate=args.dep_corruption,
                           uda_stuff_rate=args.uda_corruption, max_things=args.max_things)
        return runner.cmd_fixtures(spec, table, args.out, seed=args.seed, workers=args.workers)
    raise AssertionError(args.command)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        report = run(args)
    except (SegDepthError, ValueError, OSError) as exc:
        print(f"segdepth {args.command}: error: {exc}", file=sys.stderr)
        return 2
    for key, err in report.failures:
        print(f"FAILED {key}: {err}", file=sys.stderr)
    print(f"{report.command}: {report.outputs} outputs, {len(report.failures)} failures -> {args.out}")
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
