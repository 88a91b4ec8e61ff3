"""Command-line entry point.

Subcommands: synth, extract, train, predict, detect, score, sweep, report,
manifest. Every option can also come from a flat ``key = value`` config file
passed with --config; explicit command-line flags win over file values.

Exit codes: 0 success, 2 usage error, 3 invalid or missing input,
4 numerical failure during training.
"""

import argparse
import sys
from pathlib import Path

from .errors import NumericalError, ValidationError
from .evaluate import DEFAULT_SWEEP
from .train import TrainConfig, classifier_train_config, segmenter_train_config


def _int_tuple(s: str) -> tuple[int, ...]:
    return tuple(int(x) for x in s.split(",") if x.strip())


def _float_tuple(s: str) -> tuple[float, ...]:
    return tuple(float(x) for x in s.split(",") if x.strip())


def _str_list(s: str) -> list[str]:
    return [x.strip() for x in s.split(",") if x.strip()]


def parse_config_file(path) -> dict[str, str]:
    """Flat key = value lines; '#' starts a comment."""
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ValidationError(f"{path}: cannot read config ({e})") from e
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{ln}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip()
    return values


class _Cmd:
    """One subcommand: declared options with real defaults kept aside so
    config-file values slot in under explicit flags."""

    def __init__(self, sub, name: str, help_: str):
        self.parser = sub.add_parser(name, help=help_)
        self.parser.add_argument("--config", default=None, help="flat key=value config file")
        self.types: dict[str, object] = {}
        self.defaults: dict[str, object] = {}

    def opt(self, flag: str, *, type=str, default=None, required=False, help=""):
        dest = flag.lstrip("-").replace("-", "_")
        self.parser.add_argument(flag, dest=dest, type=type, default=None, help=help)
        self.types[dest] = type
        self.defaults[dest] = default
        if required:
            self.defaults[dest] = _REQUIRED

    def resolve(self, args: argparse.Namespace) -> argparse.Namespace:
        config = parse_config_file(args.config) if args.config else {}
        unknown = set(config) - set(self.types)
        if unknown:
            raise ValidationError(f"unknown config keys: {', '.join(sorted(unknown))}")
        for dest, typ in self.types.items():
            if getattr(args, dest) is not None:
                continue  # explicit flag wins
            if dest in config:
                setattr(args, dest, typ(config[dest]))
            elif self.defaults[dest] is _REQUIRED:
                self.parser.error(f"--{dest.replace('_', '-')} is required")
            else:
                setattr(args, dest, self.defaults[dest])
        return args


_REQUIRED = object()


def _build_parser():
    parser = argparse.ArgumentParser(prog="pvmap", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    cmds = {}

    c = _Cmd(sub, "synth", "generate synthetic scenes with annotations")
    c.opt("--out", required=True)
    c.opt("--seed", type=int, default=0)
    c.opt("--scenes", type=int, default=10)
    c.opt("--panels", type=int, default=5)
    c.opt("--height", type=int, default=256)
    c.opt("--width", type=int, default=256)
    c.opt("--side-min", type=float, default=3.0)
    c.opt("--side-max", type=float, default=20.0)
    c.opt("--min-gap", type=int, default=5)
    cmds["synth"] = c

    c = _Cmd(sub, "extract", "extract training patches from rasters")
    c.opt("--out", required=True)
    c.opt("--rasters", required=True)
    c.opt("--seed", type=int, default=0)
    c.opt("--keep-fraction", type=float, default=0.3)
    c.opt("--copies", type=int, default=4)
    c.opt("--neg-per-pos", type=float, default=3.0)
    c.opt("--val-fraction", type=float, default=0.0)
    c.opt("--ids", type=_str_list)
    c.opt("--threads", type=int, default=1)
    cmds["extract"] = c

    c = _Cmd(sub, "train", "train the classifier or the segmenter")
    c.opt("--out", required=True)
    c.opt("--patches", required=True)
    c.opt("--val-patches")
    c.opt("--arch", required=True, help="classifier | segmenter")
    c.opt("--widths", type=_int_tuple, default=(64, 128, 128))
    c.opt("--fc-widths", type=_int_tuple, default=(128, 32))
    c.opt("--batch-size", type=int)
    c.opt("--lr", type=float)
    c.opt("--momentum", type=float)
    c.opt("--weight-decay", type=float)
    c.opt("--epochs", type=int)
    c.opt("--schedule", help="halve-every-5 | constant")
    c.opt("--seed", type=int, default=0)
    cmds["train"] = c

    c = _Cmd(sub, "predict", "stitch probability maps over rasters")
    c.opt("--out", required=True)
    c.opt("--weights", required=True)
    c.opt("--network", required=True)
    c.opt("--rasters", required=True)
    c.opt("--ids", type=_str_list)
    c.opt("--sigma", type=float, default=10.0)
    c.opt("--stride", type=int, default=10)
    c.opt("--batch-size", type=int, default=256)
    c.opt("--threads", type=int, default=1)
    cmds["predict"] = c

    c = _Cmd(sub, "detect", "extract objects from probability maps")
    c.opt("--out", required=True)
    c.opt("--maps", required=True)
    c.opt("--threshold", type=float, default=0.5)
    cmds["detect"] = c

    c = _Cmd(sub, "score", "pixel or object PR scoring")
    c.opt("--out", required=True)
    c.opt("--mode", required=True, help="pixel | object")
    c.opt("--maps", help="probability map file or directory (pixel mode)")
    c.opt("--detections", help="detections file or directory (object mode)")
    c.opt("--annotations", required=True)
    c.opt("--iou", type=float, default=0.5)
    cmds["score"] = c

    c = _Cmd(sub, "sweep", "max F1 across a grid of IoU thresholds")
    c.opt("--out", required=True)
    c.opt("--detections", required=True)
    c.opt("--annotations", required=True)
    c.opt("--grid", type=_float_tuple, default=DEFAULT_SWEEP)
    cmds["sweep"] = c

    c = _Cmd(sub, "report", "render PR and F1-vs-IoU plots as SVG")
    c.opt("--out", required=True)
    c.opt("--pr", type=_str_list, default=[])
    c.opt("--sweep", type=_str_list, default=[])
    cmds["report"] = c

    c = _Cmd(sub, "manifest", "dataset summary per split")
    c.opt("--out", required=True)
    c.opt("--rasters", required=True)
    c.opt("--split", required=True)
    c.opt("--resolution", type=float, default=0.3)
    cmds["manifest"] = c

    return parser, cmds


def _train_config(args) -> TrainConfig:
    base = (
        classifier_train_config() if args.arch == "classifier" else segmenter_train_config()
    )
    fields = {
        "batch_size": args.batch_size,
        "learning_rate": args.lr,
        "momentum": args.momentum,
        "weight_decay": args.weight_decay,
        "epochs": args.epochs,
        "schedule": args.schedule,
        "seed": args.seed,
    }
    from dataclasses import replace

    return replace(base, **{k: v for k, v in fields.items() if v is not None})


def _dispatch(args) -> int:
    from . import pipeline

    if args.command == "synth":
        stems = pipeline.run_synth(
            args.out,
            args.seed,
            args.scenes,
            args.panels,
            (args.height, args.width),
            (args.side_min, args.side_max),
            args.min_gap,
        )
        print(f"wrote {len(stems)} scenes to {args.out}")
    elif args.command == "extract":
        paths = pipeline.run_extract(
            args.out,
            args.rasters,
            args.seed,
            ids=args.ids,
            keep_fraction=args.keep_fraction,
            copies=args.copies,
            neg_per_pos=args.neg_per_pos,
            val_fraction=args.val_fraction,
            threads=args.threads,
        )
        print("wrote " + ", ".join(str(p) for p in paths.values()))
    elif args.command == "train":
        if args.arch not in ("classifier", "segmenter"):
            raise ValidationError(f"--arch must be classifier|segmenter, got {args.arch!r}")
        paths = pipeline.run_train(
            args.out,
            args.patches,
            args.arch,
            _train_config(args),
            widths=args.widths,
            fc_widths=args.fc_widths,
            val_patches_path=args.val_patches,
        )
        print(f"trained {args.arch}: {paths['weights']}")
    elif args.command == "predict":
        written = pipeline.run_predict(
            args.out,
            args.weights,
            args.network,
            args.rasters,
            ids=args.ids,
            sigma=args.sigma,
            stride=args.stride,
            batch_size=args.batch_size,
            threads=args.threads,
        )
        print(f"wrote {len(written)} probability maps to {args.out}")
    elif args.command == "detect":
        written = pipeline.run_detect(args.out, args.maps, args.threshold)
        print(f"wrote {len(written)} detection files to {args.out}")
    elif args.command == "score":
        if args.mode == "pixel":
            if not args.maps:
                raise ValidationError("pixel mode needs --maps")
            score = pipeline.run_score_pixel(args.out, args.maps, args.annotations)
            print(f"pixel max F1 = {score:.4f}")
        elif args.mode == "object":
            if not args.detections:
                raise ValidationError("object mode needs --detections")
            score = pipeline.run_score_object(
                args.out, args.detections, args.annotations, args.iou
            )
            print(f"object max F1 @ IoU {args.iou:g} = {score:.4f}")
        else:
            raise ValidationError(f"--mode must be pixel|object, got {args.mode!r}")
    elif args.command == "sweep":
        rows = pipeline.run_sweep(args.out, args.detections, args.annotations, args.grid)
        for t, v in rows:
            print(f"iou {t:.2f}: max F1 = {v:.4f}")
    elif args.command == "report":
        written = pipeline.run_report(args.out, args.pr, args.sweep)
        print("wrote " + ", ".join(str(p) for p in written))
    elif args.command == "manifest":
        rows = pipeline.run_manifest_cmd(args.out, args.rasters, args.split, args.resolution)
        for m in rows:
            print(f"{m.split}: {m.images} images, {m.area_km2:.2f} km^2, {m.annotations} annotations")
    return 0


def main(argv=None) -> int:
    parser, cmds = _build_parser()
    args = parser.parse_args(argv)
    try:
        args = cmds[args.command].resolve(args)
        return _dispatch(args)
    except NumericalError as e:
        print(f"pvmap: numerical failure: {e}", file=sys.stderr)
        return 4
    except (ValidationError, OSError) as e:
        print(f"pvmap: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
