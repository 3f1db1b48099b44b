"""Command-line feature dumper.

``--frames`` may point at one sequence directory of images, or at a dataset
root whose immediate subdirectories are sequences.  Output is one NPY tensor
per frame plus a manifest the propagation engine consumes directly.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from featextract.backbone import BackboneError, build_backbone
from featextract.pipeline import (
    ExtractConfig,
    ExtractionError,
    extract_sequence,
    write_manifest,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="featextract",
                     description="dump per-frame backbone feature grids")
    parser.add_argument("--frames", required=True,
                        help="sequence directory, or a root of sequence dirs")
    parser.add_argument("--out", required=True)
    parser.add_argument("--layer", default="res3",
                        choices=["res2", "res3", "res4"])
    parser.add_argument("--stride-mod", action="store_true", default=None,
                        help="set strides after res2 from 2 to 1 "
                             "(default: on for res3/res4, off for res2)")
    parser.add_argument("--no-stride-mod", dest="stride_mod",
                        action="store_false")
    parser.add_argument("--resolution", default="480xfull",
                        choices=["320x320", "480x480", "480xfull"])
    parser.add_argument("--upsample", type=int, default=1, choices=[1, 2])
    parser.add_argument("--weights", default="imagenet",
                        help="'imagenet', 'random', or a state_dict path")
    parser.add_argument("--annotations", default=None,
                        help="directory of per-frame annotations to record; "
                             "for a dataset root, a root of per-sequence dirs")
    parser.add_argument("--task", default="region",
                        choices=["region", "semantic", "keypoint"])
    parser.add_argument("--no-normalize", dest="normalize",
                        action="store_false", default=True,
                        help="record that features should not be L2-normalized")
    return parser


def _sequence_dirs(frames_root: Path) -> list[Path]:
    if not frames_root.is_dir():
        raise ExtractionError(f"frames directory not found: {frames_root}")
    subdirs = sorted(p for p in frames_root.iterdir() if p.is_dir())
    return subdirs if subdirs else [frames_root]


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE

    stride_mod = args.stride_mod
    if stride_mod is None:
        stride_mod = args.layer in ("res3", "res4")
    cfg = ExtractConfig(
        backbone=f"resnet18-{args.weights if args.weights in ('imagenet', 'random') else 'custom'}",
        layer=args.layer,
        stride_modified=stride_mod,
        resolution=args.resolution,
        upsample=args.upsample,
        normalize_features=args.normalize,
        weights=args.weights,
        task=args.task,
    )
    try:
        model = build_backbone(cfg.layer, cfg.stride_modified, cfg.weights)
        frames_root = Path(args.frames)
        out_dir = Path(args.out)
        multi = sorted(p for p in frames_root.iterdir() if p.is_dir()) \
            if frames_root.is_dir() else []
        sequences = []
        for seq_dir in _sequence_dirs(frames_root):
            annotations = None
            if args.annotations:
                annotations = Path(args.annotations)
                if multi:
                    annotations = annotations / seq_dir.name
            entry = extract_sequence(
                seq_dir, out_dir, cfg, model=model,
                annotations_dir=annotations,
            )
            sequences.append(entry)
            print(
                f"extracted {entry['id']}: {len(entry['frames'])} frames "
                f"-> grids of {entry['grid'][0]}x{entry['grid'][1]}"
            )
        manifest = write_manifest(sequences, cfg, out_dir)
        print(f"manifest written to {manifest}")
        return EXIT_OK
    except (BackboneError, ExtractionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE if isinstance(exc, BackboneError) else EXIT_DATA
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
