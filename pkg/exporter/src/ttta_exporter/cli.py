"""Command-line entry point: export features or point maps from a folder."""

from __future__ import annotations

import argparse
import sys

from . import backbones, export


def cmd_features(args) -> int:
    layers = tuple(args.layers.split(",")) if args.layers else None
    ids = export.export_features(
        args.images,
        args.out,
        backbone=args.backbone,
        resize=args.resize,
        crop=args.crop,
        layers=layers,
    )
    print(f"# exported {len(ids)} samples to {args.out}")
    return 0


def cmd_pointmaps(args) -> int:
    ids = export.export_pointmaps(args.tiffs, args.out)
    print(f"# exported {len(ids)} point maps to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ttta-export",
        description="Export image folders into ttta tensor files and manifests",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("features", help="image folder -> feature tensors")
    p.add_argument("--images", required=True, help="input image directory")
    p.add_argument("--out", required=True)
    p.add_argument("--backbone", choices=backbones.PRESETS,
                   default="patch-stats")
    p.add_argument("--layers", default="",
                   help="comma-separated layer names (preset default if empty)")
    p.add_argument("--resize", type=int, default=256)
    p.add_argument("--crop", type=int, default=224)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("pointmaps", help="coordinate TIFFs -> point-map tensors")
    p.add_argument("--tiffs", required=True, help="input TIFF directory")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pointmaps)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, backbones.BackboneUnavailableError) as exc:
        print(f"ERROR {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
