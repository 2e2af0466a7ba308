"""Exporter command line: encode a local dataset split with a local CLIP
checkpoint and write the inmap-format files."""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .datasets import load_split
from .encoders import ClipEncoder
from .export import export_features
from .formats import ExportError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="inmap-export",
        description="Dump CLIP features and text proxies in the inmap binary format.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("export", help="encode one dataset split")
    p.add_argument("--model", required=True, help="local CLIP checkpoint path or hub id")
    p.add_argument("--dataset", required=True, help="dataset name under the data root, or a path")
    p.add_argument("--split", default="val")
    p.add_argument("--prompts", choices=("single", "ensemble"), default="ensemble")
    p.add_argument("--out-dir", required=True, dest="out_dir")
    p.add_argument(
        "--data-root",
        default=os.environ.get("INMAP_DATA_ROOT", "."),
        help="directory containing <dataset>/<split>/<class>/... (env INMAP_DATA_ROOT)",
    )
    p.add_argument("--batch-size", type=int, default=64, dest="batch_size")
    p.add_argument("--device", default="cpu")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        dataset_dir = Path(args.dataset)
        if not dataset_dir.is_dir():
            dataset_dir = Path(args.data_root) / args.dataset
        split = load_split(dataset_dir, args.split)
        encoder = ClipEncoder.load(args.model, device=args.device)
        manifest = export_features(
            encoder,
            split,
            args.out_dir,
            prompt_mode=args.prompts,
            dataset_name=args.dataset,
            split_name=args.split,
            batch_size=args.batch_size,
        )
    except ExportError as exc:
        print(f"inmap-export: fatal: {exc}", file=sys.stderr)
        return 1
    print(
        f"exported {manifest['num_images']} images, {manifest['num_classes']} classes, "
        f"dim {manifest['feature_dim']} -> {args.out_dir}"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
