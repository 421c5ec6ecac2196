"""Command line for turning image pairs into FDX distance archives.

Mirrors the consumer tool's conventions: a JSON run manifest is written
beside the archive recording the argv, the resolved configuration
(including the preprocessing spec verbatim and the pinned backbone
digest), SHA-256 of every input file, the package version, and the
wall-clock duration. Exit codes: 0 success, 2 validation or parse
failure, 3 numerical failure, 4 I/O failure.
"""

import argparse
import hashlib
import json
import sys
import time

from featx import __version__, extract, fdx
from featx.backbone import load_backbone
from featx.errors import BackboneError, ImageDecodeError, ManifestError
from featx.manifest import load_manifest


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def cmd_extract(args) -> int:
    started = time.monotonic()
    spec = extract.PreprocessSpec(resize_edge=args.resize,
                                  center_crop=args.center_crop)
    rows = load_manifest(args.manifest)
    backbone = load_backbone(args.backbone_weights)
    records = extract.extract_records(backbone, rows, spec,
                                      batch_size=args.batch)
    count = extract.write_records(args.out, backbone, records)

    baseline_path = None
    if args.linear_weights:
        arrays = extract.convert_linear_checkpoint(args.linear_weights,
                                                   backbone)
        baseline_path = args.baseline_out or f"{args.out}.baseline.json"
        fdx.write_weight_head(
            baseline_path,
            list(zip(backbone.layer_names, backbone.channel_counts)),
            arrays)

    inputs = [args.manifest]
    if args.backbone_weights:
        inputs.append(args.backbone_weights)
    if args.linear_weights:
        inputs.append(args.linear_weights)
    manifest_doc = {
        "command": "extract",
        "argv": args.run_argv,
        "config": {
            "manifest": str(args.manifest),
            "backbone_weights": str(args.backbone_weights)
            if args.backbone_weights else None,
            "backbone_digest": backbone.weights_digest,
            "linear_weights": str(args.linear_weights)
            if args.linear_weights else None,
            "preprocess": spec.to_dict(),
            "batch": args.batch,
            "out": str(args.out),
            "baseline_out": str(baseline_path) if baseline_path else None,
        },
        "inputs": {str(p): _sha256(p) for p in inputs},
        "version": __version__,
        "duration_s": time.monotonic() - started,
    }
    with open(f"{args.out}.manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest_doc, fh, indent=1)
        fh.write("\n")
    print(f"wrote {count} records over {len(backbone.layer_names)} layers "
          f"to {args.out}")
    if baseline_path:
        print(f"baseline weights -> {baseline_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="featx",
        description="Extract per-channel deep-feature distances for "
                    "(target, image) pairs into an FDX archive.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="run the backbone over a pair manifest")
    p.add_argument("--manifest", required=True,
                   help="CSV of set_id,target_path,image_id,image_path")
    p.add_argument("--backbone-weights", default=None,
                   help="state-dict path (default: torchvision pretrained)")
    p.add_argument("--linear-weights", default=None,
                   help="reference linear checkpoint to convert to a "
                        "baseline weight head")
    p.add_argument("--resize", type=int, default=64)
    p.add_argument("--center-crop", type=int, default=None)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--out", required=True)
    p.add_argument("--baseline-out", default=None,
                   help="baseline head path (default: <out>.baseline.json)")
    p.set_defaults(func=cmd_extract)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    # record the argv actually parsed, not the host process's
    args.run_argv = sys.argv[1:] if argv is None else list(argv)
    try:
        return args.func(args)
    except (ManifestError, ImageDecodeError, BackboneError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
