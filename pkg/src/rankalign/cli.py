"""Command-line surface tying the pipeline together.

Every command writes a run manifest next to its primary output: the exact
command line, the resolved configuration, SHA-256 digests of each input
file, the package version, the active compute backend, and the wall-clock
duration.  Output content is deterministic for fixed inputs and seed;
only the duration field differs between identical reruns.

Exit codes: 0 success, 2 input validation or parse failure, 3 numerical
failure, 4 I/O failure.
"""

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

from rankalign import __version__, boot, dataset, distx, stats, synth, train
from rankalign import kernels
from rankalign.errors import (FormatError, NumericalError, SchemaMismatchError,
                              UndefinedStatisticError, ValidationError)
from rankalign.model import LayerSchema, load_weights, save_weights


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


# argv actually parsed by main(); sys.argv fallback covers direct cmd_* use
_RUN_ARGV: list | None = None


def _write_manifest(out_path, command: str, config: dict, inputs: list,
                    started: float) -> None:
    doc = {
        "command": command,
        "argv": list(_RUN_ARGV) if _RUN_ARGV is not None else sys.argv[1:],
        "config": config,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "version": __version__,
        "backend": kernels.BACKEND,
        "duration_s": time.monotonic() - started,
    }
    with open(f"{out_path}.manifest.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def _parse_layers(spec: str) -> LayerSchema:
    """Parse 'name:channels,...'; bare counts get names layer0, layer1, ..."""
    entries = []
    for i, part in enumerate(spec.split(",")):
        part = part.strip()
        if not part:
            raise ValidationError(f"empty layer entry in {spec!r}")
        if ":" in part:
            name, _, count = part.partition(":")
        else:
            name, count = f"layer{i}", part
        try:
            entries.append((name.strip(), int(count)))
        except ValueError as exc:
            raise ValidationError(
                f"bad channel count {count!r} in layer spec {spec!r}") from exc
    return LayerSchema(tuple(entries))


def cmd_build_pairs(args) -> int:
    started = time.monotonic()
    sets = dataset.load_rankings(args.rankings)
    pairs = dataset.build_all_pairs(sets, args.scheme)
    dataset.save_pairs(pairs, args.out)
    _write_manifest(args.out, "build-pairs",
                    {"rankings": str(args.rankings), "scheme": args.scheme,
                     "out": str(args.out)},
                    [args.rankings], started)
    print(f"wrote {len(pairs)} pairs from {len(sets)} sets to {args.out}")
    return 0


def cmd_split(args) -> int:
    started = time.monotonic()
    sets = dataset.load_rankings(args.rankings)
    plan = dataset.split_sets(sets, args.train_fraction, args.seed)
    dataset.save_split(plan, args.out)
    _write_manifest(args.out, "split",
                    {"rankings": str(args.rankings),
                     "train_fraction": args.train_fraction, "seed": args.seed,
                     "out": str(args.out)},
                    [args.rankings], started)
    print(f"split {len(plan.train_set_ids)} train / {len(plan.val_set_ids)} "
          f"val sets to {args.out}")
    return 0


def cmd_train(args) -> int:
    started = time.monotonic()
    schema, tensors = distx.read_archive(args.distances)
    sets = dataset.load_rankings(args.rankings)
    split = dataset.load_split(args.split)
    init = load_weights(args.init) if args.init else None
    config = train.TrainConfig(
        margin=args.margin, learning_rate=args.lr, batch_size=args.batch,
        max_epochs=args.epochs, patience=args.patience, seed=args.seed)
    trace = train.fit(schema, tensors, sets, split, config, init=init,
                      pair_scheme=args.scheme, per_layer=args.per_layer)
    save_weights(trace.head, args.out)
    trace_path = args.trace or f"{args.out}.trace.json"
    train.save_trace(trace, trace_path)
    inputs = [args.distances, args.rankings, args.split]
    if args.init:
        inputs.append(args.init)
    _write_manifest(args.out, "train",
                    {"distances": str(args.distances),
                     "rankings": str(args.rankings), "split": str(args.split),
                     "init": str(args.init) if args.init else None,
                     "margin": config.margin, "lr": config.learning_rate,
                     "batch": config.batch_size, "epochs": config.max_epochs,
                     "patience": config.patience, "seed": config.seed,
                     "adam_beta1": config.adam_beta1,
                     "adam_beta2": config.adam_beta2,
                     "adam_epsilon": config.adam_epsilon,
                     "scheme": args.scheme, "per_layer": args.per_layer,
                     "out": str(args.out), "trace": str(trace_path)},
                    inputs, started)
    if trace.records:
        best = trace.best_epoch
        rho = trace.records[best].val_rho if best is not None else float("nan")
        print(f"trained {len(trace.records)} epochs; best epoch {best} "
              f"(validation rho {rho:.4f}); weights -> {args.out}")
    else:
        print(f"no epochs run; initialization written to {args.out}")
    return 0


def cmd_eval(args) -> int:
    started = time.monotonic()
    _, tensors = distx.read_archive(args.distances)
    sets = dataset.load_rankings(args.rankings)
    head = load_weights(args.weights)
    report = stats.evaluate(head, tensors, sets, mode=args.aggregate,
                            raw_scores=args.raw_scores,
                            confidence=args.confidence)
    stats.save_report(report, args.out)
    csv_path = args.out_csv or _default_csv_path(args.out)
    stats.save_report_csv(report, csv_path)
    _write_manifest(args.out, "eval",
                    {"distances": str(args.distances),
                     "rankings": str(args.rankings),
                     "weights": str(args.weights),
                     "aggregate": args.aggregate,
                     "raw_scores": args.raw_scores,
                     "confidence": args.confidence,
                     "out": str(args.out), "out_csv": str(csv_path)},
                    [args.distances, args.rankings, args.weights], started)
    print(f"spearman_rho={report.spearman_rho:.6f} (p={report.spearman_p:.3g})  "
          f"icc2k={report.icc2k:.6f} (p={report.icc_p:.3g}, "
          f"ci=[{report.icc_ci_low:.4f}, {report.icc_ci_high:.4f}])")
    print(f"bands: koo_li={report.koo_li_band}  "
          f"cicchetti={report.cicchetti_band}")
    return 0


def _default_csv_path(out) -> str:
    p = Path(out)
    candidate = p.with_suffix(".csv")
    if str(candidate) == str(p):
        candidate = Path(f"{p}.rows.csv")
    return str(candidate)


def cmd_bootstrap(args) -> int:
    started = time.monotonic()
    _, tensors = distx.read_archive(args.distances)
    sets = dataset.load_rankings(args.rankings)
    head_a = load_weights(args.weights_a)
    head_b = load_weights(args.weights_b)
    result = boot.paired_bootstrap(tensors, sets, head_a, head_b,
                                   resamples=args.resamples, seed=args.seed,
                                   confidence=args.confidence)
    boot.save_bootstrap(result, args.out)
    if args.deltas_csv:
        boot.save_deltas_csv(result, args.deltas_csv)
    _write_manifest(args.out, "bootstrap",
                    {"distances": str(args.distances),
                     "rankings": str(args.rankings),
                     "weights_a": str(args.weights_a),
                     "weights_b": str(args.weights_b),
                     "resamples": args.resamples, "seed": args.seed,
                     "confidence": args.confidence, "out": str(args.out),
                     "deltas_csv": str(args.deltas_csv) if args.deltas_csv else None},
                    [args.distances, args.rankings, args.weights_a,
                     args.weights_b], started)
    print(f"delta_icc_mean={result.delta_icc_mean:.6f}  "
          f"ci=[{result.ci_low:.6f}, {result.ci_high:.6f}]  "
          f"p={result.p_value:.3g}  redraws={result.redraws}")
    return 0


def cmd_synth(args) -> int:
    started = time.monotonic()
    schema = _parse_layers(args.layers)
    config = synth.SynthConfig(
        set_count=args.sets, schema=schema,
        images_per_set=args.images_per_set, noise_swaps=args.noise_swaps,
        seed=args.seed, value_scale=args.value_scale)
    hidden, tensors, sets = synth.generate(config)
    prefix = args.out_prefix
    archive_path = f"{prefix}.fdx"
    rankings_path = f"{prefix}.rankings.jsonl"
    hidden_path = f"{prefix}.hidden.json"
    distx.write_archive(archive_path, schema, tensors)
    dataset.save_rankings(sets, rankings_path)
    save_weights(hidden, hidden_path)
    _write_manifest(prefix, "synth",
                    {"sets": args.sets, "images_per_set": args.images_per_set,
                     "layers": args.layers, "noise_swaps": args.noise_swaps,
                     "seed": args.seed, "value_scale": args.value_scale,
                     "out_prefix": str(prefix)},
                    [], started)
    print(f"wrote {len(tensors)} tensors / {len(sets)} sets under {prefix}.*")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rankalign",
        description="Align a learned image-distance metric with human "
                    "similarity rankings and quantify the agreement.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-pairs",
                       help="convert rankings into supervision pairs")
    p.add_argument("--rankings", required=True)
    p.add_argument("--scheme", choices=dataset.PAIR_SCHEMES,
                   default="all_pairs")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_pairs)

    p = sub.add_parser("split", help="make a set-level train/val split")
    p.add_argument("--rankings", required=True)
    p.add_argument("--train-fraction", type=float, default=0.7)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="fine-tune combination weights")
    p.add_argument("--distances", required=True)
    p.add_argument("--rankings", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--init", default=None,
                   help="initial weights (default: all ones)")
    p.add_argument("--lr", type=float, default=4e-4)
    p.add_argument("--batch", type=int, default=256)
    p.add_argument("--margin", type=float, default=0.03)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scheme", choices=dataset.PAIR_SCHEMES,
                   default="all_pairs")
    p.add_argument("--per-layer", action="store_true",
                   help="tie weights to one scalar per layer")
    p.add_argument("--out", required=True)
    p.add_argument("--trace", default=None,
                   help="trace path (default: <out>.trace.json)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score weights against human rankings")
    p.add_argument("--distances", required=True)
    p.add_argument("--rankings", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--aggregate", choices=stats.EVAL_MODES, default="merged")
    p.add_argument("--raw-scores", action="store_true",
                   help="correlate raw pooled distances instead of "
                        "within-set ranks (merged rho only)")
    p.add_argument("--confidence", type=float, default=0.95)
    p.add_argument("--out", required=True)
    p.add_argument("--out-csv", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bootstrap",
                       help="paired bootstrap comparing two weight heads")
    p.add_argument("--distances", required=True)
    p.add_argument("--rankings", required=True)
    p.add_argument("--weights-a", required=True)
    p.add_argument("--weights-b", required=True)
    p.add_argument("--resamples", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--confidence", type=float, default=0.95)
    p.add_argument("--out", required=True)
    p.add_argument("--deltas-csv", default=None)
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("synth", help="generate planted-model synthetic data")
    p.add_argument("--sets", type=int, required=True)
    p.add_argument("--images-per-set", type=int, default=10)
    p.add_argument("--layers", default="conv1:8,conv2:16,conv3:32",
                   help="comma-separated name:channels entries")
    p.add_argument("--noise-swaps", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--value-scale", type=float, default=1.0)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    global _RUN_ARGV
    _RUN_ARGV = sys.argv[1:] if argv is None else list(argv)
    threads = os.environ.get("RANKALIGN_THREADS")
    if threads and kernels.BACKEND == "numba":
        import numba
        numba.set_num_threads(max(1, int(threads)))
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UndefinedStatisticError, NumericalError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ValidationError, SchemaMismatchError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
