"""Command line entry point: ``arbnets <subcommand> [flags]`` or ``python -m arbnets``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .arbnet import save_checkpoint
from .errors import LoadError, UsageError
from .experiments import (ExperimentConfig, check_conv_equivalence, check_rnn_tying, emit_heatmap_data,
                          rows_to_csv, run_dirichlet_sweep, run_neighborhood_sweep, train_once)
from .hashing import atomic_write_text
from .numerics import RngStream
from .train import TrainConfig

log = logging.getLogger("arbnets")


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _dims(text):
    out = []
    for item in text.split(","):
        h, w = item.lower().split("x")
        out.append((int(h), int(w)))
    return out


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--dataset", choices=["mnist", "cifar10", "synthetic"], default="mnist")
    common.add_argument("--data-dir", default="data/mnist")
    common.add_argument("--alphas", type=_floats, default=[0.01, 0.1, 1.0, 10.0, 100.0])
    common.add_argument("--radii", type=_ints, default=[0, 10, 100, 500])
    common.add_argument("--sparsities", type=_floats, default=[0.1, 0.5, 0.9])
    common.add_argument("--table-size", type=int, default=1000)
    common.add_argument("--scope", choices=["per_layer", "global"], default="per_layer")
    common.add_argument("--seeds", type=_ints, default=[0, 1, 2])
    common.add_argument("--epochs", type=int, default=None, help="default 5, or 30 with --full")
    common.add_argument("--batch-size", type=int, default=128)
    common.add_argument("--lr", type=float, default=0.1)
    common.add_argument("--momentum", type=float, default=0.9)
    common.add_argument("--subset", type=int, default=None, help="training subset size (default 10000, all with --full)")
    common.add_argument("--full", action="store_true", help="full-scale profile: whole training set, 30 epochs")
    common.add_argument("--out", default=None)
    common.add_argument("--format", choices=["csv", "json"], default="csv")
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--assignment-dir", default=None, help="also write each layer's active assignment here")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="arbnets", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("dirichlet-sweep", parents=[common], help="accuracy and entropy across Dirichlet alphas")
    sub.add_parser("neighborhood-sweep", parents=[common], help="accuracy across neighborhood radii")
    sub.add_parser("heatmap", parents=[common], help="one Dirichlet draw per alpha as CSV rows")
    p = sub.add_parser("check-conv", parents=[common], help="unrolled convolution vs direct convolution")
    p.add_argument("--filters", type=_dims, default=[(1, 1), (2, 2), (3, 3), (5, 5)])
    p.add_argument("--inputs", type=_dims, default=[(5, 5), (8, 8), (9, 13), (16, 16)])
    p.add_argument("--trials", type=int, default=20)
    p = sub.add_parser("check-rnn", parents=[common], help="modulus hash ties every layer's weights")
    p.add_argument("--width", type=int, default=8)
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--steps", type=int, default=10)
    p = sub.add_parser("train", parents=[common], help="one build-train-evaluate run")
    p.add_argument("--hash", choices=["identity", "modulus", "uniform", "dirichlet", "neighborhood"],
                   default="identity")
    p.add_argument("--checkpoint", default=None, help="save the trained network here (.npz)")
    return parser


def config_from_args(args, experiment):
    epochs = args.epochs if args.epochs is not None else (30 if args.full else 5)
    subset = args.subset if args.subset is not None else (None if args.full else 10000)
    return ExperimentConfig(
        experiment=experiment, dataset=args.dataset, data_dir=args.data_dir,
        hash=getattr(args, "hash", "identity"), alphas=args.alphas, radii=args.radii,
        sparsities=args.sparsities, table_size=args.table_size, scope=args.scope, seeds=args.seeds,
        train=TrainConfig(lr=args.lr, momentum=args.momentum, epochs=epochs, batch_size=args.batch_size,
                          seed=args.seeds[0]),
        subset=subset, out=args.out, format=args.format, workers=args.workers,
        assignment_dir=args.assignment_dir)


def _emit(text, out):
    if out is None:
        sys.stdout.write(text)
    else:
        atomic_write_text(out, text)


def _report_csv(records):
    keys = list(records[0])
    lines = [",".join(keys)]
    for r in records:
        lines.append(",".join(repr(v) if isinstance(v, float) else str(v) for v in r.values()))
    return "\n".join(lines) + "\n"


def run(args) -> int:
    cmd = args.command
    if cmd in ("dirichlet-sweep", "neighborhood-sweep", "train"):
        config = config_from_args(args, {"dirichlet-sweep": "dirichlet_sweep",
                                         "neighborhood-sweep": "neighborhood_sweep",
                                         "train": "train_once"}[cmd])
        if cmd == "train":
            row, _, net = train_once(config, on_epoch=lambda r: log.info("epoch %(epoch)d lr=%(lr)g "
                                                                        "loss=%(train_loss).4f acc=%(train_acc).4f", r))
            rows = [row]
            if args.checkpoint:
                save_checkpoint(net, args.checkpoint, seed=config.seeds[0])
        elif cmd == "dirichlet-sweep":
            rows = run_dirichlet_sweep(config)
        else:
            rows = run_neighborhood_sweep(config)
        if config.out is None:
            sys.stdout.write(rows_to_csv(rows))
        return 0

    if cmd == "heatmap":
        out = args.out or "heatmap.csv"
        emit_heatmap_data(args.alphas, args.table_size, RngStream(args.seeds[0], "heatmap"), out)
        atomic_write_text(out + ".json", json.dumps({"alphas": args.alphas, "n": args.table_size,
                                                     "seed": args.seeds[0]}, indent=2) + "\n")
        return 0

    if cmd == "check-conv":
        stream = RngStream(args.seeds[0], "check-conv")
        records = [check_conv_equivalence(f, i, args.trials, stream.child(f"{f}{i}"))
                   for f in args.filters for i in args.inputs if f[0] <= i[0] and f[1] <= i[1]]
        _emit(_report_csv(records), args.out)
        ok = all(r["passed"] for r in records)
    else:  # check-rnn
        report = check_rnn_tying(args.width, args.depth, args.steps, RngStream(args.seeds[0], "check-rnn"))
        records = [{"step": k + 1, "modulus_max_diff": m, "identity_max_diff": i}
                   for k, (m, i) in enumerate(zip(report["modulus_max_diff"], report["identity_max_diff"]))]
        _emit(_report_csv(records), args.out)
        ok = report["passed"]
    if not ok:
        print(f"{cmd}: FAILED", file=sys.stderr)
        return 1
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return run(args)
    except (UsageError, LoadError, OSError) as exc:
        print(f"arbnets {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
