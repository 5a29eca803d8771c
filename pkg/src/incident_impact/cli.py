"""Command-line entry point: ``incident-impact <command> ...``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import harness
from .bench import VARIANTS as BENCH_VARIANTS
from .bench import complexity_bench, plot_bench
from .checkpoint import CheckpointError
from .io import DatasetError
from .metrics import COLUMNS
from .synthetic import ScenarioConfig


def _cmd_generate(args) -> int:
    config = ScenarioConfig.from_file(args.config) if args.config else ScenarioConfig()
    scenario = harness.generate_dataset(config, args.out)
    print(f"wrote {len(scenario.records)} incident records, {scenario.network.n_sensors} sensors "
          f"on {scenario.network.n_roads} roads to {args.out}")
    return 0


def _cmd_label(args) -> int:
    report = harness.label_dataset(args.data, args.out, t_bv=args.t_bv, t_av=args.t_av)
    print(f"labeled {len(report.labeled)} incidents, rejected {len(report.rejected)}; "
          f"congestion threshold {report.threshold:.2f} mph")
    return 0


def _cmd_train(args) -> int:
    config = harness.TrainConfig.from_file(args.config) if args.config else harness.TrainConfig()
    if args.epochs is not None:
        config = harness.TrainConfig(**{**config.__dict__, "epochs": args.epochs})
    ckpt = harness.train(config, args.data, args.out)
    est = ckpt.estimator
    print(harness.format_table(est.history_, ["epoch", "omega", "loss1", "loss2", "loss3", "total",
                                              "val_dur_mae", "val_len_mae"]))
    print(f"best epoch {est.best_epoch_}; checkpoint {Path(args.out) / harness.CHECKPOINT_NAME}")
    return 0


def _cmd_resume(args) -> int:
    ckpt = harness.resume(args.ckpt, args.epochs, out_path=args.out, data_dir=args.data)
    print(f"trained to epoch {ckpt.epoch}; best epoch {ckpt.estimator.best_epoch_}")
    return 0


def _cmd_eval(args) -> int:
    rows = harness.evaluate(args.ckpt, args.split, data_dir=args.data)
    columns = ["model", "split", *COLUMNS]
    print(harness.format_table(rows, columns))
    if args.out:
        harness.write_table(args.out, rows, columns)
    return 0


def _cmd_ablate(args) -> int:
    config = harness.TrainConfig.from_file(args.config) if args.config else harness.TrainConfig()
    rows = harness.ablate(config, args.data, args.out)
    print(harness.format_table(rows, ["variant", *COLUMNS]))
    return 0


def _cmd_bench(args) -> int:
    variants = [args.variant] if args.variant else list(BENCH_VARIANTS)
    rows = complexity_bench(args.sizes, args.reps, variants, n_roads=args.roads)
    print(harness.format_table(rows))
    if args.out:
        out = Path(args.out)
        harness.write_table(out / "bench.csv", rows)
        plot_bench(rows, out / "bench.png")
    return 0


def _cmd_score_report(args) -> int:
    rows = harness.score_report(args.ckpt, args.incident, data_dir=args.data)
    print(harness.format_table(rows))
    if args.out:
        out = Path(args.out)
        harness.write_table(out / f"scores_{args.incident}.csv", rows)
        harness.plot_score_report(rows, out / f"scores_{args.incident}.png", title=args.incident)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="incident-impact", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="synthesize a network, traffic and planted incidents")
    p.add_argument("--config", help="key = value scenario file (defaults if omitted)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("label", help="label raw incident records with duration and impact length")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--t-bv", type=int, default=6)
    p.add_argument("--t-av", type=int, default=3)
    p.set_defaults(func=_cmd_label)

    p = sub.add_parser("train", help="train on a labeled dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--config", help="key = value training file (defaults if omitted)")
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, help="override the configured epoch count")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("resume", help="continue training a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--epochs", type=int, required=True)
    p.add_argument("--data", help="dataset directory (default: the one recorded in the checkpoint)")
    p.add_argument("--out", help="checkpoint to write (default: overwrite --ckpt)")
    p.set_defaults(func=_cmd_resume)

    p = sub.add_parser("eval", help="metrics of a checkpoint on one split")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--split", choices=harness.SPLITS, default="test")
    p.add_argument("--data", help="dataset directory (default: the one recorded in the checkpoint)")
    p.add_argument("--out", help="also write the table to this CSV file")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("ablate", help="train and evaluate the full model and four ablations")
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--out", help="directory for ablation.csv and per-variant histories")
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("bench", help="forward-time scaling in the number of sensors")
    p.add_argument("--sizes", type=int, nargs="+", default=[400, 800, 1600])
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--variant", choices=BENCH_VARIANTS)
    p.add_argument("--roads", type=int, default=32)
    p.add_argument("--out", help="directory for bench.csv and bench.png")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("score-report", help="per-sensor importance for one incident")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--incident", required=True)
    p.add_argument("--data")
    p.add_argument("--out", help="directory for the CSV table and scatter plot")
    p.set_defaults(func=_cmd_score_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (DatasetError, CheckpointError, KeyError, ValueError, MemoryError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
