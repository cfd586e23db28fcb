from __future__ import annotations

import argparse
from typing import Sequence

from engine.dataset.storage import DatasetFormatError
from engine.model.checkpoint import CheckpointFormatError
from engine.training.bench import cmd_bench
from engine.training.config import ConfigError, load_config
from engine.training.harness import NumericError, cmd_eval, cmd_gen_data, cmd_inspect, cmd_train
from engine.training.sweep import cmd_sweep

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridpath",
        description="Train networks through blackbox grid shortest-path solvers with time-cost regularization.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(cmd: argparse.ArgumentParser) -> None:
        cmd.add_argument("--config", help="Flat key = value run config file")
        cmd.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="Override one config key (repeatable)",
        )

    add_common(sub.add_parser("gen-data", help="Generate the synthetic terrain dataset"))
    add_common(sub.add_parser("train", help="Train the model and write metrics + checkpoints"))

    eval_cmd = sub.add_parser("eval", help="Score a checkpoint on a dataset split")
    add_common(eval_cmd)
    eval_cmd.add_argument("--checkpoint", required=True, help="Checkpoint file to evaluate")

    bench_cmd = sub.add_parser("bench", help="Compare solver expansions on grid families")
    add_common(bench_cmd)
    bench_cmd.add_argument("--checkpoint", help="Add the 'model' family using this checkpoint's predicted weights")

    sweep_cmd = sub.add_parser("sweep", help="Train every method file and tabulate metrics by method and epoch")
    add_common(sweep_cmd)
    sweep_cmd.add_argument("--methods-dir", default="configs/methods", help="Directory of per-method *.cfg files")

    inspect_cmd = sub.add_parser("inspect", help="Print a sample's weights and path as text art")
    add_common(inspect_cmd)
    inspect_cmd.add_argument("--split", default="test", choices=["train", "val", "test"])
    inspect_cmd.add_argument("--index", type=int, default=0)
    inspect_cmd.add_argument("--checkpoint", help="Also show the model's predicted weights and path")
    return parser


def run(args: argparse.Namespace) -> None:
    config = load_config(args.config, args.overrides)
    if args.command == "gen-data":
        cmd_gen_data(config)
    elif args.command == "train":
        cmd_train(config)
    elif args.command == "eval":
        cmd_eval(config, args.checkpoint)
    elif args.command == "bench":
        cmd_bench(config, args.checkpoint)
    elif args.command == "sweep":
        cmd_sweep(config, args.methods_dir)
    elif args.command == "inspect":
        cmd_inspect(config, args.split, args.index, args.checkpoint)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        run(args)
    except ConfigError as exc:
        print(f"[ERROR] config: {exc}")
        return EXIT_CONFIG
    except (DatasetFormatError, CheckpointFormatError, FileNotFoundError) as exc:
        print(f"[ERROR] data: {exc}")
        return EXIT_DATA
    except NumericError as exc:
        print(f"[ERROR] numeric: {exc}")
        return EXIT_NUMERIC
    return EXIT_OK
