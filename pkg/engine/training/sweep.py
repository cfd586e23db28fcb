"""Method sweep: one training run per method file, pivoted into method x epoch tables."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List

import pandas as pd

from engine.training.config import ConfigError, RunConfig, layer_config, parse_config_text
from engine.training.harness import cmd_train, log
from engine.training.metrics import metrics_frame
from engine.utils.io import ensure_parent

METHOD_SUFFIX = ".cfg"

# table file -> (metric column, split it is read from); "eval" means the run's eval_split.
SWEEP_TABLES = {
    "accuracy_by_epoch.csv": ("exact_cost_match_acc", "eval"),
    "batch_time_by_epoch.csv": ("avg_batch_time_norm", "train"),
    "usage_by_epoch.csv": ("usage_ratio", "train"),
}

# Every method trains and evaluates on the same data.
SHARED_KEYS = {
    "dataset",
    "seed",
    "k",
    "p",
    "palette",
    "train_count",
    "val_count",
    "test_count",
    "eval_split",
    "output_dir",
}


@dataclass
class SweepReport:
    runs: Dict[str, Path] = field(default_factory=dict)
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)
    long: pd.DataFrame | None = None


def discover_methods(methods_dir: str | Path) -> Dict[str, Path]:
    root = Path(methods_dir)
    if not root.is_dir():
        raise ConfigError(f"methods directory not found: {root}")
    methods = {path.stem: path for path in sorted(root.glob(f"*{METHOD_SUFFIX}"))}
    if not methods:
        raise ConfigError(f"no *{METHOD_SUFFIX} method files in {root}")
    return methods


def method_config(base: RunConfig, name: str, path: Path) -> RunConfig:
    values = parse_config_text(path.read_text())
    shared = sorted(SHARED_KEYS & set(values))
    if shared:
        raise ConfigError(f"method '{name}' may not set shared keys {shared}")
    values["output_dir"] = str(Path(base.output_dir) / name)
    return layer_config(base, values)


def pivot_tables(long: pd.DataFrame, eval_split: str, order: List[str]) -> Dict[str, pd.DataFrame]:
    tables = {}
    for filename, (column, split) in SWEEP_TABLES.items():
        rows = long[long["split"] == (eval_split if split == "eval" else split)]
        table = rows.pivot(index="method", columns="epoch", values=column).reindex(order)
        table.columns = [f"epoch_{epoch}" for epoch in table.columns]
        tables[filename] = table
    return tables


def cmd_sweep(config: RunConfig, methods_dir: str | Path) -> SweepReport:
    if config.eval_split == "train":
        raise ConfigError("a sweep needs an eval_split other than train; its rows would collide with the training rows")
    methods = discover_methods(methods_dir)
    # Fail on a bad method file before any training starts.
    configs = {name: method_config(config, name, path) for name, path in methods.items()}
    log(config, f"[sweep] {len(configs)} methods: {', '.join(configs)}")

    report = SweepReport()
    frames = []
    for name, method in configs.items():
        log(config, f"[sweep] {name}: solver={method.solver} lambda_t={method.lambda_t} alpha_l1={method.alpha_l1}")
        run = cmd_train(method)
        report.runs[name] = run.run_dir
        frame = metrics_frame(run.metrics)
        frame.insert(0, "method", name)
        frames.append(frame)

    report.long = pd.concat(frames, ignore_index=True)
    report.tables = pivot_tables(report.long, config.eval_split, list(configs))
    out_dir = Path(config.output_dir)
    for filename, table in report.tables.items():
        table.to_csv(ensure_parent(out_dir / filename), index_label="method", lineterminator="\n")
    log(config, f"[sweep] wrote {', '.join(report.tables)} to {out_dir}")
    return report
