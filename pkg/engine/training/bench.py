"""Solver comparison over generated weight-grid families."""
from __future__ import annotations

import math
from pathlib import Path
from typing import Dict, List

import numpy as np
import pandas as pd

from engine.grid.core import GridProblem, WeightGrid
from engine.solvers.search import make_solver
from engine.training.config import ConfigError, RunConfig
from engine.training.harness import load_model, load_split, log, predict_masks
from engine.utils.io import write_table

BENCH_SOLVERS = ("dijkstra", "astar_zero", "astar")
BENCH_COLUMNS = [
    "family",
    "solver",
    "k",
    "instances",
    "mean_expansions",
    "mean_relaxations",
    "mean_heuristic_evals",
    "mean_wall_seconds",
    "mean_cost",
]
BENCH_NAME = "bench.csv"

CONTRAST_PATH_WEIGHT = 0.1
CONTRAST_OFF_PATH_WEIGHT = 10_000.0


def uniform_grid(k: int, value: float = 1.0) -> WeightGrid:
    return np.full((k, k), float(value))


def contrast_grid(k: int, path: float = CONTRAST_PATH_WEIGHT, off_path: float = CONTRAST_OFF_PATH_WEIGHT) -> WeightGrid:
    """Cheap main diagonal through expensive ground: the shortest path is the diagonal."""

    grid = np.full((k, k), float(off_path))
    np.fill_diagonal(grid, path)
    return grid


def random_grid(rng: np.random.Generator, k: int, low: float = 0.1, high: float = 10.0) -> WeightGrid:
    return rng.uniform(low, high, size=(k, k))


def build_family(family: str, config: RunConfig, checkpoint: str | Path | None = None) -> List[WeightGrid]:
    k = config.bench_k
    if family == "uniform":
        return [uniform_grid(k)]
    if family == "contrast":
        return [contrast_grid(k)]
    if family == "random":
        rng = np.random.default_rng([config.seed, k])
        return [random_grid(rng, k) for _ in range(config.bench_instances)]
    if family == "model":
        if checkpoint is None:
            raise ConfigError("bench family 'model' needs --checkpoint")
        samples, manifest = load_split(config, config.eval_split)
        params, spec = load_model(checkpoint, manifest)
        predicted = predict_masks(params, spec, samples[: config.bench_instances], config)
        return list(predicted["weights"])
    raise ConfigError(f"unknown bench family '{family}'")


def run_family(family: str, grids: List[WeightGrid], record_wall_time: bool = True) -> pd.DataFrame:
    records: List[Dict] = []
    for index, weights in enumerate(grids):
        problem = GridProblem.default(weights.shape[0])
        for name in BENCH_SOLVERS:
            result = make_solver(name, problem)(weights)
            records.append(
                {
                    "family": family,
                    "solver": name,
                    "k": weights.shape[0],
                    "instance": index,
                    "expansions": result.stats.expansions,
                    "relaxations": result.stats.relaxations,
                    "heuristic_evals": result.stats.heuristic_evals,
                    "wall_seconds": result.stats.wall_seconds if record_wall_time else math.nan,
                    "cost": result.cost,
                }
            )
    return pd.DataFrame.from_records(records)


def summarize(runs: pd.DataFrame) -> pd.DataFrame:
    grouped = runs.groupby(["family", "solver", "k"], sort=False)
    summary = grouped.agg(
        instances=("instance", "count"),
        mean_expansions=("expansions", "mean"),
        mean_relaxations=("relaxations", "mean"),
        mean_heuristic_evals=("heuristic_evals", "mean"),
        mean_wall_seconds=("wall_seconds", "mean"),
        mean_cost=("cost", "mean"),
    )
    return summary.reset_index()[BENCH_COLUMNS]


def cmd_bench(config: RunConfig, checkpoint: str | Path | None = None) -> pd.DataFrame:
    families = list(config.families)
    if checkpoint is not None and "model" not in families:
        families.append("model")
    frames = []
    for family in families:
        grids = build_family(family, config, checkpoint)
        frames.append(run_family(family, grids, config.record_wall_time))
        log(config, f"[bench] {family}: {len(grids)} grid(s) x {len(BENCH_SOLVERS)} solvers")

    summary = summarize(pd.concat(frames, ignore_index=True))
    target = write_table(Path(config.output_dir) / BENCH_NAME, summary.to_dict("records"), BENCH_COLUMNS, "%.10g")
    for row in summary.itertuples(index=False):
        log(config, f"[bench] {row.family:<8} {row.solver:<10} k={row.k} expansions={row.mean_expansions:.1f}")
    log(config, f"[bench] wrote {target}")
    return summary
