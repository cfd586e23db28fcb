from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Mapping, Sequence, Tuple

import numpy as np
import pandas as pd

from engine.blackbox.hyper import UsageCounter, usage_ratio
from engine.grid.core import hamming, path_cost
from engine.utils.io import write_table

METRIC_COLUMNS = [
    "epoch",
    "split",
    "exact_cost_match_acc",
    "per_cell_acc",
    "mean_hamming",
    "avg_batch_time_s",
    "avg_batch_time_norm",
    "tcr_term",
    "l1_term",
    "astar_count",
    "dijkstra_count",
    "usage_ratio",
]

# Written after the schema columns when a run sets extra_metric_columns.
EXTRA_METRIC_COLUMNS = ["avg_backward_time_norm", "total_loss"]

COST_MATCH_TOLERANCE = 1e-9


@dataclass
class EpochMetrics:
    epoch: int
    split: str
    exact_cost_match_acc: float
    per_cell_acc: float
    mean_hamming: float
    avg_batch_time_s: float
    avg_batch_time_norm: float
    tcr_term: float
    l1_term: float
    astar_count: int | None = None
    dijkstra_count: int | None = None
    usage_ratio: float | None = None
    avg_backward_time_norm: float = 0.0

    @property
    def total_loss(self) -> float:
        return self.mean_hamming + self.l1_term + self.tcr_term

    def to_dict(self) -> Mapping:
        payload = asdict(self)
        payload["total_loss"] = self.total_loss
        return payload


@dataclass
class EpochAccumulator:
    """Running sums for one epoch on one split."""

    k: int
    samples: int = 0
    cost_matches: int = 0
    hamming_total: float = 0.0
    tcr_total: float = 0.0
    batch_seconds: List[float] = field(default_factory=list)
    batch_norm: List[float] = field(default_factory=list)
    backward_norm: List[float] = field(default_factory=list)
    l1_terms: List[float] = field(default_factory=list)

    def add_sample(self, hamming_distance: int, cost_match: bool, tcr: float) -> None:
        self.samples += 1
        self.cost_matches += int(cost_match)
        self.hamming_total += hamming_distance
        self.tcr_total += tcr

    def add_batch(self, seconds: float, norm: float, backward_norm: float, l1_term: float) -> None:
        self.batch_seconds.append(seconds)
        self.batch_norm.append(norm)
        self.backward_norm.append(backward_norm)
        self.l1_terms.append(l1_term)

    def finalize(
        self,
        epoch: int,
        split: str,
        counter: UsageCounter | None = None,
        record_wall_time: bool = True,
    ) -> EpochMetrics:
        if self.samples == 0:
            raise ValueError(f"no samples recorded for epoch {epoch} on '{split}'")
        mean_hamming = self.hamming_total / self.samples
        return EpochMetrics(
            epoch=epoch,
            split=split,
            exact_cost_match_acc=self.cost_matches / self.samples,
            per_cell_acc=1.0 - mean_hamming / (self.k * self.k),
            mean_hamming=mean_hamming,
            avg_batch_time_s=float(np.mean(self.batch_seconds)) if record_wall_time else math.nan,
            avg_batch_time_norm=float(np.mean(self.batch_norm)),
            tcr_term=self.tcr_total / self.samples,
            l1_term=float(np.mean(self.l1_terms)),
            astar_count=counter.astar_count if counter is not None else None,
            dijkstra_count=counter.dijkstra_count if counter is not None else None,
            usage_ratio=usage_ratio(counter) if counter is not None else None,
            avg_backward_time_norm=float(np.mean(self.backward_norm)),
        )


def score_path(
    true_weights: np.ndarray, true_mask: np.ndarray, optimal_cost: float, predicted: np.ndarray
) -> Tuple[int, bool]:
    """Hamming distance to the label and whether the true-weight cost matches the optimum."""

    match = abs(path_cost(true_weights, predicted) - optimal_cost) <= COST_MATCH_TOLERANCE
    return hamming(predicted, true_mask), bool(match)


def metric_columns(extra: bool = False) -> List[str]:
    return METRIC_COLUMNS + EXTRA_METRIC_COLUMNS if extra else list(METRIC_COLUMNS)


def metrics_frame(rows: Sequence[EpochMetrics], extra: bool = False) -> pd.DataFrame:
    return pd.DataFrame([row.to_dict() for row in rows], columns=metric_columns(extra))


def write_metrics(path: str | Path, rows: Sequence[EpochMetrics], extra: bool = False) -> Path:
    return write_table(path, [row.to_dict() for row in rows], metric_columns(extra))


def read_metrics(path: str | Path) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip")
