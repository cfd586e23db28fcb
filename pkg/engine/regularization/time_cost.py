from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from engine.grid.core import PathMask
from engine.solvers.search import SolveResult, SolverStats

TIME_UNITS = {"expansions_normalized", "operations_normalized", "wall_seconds"}
GRAD_MODES = {"monitor", "contrast"}


@dataclass(frozen=True)
class TimeCostConfig:
    lambda_t: float = 0.0
    unit: str = "expansions_normalized"
    grad_mode: str = "monitor"
    kappa: float | None = None

    def __post_init__(self) -> None:
        if self.lambda_t < 0:
            raise ValueError(f"lambda_t must be non-negative, got {self.lambda_t}")
        if self.unit not in TIME_UNITS:
            raise ValueError(f"Unknown time unit '{self.unit}'; expected one of {sorted(TIME_UNITS)}")
        if self.grad_mode not in GRAD_MODES:
            raise ValueError(f"Unknown grad mode '{self.grad_mode}'; expected one of {sorted(GRAD_MODES)}")
        if self.kappa is not None and not self.kappa > 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")

    def resolved_kappa(self, k: int) -> float:
        if self.kappa is not None:
            return self.kappa
        return 1.0 / (k * k)


def expansion_mask(result: SolveResult) -> np.ndarray:
    return result.expansion_mask()


def time_cost(stats: SolverStats, k: int, cfg: TimeCostConfig) -> float:
    """t(f_B(x)) in the configured unit."""

    if cfg.unit == "wall_seconds":
        return float(stats.wall_seconds)
    if cfg.unit == "operations_normalized":
        return (stats.expansions + stats.relaxations + stats.heuristic_evals) / (k * k)
    return stats.expansions / (k * k)


def tcr_term(t: float, cfg: TimeCostConfig) -> float:
    if t < 0:
        raise ValueError(f"time cost must be non-negative, got {t}")
    return cfg.lambda_t * t


def tcr_weight_grad(expanded: np.ndarray, path: PathMask, cfg: TimeCostConfig) -> np.ndarray:
    """Surrogate gradient of the time cost with respect to the weights.

    ``monitor`` contributes nothing; ``contrast`` is negative on cells that were
    expanded but are off the path, so a descent step raises their weight.
    """

    v = np.asarray(expanded, dtype=float)
    y = np.asarray(path, dtype=float)
    if v.shape != y.shape:
        raise ValueError(f"expansion mask shape {v.shape} does not match path shape {y.shape}")
    if cfg.grad_mode == "monitor":
        return np.zeros_like(v)
    kappa = cfg.resolved_kappa(v.shape[0])
    # Clip at zero: path cells are always expanded, so v - y is 0/1 already.
    return -cfg.lambda_t * kappa * np.clip(v - y, 0.0, 1.0)
