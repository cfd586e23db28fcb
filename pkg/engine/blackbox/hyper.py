from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Tuple

import numpy as np

from engine.grid.core import GridProblem, WeightGrid, check_weights
from engine.solvers.search import GridSolver, SolveResult, make_solver

ASTAR = "astar"
DIJKSTRA = "dijkstra"
HYPER_MODES = {"learned_choice", "internal_decision", "hybrid"}


@dataclass(frozen=True)
class HyperConfig:
    mode: str = "learned_choice"
    threshold: float = 0.5
    informativeness_threshold: float = 0.3
    compare_probability: float = 0.25

    def __post_init__(self) -> None:
        if self.mode not in HYPER_MODES:
            raise ValueError(f"Unknown hyper mode '{self.mode}'; expected one of {sorted(HYPER_MODES)}")
        if not 0.0 <= self.compare_probability <= 1.0:
            raise ValueError(f"compare_probability must lie in [0, 1], got {self.compare_probability}")

    @property
    def needs_choice(self) -> bool:
        return self.mode != "internal_decision"


@dataclass
class UsageCounter:
    astar_count: int = 0
    dijkstra_count: int = 0

    def record(self, solver_id: str) -> None:
        if solver_id == ASTAR:
            self.astar_count += 1
        elif solver_id == DIJKSTRA:
            self.dijkstra_count += 1
        else:
            raise ValueError(f"hyper-blackbox never routes to '{solver_id}'")

    @property
    def total(self) -> int:
        return self.astar_count + self.dijkstra_count

    def to_dict(self) -> Mapping:
        return {
            "astar_count": self.astar_count,
            "dijkstra_count": self.dijkstra_count,
            "usage_ratio": usage_ratio(self),
        }


def informativeness(weights: WeightGrid) -> float:
    """min / mean of the grid: 1 on a uniform grid, near 0 when one cell is far cheaper."""

    w = check_weights(weights)
    return float(w.min() / w.mean())


def route(choice: float | None, weights: WeightGrid, cfg: HyperConfig) -> str:
    learned = choice is not None and choice >= cfg.threshold
    if cfg.mode == "learned_choice":
        return ASTAR if learned else DIJKSTRA
    informative = informativeness(weights) >= cfg.informativeness_threshold
    if cfg.mode == "internal_decision":
        return ASTAR if informative else DIJKSTRA
    return ASTAR if learned and informative else DIJKSTRA


def choice_grad(t_astar: float, t_dijkstra: float, lambda_t: float, compared: bool) -> float:
    """Surrogate d(loss)/d(choice) from a paired run of both solvers.

    Positive when A* was slower, so a descent step lowers the choice towards
    Dijkstra.
    """

    if lambda_t < 0:
        raise ValueError(f"lambda_t must be non-negative, got {lambda_t}")
    if not compared:
        return 0.0
    return lambda_t * (t_astar - t_dijkstra)


def usage_ratio(counter: UsageCounter) -> float:
    if counter.astar_count == 0 and counter.dijkstra_count == 0:
        return math.nan
    if counter.astar_count == 0:
        return 0.0
    if counter.dijkstra_count == 0:
        return math.inf
    return counter.astar_count / counter.dijkstra_count


@dataclass
class HyperBlackbox:
    """Routes each grid to A* or Dijkstra; both optimise the same cost."""

    problem: GridProblem
    cfg: HyperConfig = field(default_factory=HyperConfig)
    seed: int = 0
    counter: UsageCounter = field(default_factory=UsageCounter)

    def __post_init__(self) -> None:
        self.solvers: dict[str, GridSolver] = {
            ASTAR: make_solver(ASTAR, self.problem),
            DIJKSTRA: make_solver(DIJKSTRA, self.problem),
        }
        self._rng = np.random.default_rng(self.seed)

    @property
    def solver_id(self) -> str:
        return "hyper"

    def route(self, weights: WeightGrid, choice: float | None) -> str:
        return route(choice, weights, self.cfg)

    def select(self, weights: WeightGrid, choice: float | None) -> GridSolver:
        """Route and count, leaving the solve to the caller (the blackbox layer)."""

        solver_id = self.route(weights, choice)
        self.counter.record(solver_id)
        return self.solvers[solver_id]

    def solve(self, weights: WeightGrid, choice: float | None) -> Tuple[SolveResult, str]:
        solver = self.select(weights, choice)
        return solver(weights), solver.solver_id

    def should_compare(self) -> bool:
        if self.cfg.compare_probability <= 0.0:
            return False
        return bool(self._rng.random() < self.cfg.compare_probability)

    def compare(self, weights: WeightGrid) -> Tuple[SolveResult, SolveResult]:
        """Run both internal solvers; returns (astar_result, dijkstra_result)."""

        return self.solvers[ASTAR](weights), self.solvers[DIJKSTRA](weights)

    def reset_epoch(self) -> UsageCounter:
        snapshot = UsageCounter(self.counter.astar_count, self.counter.dijkstra_count)
        self.counter = UsageCounter()
        return snapshot
