from __future__ import annotations

import heapq
import time
from dataclasses import dataclass, field
from typing import Callable, List, Mapping

import numpy as np

from engine.grid.core import (
    Cell,
    GridProblem,
    PathMask,
    WeightGrid,
    check_weights,
    mask_from_cells,
    neighbors,
    path_cost,
)

HEURISTIC_KINDS = {"zero", "min_weight_chebyshev"}
SOLVER_NAMES = {"dijkstra", "astar", "astar_zero"}


class SolverError(RuntimeError):
    """Raised when a solver is asked to run on an ill-posed instance."""


@dataclass
class SolverStats:
    expansions: int = 0
    relaxations: int = 0
    heuristic_evals: int = 0
    wall_seconds: float = 0.0

    def counters(self) -> tuple[int, int, int]:
        return self.expansions, self.relaxations, self.heuristic_evals

    def to_dict(self) -> Mapping:
        return {
            "expansions": self.expansions,
            "relaxations": self.relaxations,
            "heuristic_evals": self.heuristic_evals,
            "wall_seconds": round(self.wall_seconds, 6),
        }


@dataclass
class SolveResult:
    mask: PathMask
    cost: float
    stats: SolverStats
    expansion_order: List[Cell] = field(default_factory=list)

    def expansion_mask(self) -> np.ndarray:
        return mask_from_cells(self.expansion_order, self.mask.shape[0])


@dataclass(frozen=True)
class HeuristicSpec:
    kind: str = "min_weight_chebyshev"

    def __post_init__(self) -> None:
        if self.kind not in HEURISTIC_KINDS:
            raise SolverError(f"Unknown heuristic '{self.kind}'; expected one of {sorted(HEURISTIC_KINDS)}")


ZERO = HeuristicSpec("zero")
MIN_WEIGHT_CHEBYSHEV = HeuristicSpec("min_weight_chebyshev")


def chebyshev_steps(cell: Cell, goal: Cell) -> int:
    return max(abs(cell[0] - goal[0]), abs(cell[1] - goal[1]))


def heuristic_value(cell: Cell, goal: Cell, min_weight: float) -> float:
    return chebyshev_steps(cell, goal) * min_weight


def _search(
    weights: WeightGrid,
    problem: GridProblem,
    heuristic: Callable[[Cell], float] | None,
) -> SolveResult:
    """Best-first search shared by Dijkstra (no heuristic) and A*.

    The queue is ordered by (priority, insertion sequence); stale entries are
    skipped and not counted as expansions.
    """

    started = time.perf_counter()
    w = check_weights(weights)
    k = problem.k
    if w.shape != (k, k):
        raise SolverError(f"weights shape {w.shape} does not match problem side {k}")

    stats = SolverStats()
    start, goal = problem.start, problem.goal
    g = {start: 0.0}
    parent: dict[Cell, Cell] = {}
    settled: set[Cell] = set()
    order: List[Cell] = []
    seq = 0

    priority = 0.0
    if heuristic is not None:
        priority = heuristic(start)
        stats.heuristic_evals += 1
    frontier = [(priority, seq, start)]

    while frontier:
        _, _, cell = heapq.heappop(frontier)
        if cell in settled:
            continue
        settled.add(cell)
        order.append(cell)
        stats.expansions += 1
        if cell == goal:
            break
        base = g[cell]
        for nxt in neighbors(cell, k):
            if nxt in settled:
                continue
            tentative = base + w[nxt]
            if tentative < g.get(nxt, float("inf")):
                g[nxt] = tentative
                parent[nxt] = cell
                stats.relaxations += 1
                seq += 1
                if heuristic is None:
                    heapq.heappush(frontier, (tentative, seq, nxt))
                else:
                    stats.heuristic_evals += 1
                    heapq.heappush(frontier, (tentative + heuristic(nxt), seq, nxt))

    if goal not in settled:
        raise SolverError(f"goal {goal} unreachable from {start}")

    cells = [goal]
    while cells[-1] != start:
        cells.append(parent[cells[-1]])
    mask = mask_from_cells(cells, k)
    cost = path_cost(w, mask, start, goal)
    stats.wall_seconds = time.perf_counter() - started
    return SolveResult(mask=mask, cost=cost, stats=stats, expansion_order=order)


def dijkstra(weights: WeightGrid, problem: GridProblem) -> SolveResult:
    return _search(weights, problem, heuristic=None)


def astar(weights: WeightGrid, problem: GridProblem, h: HeuristicSpec = MIN_WEIGHT_CHEBYSHEV) -> SolveResult:
    if h.kind == "zero":
        return _search(weights, problem, heuristic=lambda cell: 0.0)
    # Minimum over all k^2 cells, start included.
    min_weight = float(np.min(weights))
    goal = problem.goal
    return _search(weights, problem, heuristic=lambda cell: heuristic_value(cell, goal, min_weight))


@dataclass(frozen=True)
class GridSolver:
    """A solver handle: callable on a weight grid for a fixed problem."""

    solver_id: str
    problem: GridProblem

    def __post_init__(self) -> None:
        if self.solver_id not in SOLVER_NAMES:
            raise SolverError(f"Unknown solver '{self.solver_id}'; expected one of {sorted(SOLVER_NAMES)}")

    def __call__(self, weights: WeightGrid) -> SolveResult:
        if self.solver_id == "dijkstra":
            return dijkstra(weights, self.problem)
        if self.solver_id == "astar_zero":
            return astar(weights, self.problem, ZERO)
        return astar(weights, self.problem, MIN_WEIGHT_CHEBYSHEV)


def make_solver(name: str, problem: GridProblem) -> GridSolver:
    return GridSolver(solver_id=name, problem=problem)
