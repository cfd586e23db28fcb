"""Exhaustive reference solvers used to check the heap-based searches.

Nothing here shares code with :mod:`engine.solvers.search`: remaining costs
come from Bellman-Ford relaxation to a fixpoint, and optimal paths from a
depth-first enumeration of simple paths.
"""
from __future__ import annotations

from typing import FrozenSet, Iterator, List, Set, Tuple

import numpy as np

from engine.grid.core import (
    Cell,
    GridProblem,
    PathMask,
    WeightGrid,
    check_weights,
    mask_cells,
    mask_from_cells,
    neighbors,
    path_cost,
)
from engine.solvers.search import SolverError

MAX_ORACLE_SIDE = 6
_TIE_TOLERANCE = 1e-9

# A path by its cells in row-major order; walks that cover the same cells share a key.
PathKey = Tuple[Cell, ...]


class OracleRefusal(SolverError):
    """Raised when an exhaustive oracle is asked for a grid it cannot enumerate."""


def oracle_remaining_costs(weights: WeightGrid, goal: Cell) -> np.ndarray:
    """Exact cost from every cell to ``goal``, excluding the cell's own weight."""

    w = check_weights(weights)
    k = w.shape[0]
    remaining = np.full((k, k), np.inf)
    remaining[goal] = 0.0
    for _ in range(k * k):
        changed = False
        for row in range(k):
            for col in range(k):
                best = remaining[row, col]
                for nxt in neighbors((row, col), k):
                    candidate = w[nxt] + remaining[nxt]
                    if candidate < best:
                        best = candidate
                if best < remaining[row, col]:
                    remaining[row, col] = best
                    changed = True
        if not changed:
            break
    return remaining


def enumerate_simple_paths(problem: GridProblem, limit: int | None = None) -> Iterator[PathMask]:
    """Yield every simple 8-connected start->goal path as a mask."""

    k = problem.k
    produced = 0
    path: List[Cell] = [problem.start]
    on_path: Set[Cell] = {problem.start}

    def walk(cell: Cell) -> Iterator[PathMask]:
        nonlocal produced
        if cell == problem.goal:
            produced += 1
            yield mask_from_cells(path, k)
            return
        for nxt in neighbors(cell, k):
            if limit is not None and produced >= limit:
                return
            if nxt in on_path:
                continue
            path.append(nxt)
            on_path.add(nxt)
            yield from walk(nxt)
            path.pop()
            on_path.remove(nxt)

    yield from walk(problem.start)


def path_key(mask: PathMask) -> PathKey:
    return tuple(mask_cells(mask))


def brute_force_shortest(weights: WeightGrid, problem: GridProblem) -> Tuple[float, FrozenSet[PathKey]]:
    """Exact minimal cost and the distinct cost-minimal paths, for k <= 6.

    Simple paths are enumerated depth-first; a branch is cut once its cost
    plus the exact remaining cost exceeds the best total found.
    """

    if problem.k > MAX_ORACLE_SIDE:
        raise OracleRefusal(f"brute force refused for k={problem.k}; limit is {MAX_ORACLE_SIDE}")
    w = check_weights(weights)
    if w.shape != (problem.k, problem.k):
        raise SolverError(f"weights shape {w.shape} does not match problem side {problem.k}")

    remaining = oracle_remaining_costs(w, problem.goal)
    bound = remaining[problem.start]
    tolerance = _TIE_TOLERANCE * max(1.0, abs(bound))
    k = problem.k
    found: List[PathMask] = []
    path: List[Cell] = [problem.start]
    on_path: Set[Cell] = {problem.start}

    def walk(cell: Cell, cost: float) -> None:
        if cell == problem.goal:
            found.append(mask_from_cells(path, k))
            return
        for nxt in neighbors(cell, k):
            if nxt in on_path:
                continue
            spent = cost + w[nxt]
            if spent + remaining[nxt] > bound + tolerance:
                continue
            path.append(nxt)
            on_path.add(nxt)
            walk(nxt, spent)
            path.pop()
            on_path.remove(nxt)

    walk(problem.start, 0.0)
    if not found:
        raise SolverError("oracle found no path")

    costs = [path_cost(w, mask, problem.start, problem.goal) for mask in found]
    best = min(costs)
    optimal = frozenset(path_key(mask) for mask, cost in zip(found, costs) if cost <= best + tolerance)
    return best, optimal
