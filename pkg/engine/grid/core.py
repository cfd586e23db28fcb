from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List, Tuple

import numpy as np

Cell = Tuple[int, int]

# Cost to enter a cell; (k, k) float64.
WeightGrid = np.ndarray
# 1 where the cell lies on the path; (k, k) uint8.
PathMask = np.ndarray

WEIGHT_FLOOR = 1e-3

_OFFSETS = [(dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if (dr, dc) != (0, 0)]


class GridError(ValueError):
    """Raised when a grid, cell or mask violates the grid contract."""


@dataclass(frozen=True)
class GridProblem:
    k: int
    start: Cell = (0, 0)
    goal: Cell | None = None

    def __post_init__(self) -> None:
        if self.k < 1:
            raise GridError(f"grid side must be >= 1, got {self.k}")
        if self.goal is None:
            object.__setattr__(self, "goal", (self.k - 1, self.k - 1))
        for name, cell in (("start", self.start), ("goal", self.goal)):
            if not in_bounds(cell, self.k):
                raise GridError(f"{name} {cell} lies outside the {self.k}x{self.k} grid")

    @classmethod
    def default(cls, k: int) -> "GridProblem":
        return cls(k=k, start=(0, 0), goal=(k - 1, k - 1))

    def to_dict(self) -> dict:
        return {"k": self.k, "start": list(self.start), "goal": list(self.goal)}


def in_bounds(cell: Cell, k: int) -> bool:
    row, col = cell
    return 0 <= row < k and 0 <= col < k


def neighbors(cell: Cell, k: int) -> List[Cell]:
    """All in-bounds cells at Chebyshev distance 1, row-major."""

    if not in_bounds(cell, k):
        raise GridError(f"cell {cell} lies outside the {k}x{k} grid")
    row, col = cell
    result = []
    for dr, dc in _OFFSETS:
        nr, nc = row + dr, col + dc
        if 0 <= nr < k and 0 <= nc < k:
            result.append((nr, nc))
    return result


def check_weights(weights: WeightGrid, floor: float = 0.0) -> np.ndarray:
    arr = np.asarray(weights, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise GridError(f"weights must be a square 2-D grid, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise GridError("weights contain NaN or inf")
    if (arr <= floor).any():
        raise GridError(f"weights must be strictly greater than {floor}")
    return arr


def clamp_weights(weights: WeightGrid, floor: float = WEIGHT_FLOOR) -> np.ndarray:
    return np.maximum(np.asarray(weights, dtype=float), floor)


def mask_from_cells(cells: Iterable[Cell], k: int) -> PathMask:
    mask = np.zeros((k, k), dtype=np.uint8)
    for row, col in cells:
        mask[row, col] = 1
    return mask


def mask_cells(mask: PathMask) -> List[Cell]:
    rows, cols = np.nonzero(np.asarray(mask))
    return [(int(r), int(c)) for r, c in zip(rows, cols)]


def _as_mask(mask: PathMask) -> np.ndarray:
    arr = np.asarray(mask)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise GridError(f"mask must be a square 2-D grid, got shape {arr.shape}")
    return arr


def validate_path(mask: PathMask, problem: GridProblem) -> bool:
    """True iff the 1-cells can be walked as one simple 8-connected start->goal path."""

    arr = np.asarray(mask)
    if arr.shape != (problem.k, problem.k):
        return False
    if not np.isin(arr, (0, 1)).all():
        return False
    cells = set(mask_cells(arr))
    if problem.start not in cells or problem.goal not in cells:
        return False
    if problem.start == problem.goal:
        return len(cells) == 1

    adjacency = {cell: [n for n in neighbors(cell, problem.k) if n in cells] for cell in cells}

    # Chordless paths (every solver output) are settled by the degree pattern.
    degrees = {cell: len(adj) for cell, adj in adjacency.items()}
    if degrees[problem.start] == 1 and degrees[problem.goal] == 1:
        inner = [cell for cell in cells if cell not in (problem.start, problem.goal)]
        if all(degrees[cell] == 2 for cell in inner):
            return _connected(cells, adjacency)

    if not _connected(cells, adjacency):
        return False
    return _has_hamiltonian_path(problem.start, problem.goal, adjacency, len(cells))


def _connected(cells: set, adjacency: dict) -> bool:
    first = next(iter(cells))
    seen = {first}
    stack = [first]
    while stack:
        cell = stack.pop()
        for nxt in adjacency[cell]:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return len(seen) == len(cells)


def _has_hamiltonian_path(start: Cell, goal: Cell, adjacency: dict, size: int) -> bool:
    visited = {start}

    def walk(cell: Cell) -> bool:
        if len(visited) == size:
            return cell == goal
        for nxt in adjacency[cell]:
            if nxt in visited or (nxt == goal and len(visited) + 1 < size):
                continue
            visited.add(nxt)
            if walk(nxt):
                return True
            visited.remove(nxt)
        return False

    return walk(start)


def path_cost(
    weights: WeightGrid,
    mask: PathMask,
    start: Cell = (0, 0),
    goal: Cell | None = None,
) -> float:
    """Sum of weights over path cells, the start cell excluded."""

    w = np.asarray(weights, dtype=float)
    arr = _as_mask(mask)
    if arr.shape != w.shape:
        raise GridError(f"mask shape {arr.shape} does not match weights shape {w.shape}")
    problem = GridProblem(k=w.shape[0], start=tuple(start), goal=goal)
    if not validate_path(arr, problem):
        raise GridError("mask is not a simple start-goal path")
    return float(np.dot(w.ravel(), arr.ravel().astype(float)) - w[problem.start])


def hamming(a: PathMask, b: PathMask) -> int:
    left, right = _as_mask(a), _as_mask(b)
    if left.shape != right.shape:
        raise GridError(f"cannot compare masks of shape {left.shape} and {right.shape}")
    return int(np.count_nonzero(left.astype(np.int8) != right.astype(np.int8)))


def hamming_grad(true_mask: PathMask) -> np.ndarray:
    """d/dy of sum(y + y* - 2 y y*): +1 off the true path, -1 on it."""

    return 1.0 - 2.0 * _as_mask(true_mask).astype(float)


def render_grid(weights: WeightGrid, mask: PathMask | None = None, precision: int = 2) -> str:
    w = np.asarray(weights, dtype=float)
    width = max(len(f"{value:.{precision}f}") for value in w.ravel()) + 2
    lines: List[str] = []
    for row in range(w.shape[0]):
        cells: List[str] = []
        for col in range(w.shape[1]):
            text = f"{w[row, col]:.{precision}f}"
            if mask is not None and mask[row, col]:
                text = f"[{text}]"
            cells.append(text.rjust(width))
        lines.append("".join(cells))
    return "\n".join(lines)
