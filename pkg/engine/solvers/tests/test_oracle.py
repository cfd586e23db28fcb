import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parents[3]
if str(ROOT) not in sys.path:
    sys.path.append(str(ROOT))

from engine.grid.core import GridProblem
from engine.solvers.oracle import (
    OracleRefusal,
    brute_force_shortest,
    enumerate_simple_paths,
    oracle_remaining_costs,
    path_key,
)
from engine.training.bench import contrast_grid


def test_single_cell_has_one_free_path():
    cost, paths = brute_force_shortest(np.array([[3.0]]), GridProblem.default(1))
    assert cost == 0.0
    assert len(paths) == 1


def test_two_by_two_uniform_takes_the_diagonal_step():
    cost, paths = brute_force_shortest(np.ones((2, 2)), GridProblem.default(2))
    assert cost == 1.0
    assert paths == frozenset({((0, 0), (1, 1))})


def test_three_by_three_contrast_has_a_unique_diagonal_optimum():
    cost, paths = brute_force_shortest(contrast_grid(3), GridProblem.default(3))
    assert cost == pytest.approx(0.2)
    assert paths == frozenset({path_key(np.eye(3, dtype=np.uint8))})


def test_refuses_large_grids():
    with pytest.raises(OracleRefusal):
        brute_force_shortest(np.ones((7, 7)), GridProblem.default(7))


def test_remaining_costs_on_uniform_grid_are_chebyshev_steps():
    remaining = oracle_remaining_costs(np.ones((4, 4)), (3, 3))
    expected = np.array([[max(3 - r, 3 - c) for c in range(4)] for r in range(4)], dtype=float)
    assert np.array_equal(remaining, expected)


def test_enumeration_respects_limit_and_yields_distinct_walks():
    problem = GridProblem.default(3)
    assert len(list(enumerate_simple_paths(problem, limit=10))) == 10
    paths = list(enumerate_simple_paths(GridProblem.default(2)))
    # 2x2: the diagonal, two L-shapes, and two walks through all four cells.
    assert len(paths) == 5


def test_uniform_three_by_three_reports_the_single_diagonal():
    cost, paths = brute_force_shortest(np.ones((3, 3)), GridProblem.default(3))
    assert cost == 2.0
    assert isinstance(paths, frozenset)
    assert paths == frozenset({((0, 0), (1, 1), (2, 2))})


def test_cost_ties_are_reported_as_distinct_cell_sets():
    weights = np.ones((3, 3))
    weights[1, 1] = 10.0
    cost, paths = brute_force_shortest(weights, GridProblem.default(3))
    assert cost == 3.0
    assert paths == frozenset({((0, 0), (0, 1), (1, 2), (2, 2)), ((0, 0), (1, 0), (2, 1), (2, 2))})
