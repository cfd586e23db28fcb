from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Sequence, Tuple

import numpy as np

from engine.grid.core import WEIGHT_FLOOR, GridError, PathMask, WeightGrid, check_weights, clamp_weights
from engine.solvers.search import SolveResult, SolverStats

Solver = Callable[[WeightGrid], SolveResult]


@dataclass(frozen=True)
class BlackboxConfig:
    """Interpolation strength of the backward pass and the positivity floor."""

    lam: float = 20.0
    floor: float = WEIGHT_FLOOR

    def __post_init__(self) -> None:
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if not self.floor > 0:
            raise ValueError(f"floor must be positive, got {self.floor}")


@dataclass
class ForwardContext:
    w_hat: WeightGrid
    y_hat: PathMask
    stats: SolverStats
    solver_id: str
    result: SolveResult | None = None


def _solver_id(solver: Solver) -> str:
    return getattr(solver, "solver_id", getattr(solver, "__name__", "solver"))


def bb_forward(weights: WeightGrid, solver: Solver, cfg: BlackboxConfig) -> Tuple[PathMask, ForwardContext]:
    w_hat = check_weights(weights).copy()
    result = solver(w_hat)
    ctx = ForwardContext(
        w_hat=w_hat,
        y_hat=result.mask.copy(),
        stats=result.stats,
        solver_id=_solver_id(solver),
        result=result,
    )
    return result.mask, ctx


def perturbed_weights(ctx: ForwardContext, upstream: np.ndarray, cfg: BlackboxConfig) -> np.ndarray:
    grad = np.asarray(upstream, dtype=float)
    if grad.shape != ctx.w_hat.shape:
        raise GridError(f"upstream shape {grad.shape} does not match weights shape {ctx.w_hat.shape}")
    # The Hamming gradient is -1 on true-path cells, so w' can go negative.
    return clamp_weights(ctx.w_hat + cfg.lam * grad, cfg.floor)


def bb_backward(
    ctx: ForwardContext,
    upstream: np.ndarray,
    solver: Solver,
    cfg: BlackboxConfig,
) -> Tuple[np.ndarray, SolverStats]:
    """Gradient of the interpolated loss: -(1/lambda) * (y_hat - y_lambda)."""

    w_prime = perturbed_weights(ctx, upstream, cfg)
    perturbed = solver(w_prime)
    grad_w = -(ctx.y_hat.astype(float) - perturbed.mask.astype(float)) / cfg.lam
    return grad_w, perturbed.stats


def linearized_loss(ctx: ForwardContext, loss_at_y_hat: float, upstream: np.ndarray, y: PathMask) -> float:
    delta = np.asarray(y, dtype=float) - ctx.y_hat.astype(float)
    return float(loss_at_y_hat + np.sum(np.asarray(upstream, dtype=float) * delta))


def f_lambda_value(
    weights: WeightGrid,
    ctx: ForwardContext,
    solver: Solver,
    cfg: BlackboxConfig,
    loss_at_y_hat: float,
    upstream: np.ndarray,
) -> float:
    """f(y_lambda(w)) - (1/lambda) * [c(w, y(w)) - c(w, y_lambda(w))].

    Costs use the full linear form w . y, matching the solver objective up to
    the constant start-cell weight, which cancels in the difference.
    """

    w = check_weights(weights)
    y_w = solver(w).mask.astype(float)
    y_lam = solver(perturbed_weights(ctx, upstream, cfg)).mask
    gap = float(np.sum(w * y_w) - np.sum(w * y_lam.astype(float)))
    return linearized_loss(ctx, loss_at_y_hat, upstream, y_lam) - gap / cfg.lam


def bb_forward_batch(
    weights: np.ndarray, solvers: Sequence[Solver], cfg: BlackboxConfig
) -> Tuple[np.ndarray, List[ForwardContext]]:
    masks, contexts = [], []
    for grid, solver in zip(weights, solvers):
        mask, ctx = bb_forward(grid, solver, cfg)
        masks.append(mask)
        contexts.append(ctx)
    return np.stack(masks), contexts


def bb_backward_batch(
    contexts: Sequence[ForwardContext],
    upstream: np.ndarray,
    solvers: Sequence[Solver],
    cfg: BlackboxConfig,
) -> Tuple[np.ndarray, List[SolverStats]]:
    grads, stats = [], []
    for ctx, grad, solver in zip(contexts, upstream, solvers):
        grad_w, perturbed_stats = bb_backward(ctx, grad, solver, cfg)
        grads.append(grad_w)
        stats.append(perturbed_stats)
    return np.stack(grads), stats
