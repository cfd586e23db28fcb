from __future__ import annotations

from typing import Iterable

import numpy as np

from engine.dataset.generator import Sample
from engine.grid.core import GridProblem, path_cost, validate_path

COST_TOLERANCE = 1e-9


def _require_finite(values: np.ndarray, what: str, idx: int) -> None:
    if not np.isfinite(values).all():
        raise ValueError(f"Sample {idx} has non-finite {what}")


def validate_sample(sample: Sample, idx: int = 0) -> None:
    """Validate basic sample sanity constraints.

    The checks ensure:
    - image is (k*p, k*p, 3) with values in [0, 1]
    - every true weight > 0
    - the label mask is a simple start-goal path
    - optimal_cost equals the label's path cost
    """

    k = sample.true_weights.shape[0]
    if sample.true_weights.shape != (k, k):
        raise ValueError(f"Sample {idx} weights are not square: {sample.true_weights.shape}")
    if sample.true_mask.shape != (k, k):
        raise ValueError(f"Sample {idx} mask shape {sample.true_mask.shape} does not match k={k}")
    image = np.asarray(sample.image)
    if image.ndim != 3 or image.shape[0] != image.shape[1] or image.shape[2] != 3 or image.shape[0] % k:
        raise ValueError(f"Sample {idx} image shape {image.shape} is not (k*p, k*p, 3)")

    _require_finite(image, "image values", idx)
    _require_finite(sample.true_weights, "weights", idx)
    if image.min() < 0.0 or image.max() > 1.0:
        raise ValueError(f"Sample {idx} image values fall outside [0, 1]")
    if (sample.true_weights <= 0).any():
        raise ValueError(f"Sample {idx} has non-positive weights")

    problem = GridProblem.default(k)
    if not validate_path(sample.true_mask, problem):
        raise ValueError(f"Sample {idx} label is not a simple start-goal path")
    cost = path_cost(sample.true_weights, sample.true_mask, problem.start, problem.goal)
    if abs(cost - sample.optimal_cost) > COST_TOLERANCE * max(1.0, abs(cost)):
        raise ValueError(f"Sample {idx} optimal_cost {sample.optimal_cost} disagrees with label cost {cost}")


def validate_samples(samples: Iterable[Sample]) -> int:
    count = 0
    for idx, sample in enumerate(samples):
        validate_sample(sample, idx)
        count += 1
    if count == 0:
        raise ValueError("No samples to validate")
    return count
