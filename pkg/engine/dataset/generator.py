"""Synthetic tile-terrain maps with ground-truth weights and optimal paths."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np

from engine.grid.core import WEIGHT_FLOOR, GridProblem, PathMask, WeightGrid
from engine.solvers.search import dijkstra

SPLITS = ("train", "val", "test")
COST_JITTER = 0.05
PIXEL_NOISE = 0.05
CLUSTER_PROBABILITY = 0.25
# Tile brightness offset at full jitter; keeps the jitter visible in the image.
SHADE_SCALE = 0.1


@dataclass(frozen=True)
class Terrain:
    terrain_id: int
    cost: float
    color: Tuple[float, float, float]

    def to_dict(self) -> Mapping:
        return {"id": self.terrain_id, "cost": self.cost, "color": list(self.color)}


@dataclass(frozen=True)
class TerrainPalette:
    terrains: Tuple[Terrain, ...]
    frequencies: Tuple[float, ...] | None = None
    name: str = "custom"

    def __post_init__(self) -> None:
        if not self.terrains:
            raise ValueError("palette needs at least one terrain")
        costs = [t.cost for t in self.terrains]
        if any(c <= 0 for c in costs):
            raise ValueError("terrain costs must be strictly positive")
        if len(set(costs)) != len(costs):
            raise ValueError("terrain costs must be pairwise distinct")
        for terrain in self.terrains:
            if any(not 0.0 <= channel <= 1.0 for channel in terrain.color):
                raise ValueError(f"terrain {terrain.terrain_id} color outside [0, 1]")
        if self.frequencies is not None:
            if len(self.frequencies) != len(self.terrains) or any(f < 0 for f in self.frequencies):
                raise ValueError("frequencies must be non-negative, one per terrain")
            if not np.isclose(sum(self.frequencies), 1.0):
                raise ValueError("frequencies must sum to 1")

    @property
    def costs(self) -> np.ndarray:
        return np.array([t.cost for t in self.terrains])

    @property
    def colors(self) -> np.ndarray:
        return np.array([t.color for t in self.terrains])

    def probabilities(self) -> np.ndarray:
        if self.frequencies is None:
            return np.full(len(self.terrains), 1.0 / len(self.terrains))
        return np.array(self.frequencies)

    def to_dict(self) -> Mapping:
        return {
            "name": self.name,
            "terrains": [t.to_dict() for t in self.terrains],
            "frequencies": list(self.frequencies) if self.frequencies is not None else None,
        }

    @classmethod
    def from_dict(cls, payload: Mapping) -> "TerrainPalette":
        terrains = tuple(
            Terrain(int(t["id"]), float(t["cost"]), tuple(float(c) for c in t["color"])) for t in payload["terrains"]
        )
        freqs = payload.get("frequencies")
        return cls(terrains, tuple(freqs) if freqs is not None else None, payload.get("name", "custom"))


DEFAULT_PALETTE = TerrainPalette(
    terrains=(
        Terrain(0, 0.8, (0.45, 0.75, 0.30)),  # grass
        Terrain(1, 1.2, (0.80, 0.70, 0.45)),  # road
        Terrain(2, 2.0, (0.15, 0.45, 0.15)),  # forest
        Terrain(3, 5.0, (0.55, 0.40, 0.25)),  # hills
        Terrain(4, 9.2, (0.15, 0.30, 0.75)),  # water
    ),
    name="default",
)

UNIFORM_PALETTE = TerrainPalette(terrains=(Terrain(0, 1.2, (0.45, 0.75, 0.30)),), name="uniform")

# Sparse near-free tiles among uniform expensive ground: min/mean of the grid is
# tiny, so the min-weight heuristic prunes almost nothing.
SHORTCUT_PALETTE = TerrainPalette(
    terrains=(
        Terrain(0, 5.0, (0.55, 0.40, 0.25)),
        Terrain(1, 0.05, (0.85, 0.80, 0.20)),
    ),
    frequencies=(0.85, 0.15),
    name="shortcut",
)

PALETTES: Dict[str, TerrainPalette] = {
    "default": DEFAULT_PALETTE,
    "uniform": UNIFORM_PALETTE,
    "shortcut": SHORTCUT_PALETTE,
}


@dataclass
class Sample:
    image: np.ndarray  # (k*p, k*p, 3) float32 in [0, 1]
    true_weights: WeightGrid
    true_mask: PathMask
    optimal_cost: float
    terrain: np.ndarray | None = field(default=None, compare=False)

    @property
    def k(self) -> int:
        return self.true_weights.shape[0]


def _terrain_grid(rng: np.random.Generator, k: int, palette: TerrainPalette) -> np.ndarray:
    """Independent draws, then each cell copies its upper or left neighbour with some probability."""

    ids = rng.choice(len(palette.terrains), size=(k, k), p=palette.probabilities())
    copy = rng.random((k, k)) < CLUSTER_PROBABILITY
    from_above = rng.random((k, k)) < 0.5
    for row in range(k):
        for col in range(k):
            if not copy[row, col]:
                continue
            if from_above[row, col] and row > 0:
                ids[row, col] = ids[row - 1, col]
            elif col > 0:
                ids[row, col] = ids[row, col - 1]
            elif row > 0:
                ids[row, col] = ids[row - 1, col]
    return ids


def render_image(
    terrain: np.ndarray,
    palette: TerrainPalette,
    p: int,
    rng: np.random.Generator,
    jitter: np.ndarray | None = None,
) -> np.ndarray:
    """p x p patch per cell: terrain color, shaded by the cost jitter, plus pixel noise."""

    colors = palette.colors[terrain]  # (k, k, 3)
    if jitter is not None:
        colors = colors + (SHADE_SCALE / COST_JITTER) * jitter[..., None]
    image = np.repeat(np.repeat(colors, p, axis=0), p, axis=1)
    image = image + rng.normal(0.0, PIXEL_NOISE, size=image.shape)
    return np.clip(image, 0.0, 1.0).astype(np.float32)


def gen_sample(seed: int | Sequence[int], k: int, p: int, palette: TerrainPalette = DEFAULT_PALETTE) -> Sample:
    if k < 2 or p < 2:
        raise ValueError(f"need k >= 2 and p >= 2, got k={k}, p={p}")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    terrain = _terrain_grid(rng, k, palette)
    jitter = rng.uniform(-COST_JITTER, COST_JITTER, size=(k, k))
    weights = np.maximum(palette.costs[terrain] + jitter, WEIGHT_FLOOR)
    image = render_image(terrain, palette, p, rng, jitter)
    result = dijkstra(weights, GridProblem.default(k))
    return Sample(
        image=image,
        true_weights=weights,
        true_mask=result.mask,
        optimal_cost=result.cost,
        terrain=terrain,
    )


def gen_split(seed: int, split: str, count: int, k: int, p: int, palette: TerrainPalette = DEFAULT_PALETTE) -> List[Sample]:
    split_index = SPLITS.index(split)
    return [gen_sample([seed, split_index, index], k, p, palette) for index in range(count)]


def generate_dataset(
    seed: int, k: int, p: int, palette: TerrainPalette, counts: Mapping[str, int]
) -> Dict[str, List[Sample]]:
    return {split: gen_split(seed, split, int(counts.get(split, 0)), k, p, palette) for split in SPLITS}
