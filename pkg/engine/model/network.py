from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np

from engine.grid.core import WEIGHT_FLOOR
from engine.model import layers

DEFAULT_CHANNELS = (8, 16, 1)
DEFAULT_KERNEL = 1
HEAD_DELTA = 0.01
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


class StaleTapeError(RuntimeError):
    """Raised when a tape is replayed after the parameters it recorded have changed."""


@dataclass(frozen=True)
class ConvStage:
    channels: int
    kernel: int = 3
    stride: int = 1
    pool: int = 1

    @property
    def pad(self) -> int:
        return self.kernel // 2

    def to_dict(self) -> Mapping:
        return {"channels": self.channels, "kernel": self.kernel, "stride": self.stride, "pool": self.pool}


def _pool_factors(p: int, stages: int) -> List[int]:
    """The first stage pools each p x p tile to one cell; later stages run on the k x k grid."""

    return [p] + [1] * (stages - 1)


@dataclass(frozen=True)
class ArchitectureSpec:
    k: int
    p: int
    stages: Tuple[ConvStage, ...]
    hyper_mode: bool = False
    in_channels: int = 3
    floor: float = WEIGHT_FLOOR

    def __post_init__(self) -> None:
        size = self.k * self.p
        channels = self.in_channels
        for stage in self.stages:
            size = (size + 2 * stage.pad - stage.kernel) // stage.stride + 1
            if size % stage.pool:
                raise ValueError(f"pool {stage.pool} does not divide feature map of side {size}")
            size //= stage.pool
            channels = stage.channels
        if size != self.k or channels != 1:
            raise ValueError(
                f"conv stages reduce a {self.k * self.p}px image to {channels}x{size}x{size}; need 1x{self.k}x{self.k}"
            )

    @classmethod
    def default(
        cls,
        k: int,
        p: int,
        hyper_mode: bool = False,
        channels: Sequence[int] = DEFAULT_CHANNELS,
        kernel: int = DEFAULT_KERNEL,
    ) -> "ArchitectureSpec":
        pools = _pool_factors(p, len(channels))
        stages = tuple(ConvStage(channels=c, kernel=kernel, stride=1, pool=pool) for c, pool in zip(channels, pools))
        return cls(k=k, p=p, stages=stages, hyper_mode=hyper_mode)

    @property
    def image_side(self) -> int:
        return self.k * self.p

    @property
    def cells(self) -> int:
        return self.k * self.k

    def to_dict(self) -> Mapping:
        return {
            "k": self.k,
            "p": self.p,
            "hyper_mode": self.hyper_mode,
            "stages": [stage.to_dict() for stage in self.stages],
        }


@dataclass
class ModelParams:
    tensors: Dict[str, np.ndarray] = field(default_factory=dict)
    version: int = 0

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def names(self) -> List[str]:
        return list(self.tensors)

    def copy(self) -> "ModelParams":
        return ModelParams({name: arr.copy() for name, arr in self.tensors.items()}, version=self.version)

    def shapes(self) -> Mapping[str, Tuple[int, ...]]:
        return {name: arr.shape for name, arr in self.tensors.items()}


@dataclass
class Tape:
    params: ModelParams
    version: int
    spec: ArchitectureSpec
    stage_caches: List[tuple]
    head_cache: tuple
    softplus_cache: np.ndarray
    choice_cache: np.ndarray | None


def fc_head_init(k: int, hyper_mode: bool, delta: float = HEAD_DELTA, rng: np.random.Generator | None = None) -> np.ndarray:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    cells = k * k
    head = np.eye(cells)
    if not hyper_mode:
        return head
    rng = rng or np.random.default_rng(0)
    extra = rng.uniform(-delta, delta, size=(1, cells))
    return np.vstack([head, extra])


def init_params(spec: ArchitectureSpec, seed: int = 0, choice_bias: float = 0.0, delta: float = HEAD_DELTA) -> ModelParams:
    rng = np.random.default_rng(seed)
    tensors: Dict[str, np.ndarray] = {}
    channels = spec.in_channels
    for idx, stage in enumerate(spec.stages):
        fan_in = channels * stage.kernel * stage.kernel
        scale = np.sqrt(2.0 / fan_in)
        tensors[f"conv{idx}.weight"] = rng.normal(0.0, scale, size=(stage.channels, channels, stage.kernel, stage.kernel))
        tensors[f"conv{idx}.bias"] = np.zeros(stage.channels)
        channels = stage.channels
    tensors["head.weight"] = fc_head_init(spec.k, spec.hyper_mode, delta, rng)
    if spec.hyper_mode:
        tensors["head.choice_bias"] = np.array([float(choice_bias)])
    return ModelParams(tensors)


def _check_image(images: np.ndarray, spec: ArchitectureSpec) -> np.ndarray:
    arr = np.asarray(images, dtype=float)
    if arr.ndim == 3:
        arr = arr[None]
    expected = (spec.image_side, spec.image_side, spec.in_channels)
    if arr.ndim != 4 or arr.shape[1:] != expected:
        raise ValueError(f"image batch shape {arr.shape} does not match (N, {expected[0]}, {expected[1]}, {expected[2]})")
    return arr


def model_forward(
    params: ModelParams, images: np.ndarray, spec: ArchitectureSpec
) -> Tuple[np.ndarray, np.ndarray | None, Tape]:
    """Images (N, H, W, 3) in [0, 1] -> weight grids (N, k, k), choices (N,) or None, tape."""

    x = _check_image(images, spec).transpose(0, 3, 1, 2) - 0.5
    caches: List[tuple] = []
    last = len(spec.stages) - 1
    for idx, stage in enumerate(spec.stages):
        x, conv_cache = layers.conv2d_forward(
            x, params[f"conv{idx}.weight"], params[f"conv{idx}.bias"], stride=stage.stride, pad=stage.pad
        )
        relu_cache = None
        if idx != last:
            x, relu_cache = layers.relu_forward(x)
        pool_cache = None
        if stage.pool > 1:
            x, pool_cache = layers.avg_pool_forward(x, stage.pool)
        caches.append((conv_cache, relu_cache, pool_cache))

    n = x.shape[0]
    features = x.reshape(n, -1)
    z, head_cache = layers.linear_forward(features, params["head.weight"])
    cells = spec.cells
    soft, softplus_cache = layers.softplus_forward(z[:, :cells])
    weights = (soft + spec.floor).reshape(n, spec.k, spec.k)

    choice = None
    choice_cache = None
    if spec.hyper_mode:
        logits = z[:, cells] + params["head.choice_bias"][0]
        choice, choice_cache = layers.logistic_forward(logits)

    tape = Tape(
        params=params,
        version=params.version,
        spec=spec,
        stage_caches=caches,
        head_cache=head_cache,
        softplus_cache=softplus_cache,
        choice_cache=choice_cache,
    )
    return weights, choice, tape


def model_backward(
    tape: Tape, grad_weights: np.ndarray, grad_choice: np.ndarray | None = None
) -> Dict[str, np.ndarray]:
    if tape.version != tape.params.version:
        raise StaleTapeError(f"tape recorded at parameter version {tape.version}, now {tape.params.version}")
    spec = tape.spec
    params = tape.params
    gw = np.asarray(grad_weights, dtype=float)
    n = tape.softplus_cache.shape[0]
    gw = gw.reshape(n, spec.cells)

    grads: Dict[str, np.ndarray] = {}
    dz_weights = layers.softplus_backward(gw, tape.softplus_cache)
    if spec.hyper_mode:
        gc = np.zeros(n) if grad_choice is None else np.asarray(grad_choice, dtype=float).reshape(n)
        dz_choice = layers.logistic_backward(gc, tape.choice_cache)
        dz = np.concatenate([dz_weights, dz_choice[:, None]], axis=1)
        grads["head.choice_bias"] = np.array([dz_choice.sum()])
    else:
        dz = dz_weights

    dfeatures, grads["head.weight"] = layers.linear_backward(dz, tape.head_cache)
    dx = dfeatures.reshape(n, 1, spec.k, spec.k)
    for idx in range(len(spec.stages) - 1, -1, -1):
        conv_cache, relu_cache, pool_cache = tape.stage_caches[idx]
        if pool_cache is not None:
            dx = layers.avg_pool_backward(dx, pool_cache)
        if relu_cache is not None:
            dx = layers.relu_backward(dx, relu_cache)
        dx, grads[f"conv{idx}.weight"], grads[f"conv{idx}.bias"] = layers.conv2d_backward(dx, conv_cache)

    return {name: grads[name] for name in params.names()}


def l1_norm(params: ModelParams) -> float:
    return float(sum(np.abs(arr).sum() for arr in params.tensors.values()))


def optimizer_step(params: ModelParams, grads: Mapping[str, np.ndarray], lr: float, alpha_l1: float = 0.0) -> ModelParams:
    """In-place SGD step with the l1 subgradient sign(w) (0 at exactly 0)."""

    for name, arr in params.tensors.items():
        grad = np.asarray(grads[name], dtype=float)
        if grad.shape != arr.shape:
            raise ValueError(f"gradient for '{name}' has shape {grad.shape}, parameter has {arr.shape}")
        arr -= lr * (grad + alpha_l1 * np.sign(arr))
    params.version += 1
    return params


@dataclass
class AdamState:
    """First and second moment estimates, keyed like the parameters."""

    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    steps: int = 0


def adam_step(
    params: ModelParams,
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    lr: float,
    alpha_l1: float = 0.0,
    betas: Tuple[float, float] = ADAM_BETAS,
    eps: float = ADAM_EPS,
) -> ModelParams:
    """In-place Adam step; the l1 subgradient joins the gradient before the moments."""

    beta1, beta2 = betas
    state.steps += 1
    correction1 = 1.0 - beta1**state.steps
    correction2 = 1.0 - beta2**state.steps
    for name, arr in params.tensors.items():
        grad = np.asarray(grads[name], dtype=float)
        if grad.shape != arr.shape:
            raise ValueError(f"gradient for '{name}' has shape {grad.shape}, parameter has {arr.shape}")
        grad = grad + alpha_l1 * np.sign(arr)
        m = state.m.setdefault(name, np.zeros_like(arr))
        v = state.v.setdefault(name, np.zeros_like(arr))
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad * grad
        arr -= lr * (m / correction1) / (np.sqrt(v / correction2) + eps)
    params.version += 1
    return params


def infer_architecture(params: ModelParams, p: int) -> ArchitectureSpec:
    """Rebuild the architecture from tensor extents and the dataset tile size."""

    head = params["head.weight"]
    cells = head.shape[1]
    k = int(round(np.sqrt(cells)))
    if k * k != cells:
        raise ValueError(f"head input width {cells} is not a square grid")
    hyper_mode = head.shape[0] == cells + 1
    kernels = []
    idx = 0
    while f"conv{idx}.weight" in params.tensors:
        kernels.append(params[f"conv{idx}.weight"].shape)
        idx += 1
    if not kernels:
        raise ValueError("parameters contain no conv stages")
    pools = _pool_factors(p, len(kernels))
    stages = tuple(ConvStage(channels=shape[0], kernel=shape[2], pool=pool) for shape, pool in zip(kernels, pools))
    in_channels = kernels[0][1]
    return ArchitectureSpec(k=k, p=p, stages=stages, hyper_mode=hyper_mode, in_channels=in_channels)
