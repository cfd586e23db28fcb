"""Run configuration: a flat ``key = value`` file plus ``--set key=value`` overrides."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Dict, Iterable, Mapping

from engine.blackbox.hyper import HYPER_MODES, HyperConfig
from engine.blackbox.layer import BlackboxConfig
from engine.dataset.generator import PALETTES
from engine.regularization.time_cost import GRAD_MODES, TIME_UNITS, TimeCostConfig

SOLVERS = {"dijkstra", "astar", "hyper"}
OPTIMIZERS = {"sgd", "adam"}
COMPARE_ON = {"predicted", "label"}
BENCH_FAMILIES = {"uniform", "contrast", "random", "model"}

# File keys that are not valid Python identifiers.
ALIASES = {"lambda": "lam"}


class ConfigError(ValueError):
    """Raised when a run configuration is malformed or self-contradictory."""


@dataclass
class RunConfig:
    # data
    dataset: str = "runs/data"
    seed: int = 0
    k: int = 12
    p: int = 8
    palette: str = "default"
    train_count: int = 10000
    val_count: int = 1000
    test_count: int = 1000
    # solver and blackbox
    solver: str = "dijkstra"
    lam: float = 20.0
    # time-cost regularization
    lambda_t: float = 0.0
    tcr_unit: str = "expansions_normalized"
    tcr_grad_mode: str = "monitor"
    tcr_kappa: float = 0.0
    # hyper-blackbox
    hyper_mode: str = "learned_choice"
    informativeness_threshold: float = 0.3
    compare_probability: float = 0.25
    compare_on: str = "predicted"
    choice_head: bool | None = None
    choice_bias: float = 0.0
    # model and optimisation
    kernel_size: int = 1
    optimizer: str = "sgd"
    alpha_l1: float = 0.0
    epochs: int = 20
    batch_size: int = 32
    lr: float = 0.01
    # outputs
    output_dir: str = "runs/train"
    eval_split: str = "test"
    eval_limit: int = 0
    record_wall_time: bool = True
    extra_metric_columns: bool = False
    quiet: bool = False
    # bench
    bench_k: int = 32
    bench_instances: int = 20
    bench_families: str = "uniform,contrast,random"

    def __post_init__(self) -> None:
        self.validate()

    @property
    def uses_choice_head(self) -> bool:
        if self.choice_head is not None:
            return self.choice_head
        return self.solver == "hyper" and self.hyper_mode != "internal_decision"

    @property
    def counts(self) -> Dict[str, int]:
        return {"train": self.train_count, "val": self.val_count, "test": self.test_count}

    @property
    def families(self) -> list[str]:
        return [name.strip() for name in self.bench_families.split(",") if name.strip()]

    def blackbox_config(self) -> BlackboxConfig:
        return BlackboxConfig(lam=self.lam)

    def time_cost_config(self) -> TimeCostConfig:
        return TimeCostConfig(
            lambda_t=self.lambda_t,
            unit=self.tcr_unit,
            grad_mode=self.tcr_grad_mode,
            kappa=self.tcr_kappa if self.tcr_kappa > 0 else None,
        )

    def hyper_config(self) -> HyperConfig:
        return HyperConfig(
            mode=self.hyper_mode,
            informativeness_threshold=self.informativeness_threshold,
            compare_probability=self.compare_probability,
        )

    def validate(self) -> None:
        problems = []
        if self.solver not in SOLVERS:
            problems.append(f"solver must be one of {sorted(SOLVERS)}, got '{self.solver}'")
        if self.palette not in PALETTES:
            problems.append(f"palette must be one of {sorted(PALETTES)}, got '{self.palette}'")
        if self.tcr_unit not in TIME_UNITS:
            problems.append(f"tcr_unit must be one of {sorted(TIME_UNITS)}, got '{self.tcr_unit}'")
        if self.tcr_grad_mode not in GRAD_MODES:
            problems.append(f"tcr_grad_mode must be one of {sorted(GRAD_MODES)}, got '{self.tcr_grad_mode}'")
        if self.hyper_mode not in HYPER_MODES:
            problems.append(f"hyper_mode must be one of {sorted(HYPER_MODES)}, got '{self.hyper_mode}'")
        if not self.lam > 0:
            problems.append("lambda must be positive")
        if self.lambda_t < 0:
            problems.append("lambda_t must be non-negative")
        if self.alpha_l1 < 0:
            problems.append("alpha_l1 must be non-negative")
        if self.tcr_kappa < 0:
            problems.append("tcr_kappa must be non-negative (0 selects 1/k^2)")
        if not 0.0 <= self.compare_probability <= 1.0:
            problems.append("compare_probability must lie in [0, 1]")
        if self.compare_on not in COMPARE_ON:
            problems.append(f"compare_on must be one of {sorted(COMPARE_ON)}, got '{self.compare_on}'")
        if self.optimizer not in OPTIMIZERS:
            problems.append(f"optimizer must be one of {sorted(OPTIMIZERS)}, got '{self.optimizer}'")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            problems.append("kernel_size must be a positive odd number")
        if not self.lr > 0:
            problems.append("lr must be positive")
        if self.epochs < 0:
            problems.append("epochs must be non-negative")
        if self.batch_size < 1:
            problems.append("batch_size must be at least 1")
        if self.k < 2 or self.p < 2:
            problems.append("k and p must both be at least 2")
        if min(self.train_count, self.val_count, self.test_count) < 0:
            problems.append("split counts must be non-negative")
        if self.eval_split not in {"train", "val", "test"}:
            problems.append(f"eval_split must be train, val or test, got '{self.eval_split}'")
        if self.eval_limit < 0:
            problems.append("eval_limit must be non-negative (0 means the whole split)")
        if self.bench_k < 1 or self.bench_instances < 1:
            problems.append("bench_k and bench_instances must be positive")
        unknown = set(self.families) - BENCH_FAMILIES
        if unknown:
            problems.append(f"unknown bench families {sorted(unknown)}")
        if self.choice_head and self.solver != "hyper":
            problems.append("choice_head requires solver = hyper")
        if self.solver == "hyper" and self.hyper_mode != "internal_decision" and self.choice_head is False:
            problems.append(f"hyper_mode = {self.hyper_mode} needs the choice head")
        if problems:
            raise ConfigError("; ".join(problems))

    def to_dict(self) -> Mapping:
        payload = asdict(self)
        payload["lambda"] = payload.pop("lam")
        return payload


def _coerce(raw: str, annotation: str, key: str):
    text = raw.strip()
    optional = "None" in annotation
    if optional and text.lower() in {"", "none", "auto"}:
        return None
    try:
        if annotation.startswith("bool"):
            lowered = text.lower()
            if lowered in {"1", "true", "yes", "on"}:
                return True
            if lowered in {"0", "false", "no", "off"}:
                return False
            raise ValueError(text)
        if annotation.startswith("int"):
            return int(text)
        if annotation.startswith("float"):
            return float(text)
    except ValueError as exc:
        raise ConfigError(f"invalid value for '{key}': {raw!r} ({annotation})") from exc
    return text


def parse_config_text(text: str) -> Dict[str, str]:
    values: Dict[str, str] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {number}: expected 'key = value', got {line.strip()!r}")
        key, value = stripped.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def parse_overrides(overrides: Iterable[str]) -> Dict[str, str]:
    values: Dict[str, str] = {}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        key, value = item.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def _coerce_all(values: Mapping[str, str]) -> Dict[str, object]:
    annotations = {f.name: str(f.type) for f in fields(RunConfig)}
    kwargs = {}
    for key, raw in values.items():
        name = ALIASES.get(key, key)
        if name not in annotations:
            raise ConfigError(f"unknown config key '{key}'")
        kwargs[name] = _coerce(raw, annotations[name], key)
    return kwargs


def build_config(values: Mapping[str, str]) -> RunConfig:
    return RunConfig(**_coerce_all(values))


def layer_config(base: RunConfig, values: Mapping[str, str]) -> RunConfig:
    """Raw key = value pairs on top of an already built config; the result is validated again."""

    return replace(base, **_coerce_all(values))


def load_config(path: str | Path | None = None, overrides: Iterable[str] = ()) -> RunConfig:
    values: Dict[str, str] = {}
    if path is not None:
        source = Path(path)
        if not source.exists():
            raise ConfigError(f"config file not found: {source}")
        values.update(parse_config_text(source.read_text()))
    values.update(parse_overrides(overrides))
    return build_config(values)
