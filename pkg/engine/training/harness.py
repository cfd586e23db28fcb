"""Data generation, training and evaluation commands.

Per training batch: model forward, optional hyper routing, blackbox forward,
Hamming + l1 + time-cost loss, blackbox backward (plus the contrast surrogate
and the compared-solver choice gradient), model backward, SGD or Adam step.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

from engine.blackbox.hyper import HyperBlackbox, UsageCounter, choice_grad
from engine.blackbox.layer import BlackboxConfig, bb_backward_batch, bb_forward_batch
from engine.dataset.generator import PALETTES, SPLITS, Sample, generate_dataset
from engine.dataset.storage import DatasetFormatError, DatasetManifest, read_dataset, read_manifest, read_split, write_dataset
from engine.grid.core import GridProblem, WeightGrid, hamming_grad, path_cost, render_grid
from engine.model.checkpoint import CheckpointFormatError, load_checkpoint, save_checkpoint
from engine.model.network import (
    AdamState,
    ArchitectureSpec,
    ModelParams,
    adam_step,
    infer_architecture,
    init_params,
    l1_norm,
    model_backward,
    model_forward,
    optimizer_step,
)
from engine.regularization.time_cost import (
    TimeCostConfig,
    expansion_mask,
    tcr_term,
    tcr_weight_grad,
    time_cost,
)
from engine.solvers.search import GridSolver, make_solver
from engine.training.config import ConfigError, RunConfig
from engine.training.metrics import EpochAccumulator, EpochMetrics, score_path, write_metrics
from engine.utils.io import write_json
from engine.validation.sanity import validate_samples

METRICS_NAME = "metrics.csv"
SUMMARY_NAME = "run_summary.json"
FINAL_CHECKPOINT = "model.ckpt"


class NumericError(RuntimeError):
    """Raised when training produces a non-finite loss, weight or gradient."""


def log(config: RunConfig, message: str) -> None:
    if not config.quiet:
        print(message)


@dataclass
class SolverRouting:
    """A fixed solver, or the hyper-blackbox choosing one per grid."""

    fixed: GridSolver | None = None
    hyper: HyperBlackbox | None = None

    @classmethod
    def build(cls, config: RunConfig, problem: GridProblem) -> "SolverRouting":
        if config.solver == "hyper":
            return cls(hyper=HyperBlackbox(problem, config.hyper_config(), seed=config.seed))
        return cls(fixed=make_solver(config.solver, problem))

    def select(self, weights: WeightGrid, choice: float | None) -> GridSolver:
        if self.hyper is None:
            return self.fixed
        return self.hyper.select(weights, choice)

    def reset_epoch(self) -> UsageCounter | None:
        if self.hyper is None:
            return None
        return self.hyper.reset_epoch()


@dataclass
class TrainReport:
    metrics: List[EpochMetrics]
    run_dir: Path
    checkpoint: Path
    metrics_path: Path
    params: ModelParams = field(repr=False, default=None)


def _norm_config(tc_cfg: TimeCostConfig) -> TimeCostConfig:
    # Normalised batch time uses the run's unit unless that unit is seconds.
    if tc_cfg.unit == "wall_seconds":
        return TimeCostConfig(unit="expansions_normalized")
    return tc_cfg


def _batches(count: int, batch_size: int, order: np.ndarray | None = None, drop_last: bool = False):
    indices = np.arange(count) if order is None else order
    stop = count - count % batch_size if drop_last else count
    for start in range(0, stop, batch_size):
        yield indices[start : start + batch_size]


def cmd_gen_data(config: RunConfig) -> Path:
    palette = PALETTES[config.palette]
    started = time.perf_counter()
    samples = generate_dataset(config.seed, config.k, config.p, palette, config.counts)
    for split in SPLITS:
        if samples[split]:
            validate_samples(samples[split])
        log(config, f"[data] generated {split} split ({len(samples[split])} samples)")
    manifest = DatasetManifest(seed=config.seed, k=config.k, p=config.p, palette=palette, counts=config.counts)
    root = write_dataset(samples, manifest, config.dataset)
    log(config, f"[data] wrote {root} in {time.perf_counter() - started:.2f}s")
    return root


def load_split(config: RunConfig, split: str) -> Tuple[List[Sample], DatasetManifest]:
    manifest = read_manifest(config.dataset)
    samples = read_split(config.dataset, split, manifest)
    if split == config.eval_split and config.eval_limit:
        samples = samples[: config.eval_limit]
    return samples, manifest


def _forward_checked(params: ModelParams, images: np.ndarray, spec: ArchitectureSpec, where: str):
    weights, choice, tape = model_forward(params, images, spec)
    if not np.isfinite(weights).all() or (choice is not None and not np.isfinite(choice).all()):
        raise NumericError(f"non-finite model output at {where}")
    return weights, choice, tape


def evaluate(
    params: ModelParams,
    spec: ArchitectureSpec,
    samples: Sequence[Sample],
    config: RunConfig,
    epoch: int,
    split: str,
) -> EpochMetrics:
    """Score the model's predicted paths on a split; no solver comparison, no updates."""

    if not samples:
        raise DatasetFormatError(f"split '{split}' has no samples to evaluate")
    problem = GridProblem.default(spec.k)
    routing = SolverRouting.build(config, problem)
    tc_cfg = config.time_cost_config()
    norm_cfg = _norm_config(tc_cfg)
    acc = EpochAccumulator(k=spec.k)
    l1_term = config.alpha_l1 * l1_norm(params)

    for batch_idx, indices in enumerate(_batches(len(samples), config.batch_size)):
        started = time.perf_counter()
        batch = [samples[i] for i in indices]
        images = np.stack([sample.image for sample in batch])
        weights, choice, _ = _forward_checked(params, images, spec, f"eval epoch {epoch}, batch {batch_idx}")
        norm = 0.0
        for i, sample in enumerate(batch):
            solver = routing.select(weights[i], None if choice is None else float(choice[i]))
            result = solver(weights[i])
            t = time_cost(result.stats, spec.k, tc_cfg)
            distance, match = score_path(sample.true_weights, sample.true_mask, sample.optimal_cost, result.mask)
            acc.add_sample(distance, match, tcr_term(t, tc_cfg))
            norm += time_cost(result.stats, spec.k, norm_cfg)
        acc.add_batch(time.perf_counter() - started, norm, 0.0, l1_term)

    return acc.finalize(epoch, split, routing.reset_epoch(), config.record_wall_time)


def _compared_choice_grad(
    hyper: HyperBlackbox, weights: WeightGrid, k: int, tc_cfg: TimeCostConfig
) -> float:
    astar_result, dijkstra_result = hyper.compare(weights)
    t_astar = time_cost(astar_result.stats, k, tc_cfg)
    t_dijkstra = time_cost(dijkstra_result.stats, k, tc_cfg)
    return choice_grad(t_astar, t_dijkstra, tc_cfg.lambda_t, compared=True)


def train_epoch(
    params: ModelParams,
    spec: ArchitectureSpec,
    samples: Sequence[Sample],
    config: RunConfig,
    routing: SolverRouting,
    epoch: int,
    adam: AdamState | None = None,
) -> EpochMetrics:
    bb_cfg: BlackboxConfig = config.blackbox_config()
    tc_cfg = config.time_cost_config()
    norm_cfg = _norm_config(tc_cfg)
    k = spec.k
    acc = EpochAccumulator(k=k)
    order = np.random.default_rng([config.seed, epoch]).permutation(len(samples))
    if config.optimizer == "adam" and adam is None:
        adam = AdamState()

    for batch_idx, indices in enumerate(_batches(len(samples), config.batch_size, order, drop_last=True)):
        where = f"epoch {epoch}, batch {batch_idx}"
        started = time.perf_counter()
        batch = [samples[i] for i in indices]
        n = len(batch)
        images = np.stack([sample.image for sample in batch])
        weights, choice, tape = _forward_checked(params, images, spec, where)

        solvers = [routing.select(weights[i], None if choice is None else float(choice[i])) for i in range(n)]
        masks, contexts = bb_forward_batch(weights, solvers, bb_cfg)
        upstream = np.stack([hamming_grad(sample.true_mask) for sample in batch])
        grad_w, perturbed = bb_backward_batch(contexts, upstream, solvers, bb_cfg)

        grad_c = None if choice is None else np.zeros(n)
        hamming_sum, tcr_sum, norm, backward_norm = 0.0, 0.0, 0.0, 0.0
        for i, (sample, ctx) in enumerate(zip(batch, contexts)):
            distance, match = score_path(sample.true_weights, sample.true_mask, sample.optimal_cost, masks[i])
            tcr = tcr_term(time_cost(ctx.stats, k, tc_cfg), tc_cfg)
            acc.add_sample(distance, match, tcr)
            hamming_sum += distance
            tcr_sum += tcr

            if tc_cfg.grad_mode == "contrast" and tc_cfg.lambda_t > 0:
                grad_w[i] += tcr_weight_grad(expansion_mask(ctx.result), masks[i], tc_cfg)

            if grad_c is not None and routing.hyper.should_compare():
                compared = sample.true_weights if config.compare_on == "label" else ctx.w_hat
                grad_c[i] = _compared_choice_grad(routing.hyper, compared, k, tc_cfg)

            perturbed_norm = time_cost(perturbed[i], k, norm_cfg)
            norm += time_cost(ctx.stats, k, norm_cfg) + perturbed_norm
            backward_norm += perturbed_norm

        l1_term = config.alpha_l1 * l1_norm(params)
        batch_loss = hamming_sum / n + l1_term + tcr_sum / n
        if not np.isfinite(batch_loss):
            raise NumericError(f"non-finite loss {batch_loss} at {where}")

        grads = model_backward(tape, grad_w / n, None if grad_c is None else grad_c / n)
        for name, grad in grads.items():
            if not np.isfinite(grad).all():
                raise NumericError(f"non-finite gradient for '{name}' at {where}")
        acc.add_batch(time.perf_counter() - started, norm, backward_norm, l1_term)
        if adam is not None:
            adam_step(params, grads, adam, config.lr, config.alpha_l1)
        else:
            optimizer_step(params, grads, config.lr, config.alpha_l1)

    if acc.samples == 0:
        raise ConfigError(f"batch_size {config.batch_size} exceeds the {len(samples)} training samples")
    return acc.finalize(epoch, "train", routing.reset_epoch(), config.record_wall_time)


def _format_row(row: EpochMetrics) -> str:
    text = (
        f"epoch {row.epoch} {row.split}: acc={row.exact_cost_match_acc:.4f} cell={row.per_cell_acc:.4f} "
        f"ham={row.mean_hamming:.3f} t_norm={row.avg_batch_time_norm:.3f} loss={row.total_loss:.4f}"
    )
    if row.astar_count is not None:
        text += f" astar={row.astar_count} dijkstra={row.dijkstra_count} ratio={row.usage_ratio:.3f}"
    return text


def cmd_train(config: RunConfig) -> TrainReport:
    splits, manifest = read_dataset(config.dataset)
    for split in ("train", config.eval_split):
        if splits[split]:
            try:
                validate_samples(splits[split])
            except ValueError as exc:
                raise DatasetFormatError(f"{config.dataset} {split} split: {exc}") from exc
    train_samples = splits["train"]
    eval_samples = splits[config.eval_split]
    if config.eval_limit:
        eval_samples = eval_samples[: config.eval_limit]
    if len(train_samples) < config.batch_size:
        raise ConfigError(f"batch_size {config.batch_size} exceeds the {len(train_samples)} training samples")

    spec = ArchitectureSpec.default(
        manifest.k, manifest.p, hyper_mode=config.uses_choice_head, kernel=config.kernel_size
    )
    params = init_params(spec, seed=config.seed, choice_bias=config.choice_bias)
    routing = SolverRouting.build(config, GridProblem.default(manifest.k))
    adam = AdamState() if config.optimizer == "adam" else None
    run_dir = Path(config.output_dir)
    metrics_path = run_dir / METRICS_NAME
    log(
        config,
        f"[train] solver={config.solver} optimizer={config.optimizer} k={manifest.k} p={manifest.p} "
        f"train={len(train_samples)} epochs={config.epochs}",
    )

    rows = [evaluate(params, spec, eval_samples, config, 0, config.eval_split)]
    log(config, f"[train] {_format_row(rows[-1])}")
    write_metrics(metrics_path, rows, config.extra_metric_columns)

    for epoch in range(1, config.epochs + 1):
        rows.append(train_epoch(params, spec, train_samples, config, routing, epoch, adam))
        log(config, f"[train] {_format_row(rows[-1])}")
        rows.append(evaluate(params, spec, eval_samples, config, epoch, config.eval_split))
        log(config, f"[train] {_format_row(rows[-1])}")
        save_checkpoint(params, run_dir / "checkpoints" / f"epoch_{epoch:03d}.ckpt")
        write_metrics(metrics_path, rows, config.extra_metric_columns)

    checkpoint = save_checkpoint(params, run_dir / FINAL_CHECKPOINT)
    write_json(
        run_dir / SUMMARY_NAME,
        {
            "config": config.to_dict(),
            "architecture": spec.to_dict(),
            "dataset": {"path": config.dataset, "seed": manifest.seed, "k": manifest.k, "p": manifest.p},
            "checkpoint": str(checkpoint),
            "final": [row.to_dict() for row in rows[-2:]],
        },
    )
    log(config, f"[train] wrote {metrics_path} and {checkpoint}")
    return TrainReport(metrics=rows, run_dir=run_dir, checkpoint=checkpoint, metrics_path=metrics_path, params=params)


def load_model(checkpoint: str | Path, manifest: DatasetManifest) -> Tuple[ModelParams, ArchitectureSpec]:
    params = load_checkpoint(checkpoint)
    try:
        spec = infer_architecture(params, manifest.p)
    except (KeyError, ValueError) as exc:
        raise CheckpointFormatError(f"{checkpoint}: cannot rebuild the network for p={manifest.p}: {exc}") from exc
    if spec.k != manifest.k:
        raise CheckpointFormatError(f"{checkpoint} predicts {spec.k}x{spec.k} grids but the dataset has k={manifest.k}")
    return params, spec


def cmd_eval(config: RunConfig, checkpoint: str | Path) -> EpochMetrics:
    samples, manifest = load_split(config, config.eval_split)
    params, spec = load_model(checkpoint, manifest)
    row = evaluate(params, spec, samples, config, epoch=-1, split=config.eval_split)
    log(config, f"[eval] {_format_row(row)}")
    write_json(
        Path(config.output_dir) / f"eval_{config.eval_split}.json",
        {"checkpoint": str(checkpoint), "dataset": config.dataset, "metrics": row.to_dict()},
    )
    return row


def predict_masks(
    params: ModelParams, spec: ArchitectureSpec, samples: Sequence[Sample], config: RunConfig
) -> Dict[str, np.ndarray]:
    """Predicted weights and paths for a list of samples (used by bench and inspect)."""

    problem = GridProblem.default(spec.k)
    routing = SolverRouting.build(config, problem)
    weights_out, masks = [], []
    for indices in _batches(len(samples), config.batch_size):
        images = np.stack([samples[i].image for i in indices])
        weights, choice, _ = _forward_checked(params, images, spec, "prediction")
        for i in range(len(indices)):
            solver = routing.select(weights[i], None if choice is None else float(choice[i]))
            masks.append(solver(weights[i]).mask)
            weights_out.append(weights[i])
    return {"weights": np.stack(weights_out), "masks": np.stack(masks)}


def cmd_inspect(config: RunConfig, split: str, index: int, checkpoint: str | Path | None = None) -> str:
    """Text art of one sample: true weights with the label path, and the model's view if a checkpoint is given."""

    manifest = read_manifest(config.dataset)
    samples = read_split(config.dataset, split, manifest)
    if not 0 <= index < len(samples):
        raise DatasetFormatError(f"{split} split has {len(samples)} samples; index {index} is out of range")
    sample = samples[index]
    sections = [
        f"{split}[{index}] k={manifest.k} p={manifest.p} optimal_cost={sample.optimal_cost:.6f}",
        "true weights / label path:",
        render_grid(sample.true_weights, sample.true_mask),
    ]
    if checkpoint is not None:
        params, spec = load_model(checkpoint, manifest)
        predicted = predict_masks(params, spec, [sample], config)
        weights, mask = predicted["weights"][0], predicted["masks"][0]
        sections += [
            f"predicted weights / path (cost under true weights {path_cost(sample.true_weights, mask):.6f}):",
            render_grid(weights, mask),
        ]
    text = "\n".join(sections)
    print(text)
    return text
