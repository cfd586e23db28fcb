import math
from pathlib import Path

import pytest

from engine.training.config import load_config
from engine.training.harness import cmd_gen_data, cmd_train
from engine.training.metrics import read_metrics


def make_dataset(root: Path, *overrides):
    config = load_config(None, ["quiet=true", f"dataset={root}", *overrides])
    cmd_gen_data(config)
    return root


@pytest.mark.slow
def test_monitor_mode_checkpoints_match_unregularized_run(tmp_path: Path):
    data = make_dataset(tmp_path / "data", "k=8", "train_count=500", "val_count=0", "test_count=100")
    checkpoints = []
    for name, lambda_t in (("plain", "0"), ("monitor", "50")):
        config = load_config(
            None,
            [
                "quiet=true",
                f"dataset={data}",
                f"output_dir={tmp_path / name}",
                "epochs=2",
                f"lambda_t={lambda_t}",
                "tcr_grad_mode=monitor",
            ],
        )
        checkpoints.append(cmd_train(config).checkpoint.read_bytes())
    assert checkpoints[0] == checkpoints[1]


@pytest.mark.slow
def test_dijkstra_model_learns_desk_scale_paths(tmp_path: Path):
    data = make_dataset(tmp_path / "data", "k=8", "train_count=2000", "val_count=0", "test_count=200")
    config = load_config(
        None,
        ["quiet=true", f"dataset={data}", f"output_dir={tmp_path / 'run'}", "epochs=10", "optimizer=adam", "lr=0.005", "solver=dijkstra"],
    )
    report = cmd_train(config)
    frame = read_metrics(report.metrics_path)
    test_rows = frame[frame["split"] == "test"].set_index("epoch")
    assert test_rows.loc[10, "exact_cost_match_acc"] >= 0.5
    assert test_rows.loc[10, "exact_cost_match_acc"] > test_rows.loc[0, "exact_cost_match_acc"]
    assert test_rows.loc[10, "per_cell_acc"] > test_rows.loc[0, "per_cell_acc"]


@pytest.mark.slow
def test_hyper_solver_migrates_towards_dijkstra(tmp_path: Path):
    # Rare near-free tiles make the min-weight heuristic useless, so A* only
    # adds heuristic work on top of Dijkstra's.
    data = make_dataset(
        tmp_path / "data", "k=8", "p=4", "palette=shortcut", "train_count=320", "val_count=0", "test_count=64"
    )
    config = load_config(
        None,
        [
            "quiet=true",
            f"dataset={data}",
            f"output_dir={tmp_path / 'run'}",
            "solver=hyper",
            "hyper_mode=learned_choice",
            "lambda_t=50",
            "tcr_unit=operations_normalized",
            "compare_probability=1.0",
            "compare_on=label",
            "choice_bias=2.0",
            "epochs=10",
        ],
    )
    report = cmd_train(config)
    frame = read_metrics(report.metrics_path)
    ratios = frame[frame["split"] == "test"].set_index("epoch")["usage_ratio"]

    assert ratios.loc[0] > 1.0
    assert ratios.loc[10] < 0.1
    trajectory = [ratios.loc[epoch] for epoch in range(1, 11)]
    non_increasing = sum(later <= earlier for earlier, later in zip(trajectory, trajectory[1:]))
    assert non_increasing >= 7
    assert not any(math.isnan(value) for value in trajectory)

    train_rows = frame[frame["split"] == "train"]
    assert ((train_rows["astar_count"] + train_rows["dijkstra_count"]) == 320).all()
