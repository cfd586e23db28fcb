import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

ROOT = Path(__file__).resolve().parents[3]
if str(ROOT) not in sys.path:
    sys.path.append(str(ROOT))

from engine.dataset.storage import DatasetFormatError, read_split
from engine.main import EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC, EXIT_OK, main
from engine.model.checkpoint import CheckpointFormatError
from engine.training import harness
from engine.training.bench import BENCH_COLUMNS, cmd_bench
from engine.training.config import ConfigError, load_config
from engine.training.harness import NumericError, cmd_eval, cmd_gen_data, cmd_inspect, cmd_train
from engine.training.metrics import EXTRA_METRIC_COLUMNS, METRIC_COLUMNS, read_metrics, score_path

TINY = ["k=4", "p=2", "train_count=16", "val_count=4", "test_count=8", "batch_size=4", "quiet=true"]


def tiny_config(data_dir, *extra):
    return load_config(None, TINY + [f"dataset={data_dir}", *extra])


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    cmd_gen_data(tiny_config(root))
    return root


class TestGenData:
    def test_writes_all_splits(self, dataset):
        assert sorted(p.name for p in dataset.iterdir()) == ["manifest.json", "test.bin", "train.bin", "val.bin"]
        assert len(read_split(dataset, "train")) == 16

    def test_same_seed_is_byte_identical(self, tmp_path):
        for name in ("a", "b"):
            cmd_gen_data(tiny_config(tmp_path / name, "train_count=100"))
        for filename in ("train.bin", "test.bin", "manifest.json"):
            assert (tmp_path / "a" / filename).read_bytes() == (tmp_path / "b" / filename).read_bytes()


class TestTrain:
    def test_metrics_schema_and_epoch_rows(self, dataset, tmp_path):
        report = cmd_train(tiny_config(dataset, "epochs=2", f"output_dir={tmp_path}"))
        frame = pd.read_csv(report.metrics_path)
        assert list(frame.columns) == METRIC_COLUMNS
        assert list(zip(frame["epoch"], frame["split"])) == [(0, "test"), (1, "train"), (1, "test"), (2, "train"), (2, "test")]
        assert frame["exact_cost_match_acc"].between(0, 1).all()
        assert frame["astar_count"].isna().all()
        assert (tmp_path / "checkpoints" / "epoch_002.ckpt").exists()
        assert (tmp_path / "run_summary.json").exists()
        assert report.checkpoint.read_bytes() == (tmp_path / "checkpoints" / "epoch_002.ckpt").read_bytes()

    def test_logged_loss_decomposes_exactly(self, dataset, tmp_path):
        report = cmd_train(
            tiny_config(
                dataset, "epochs=1", "alpha_l1=0.001", "lambda_t=50", "extra_metric_columns=true", f"output_dir={tmp_path}"
            )
        )
        frame = read_metrics(report.metrics_path)
        assert list(frame.columns) == METRIC_COLUMNS + EXTRA_METRIC_COLUMNS
        for row in frame.itertuples():
            assert row.total_loss == row.mean_hamming + row.l1_term + row.tcr_term

    def test_extra_columns_are_off_by_default(self, dataset, tmp_path):
        report = cmd_train(tiny_config(dataset, "epochs=1", f"output_dir={tmp_path}"))
        header = report.metrics_path.read_text().splitlines()[0]
        assert header.split(",") == METRIC_COLUMNS
        assert "total_loss" not in header

    def test_adam_run_is_deterministic_and_differs_from_sgd(self, dataset, tmp_path):
        checkpoints = {}
        for name, optimizer in (("adam_a", "adam"), ("adam_b", "adam"), ("sgd", "sgd")):
            report = cmd_train(
                tiny_config(dataset, "epochs=2", f"optimizer={optimizer}", "lr=0.005", f"output_dir={tmp_path / name}")
            )
            checkpoints[name] = report.checkpoint.read_bytes()
        assert checkpoints["adam_a"] == checkpoints["adam_b"]
        assert checkpoints["adam_a"] != checkpoints["sgd"]

    def test_wider_kernel_trains_and_evaluates(self, dataset, tmp_path):
        report = cmd_train(tiny_config(dataset, "epochs=1", "kernel_size=3", f"output_dir={tmp_path}"))
        row = cmd_eval(tiny_config(dataset, f"output_dir={tmp_path}"), report.checkpoint)
        assert 0.0 <= row.exact_cost_match_acc <= 1.0

    def test_label_comparison_lowers_the_choice_on_shortcut_terrain(self, tmp_path):
        data = tmp_path / "shortcut"
        cmd_gen_data(tiny_config(data, "k=6", "palette=shortcut"))
        report = cmd_train(
            tiny_config(
                data,
                "k=6",
                "palette=shortcut",
                "epochs=1",
                "solver=hyper",
                "lambda_t=50",
                "tcr_unit=operations_normalized",
                "compare_probability=1.0",
                "compare_on=label",
                "choice_bias=2.0",
                f"output_dir={tmp_path / 'run'}",
            )
        )
        assert report.params["head.choice_bias"][0] < 2.0

    def test_tcr_term_is_lambda_times_mean_time(self, dataset, tmp_path):
        report = cmd_train(tiny_config(dataset, "epochs=1", "lambda_t=50", f"output_dir={tmp_path}"))
        test_row = report.metrics[-1]
        # eval: 8 samples in 2 batches of 4; avg_batch_time_norm is the per-batch sum of t.
        assert test_row.tcr_term == pytest.approx(50 * test_row.avg_batch_time_norm / 4)
        assert test_row.tcr_term > 0

    def test_metrics_are_deterministic_without_wall_time(self, dataset, tmp_path):
        paths = []
        for name in ("a", "b"):
            report = cmd_train(tiny_config(dataset, "epochs=2", "record_wall_time=false", f"output_dir={tmp_path / name}"))
            paths.append(report.metrics_path)
        assert paths[0].read_bytes() == paths[1].read_bytes()
        assert pd.read_csv(paths[0])["avg_batch_time_s"].isna().all()

    def test_monitor_mode_leaves_training_untouched(self, dataset, tmp_path):
        checkpoints = []
        for name, lambda_t in (("zero", "0"), ("monitor", "50")):
            report = cmd_train(
                tiny_config(dataset, "epochs=1", f"lambda_t={lambda_t}", "tcr_grad_mode=monitor", f"output_dir={tmp_path / name}")
            )
            checkpoints.append(report.checkpoint.read_bytes())
        assert checkpoints[0] == checkpoints[1]

    def test_contrast_mode_changes_training(self, dataset, tmp_path):
        checkpoints = []
        for name, mode in (("monitor", "monitor"), ("contrast", "contrast")):
            report = cmd_train(
                tiny_config(dataset, "epochs=1", "lambda_t=50", f"tcr_grad_mode={mode}", f"output_dir={tmp_path / name}")
            )
            checkpoints.append(report.checkpoint.read_bytes())
        assert checkpoints[0] != checkpoints[1]

    def test_hyper_counts_cover_every_training_sample(self, dataset, tmp_path):
        report = cmd_train(
            tiny_config(dataset, "epochs=2", "solver=hyper", "lambda_t=50", "compare_probability=1.0", f"output_dir={tmp_path}")
        )
        for row in report.metrics:
            expected = 16 if row.split == "train" else 8
            assert row.astar_count + row.dijkstra_count == expected
            assert row.usage_ratio is not None

    def test_drops_the_last_partial_batch(self, dataset, tmp_path):
        report = cmd_train(tiny_config(dataset, "epochs=1", "solver=hyper", "batch_size=5", f"output_dir={tmp_path}"))
        train_row = report.metrics[1]
        assert train_row.astar_count + train_row.dijkstra_count == 15

    def test_batch_larger_than_split_is_a_config_error(self, dataset, tmp_path):
        with pytest.raises(ConfigError):
            cmd_train(tiny_config(dataset, "epochs=1", "batch_size=32", f"output_dir={tmp_path}"))

    def test_loaded_labels_are_validated(self, dataset, tmp_path, monkeypatch):
        real_read = harness.read_dataset

        def tampered(directory):
            splits, manifest = real_read(directory)
            splits["train"][3].optimal_cost += 1.0
            return splits, manifest

        monkeypatch.setattr(harness, "read_dataset", tampered)
        with pytest.raises(DatasetFormatError, match="train split: Sample 3"):
            cmd_train(tiny_config(dataset, "epochs=1", f"output_dir={tmp_path}"))

    def test_nan_output_names_the_batch(self, dataset, tmp_path, monkeypatch):
        real_forward = harness.model_forward

        def poisoned(params, images, spec):
            weights, choice, tape = real_forward(params, images, spec)
            weights[0, 0, 0] = np.nan
            return weights, choice, tape

        monkeypatch.setattr(harness, "model_forward", poisoned)
        with pytest.raises(NumericError, match="batch 0"):
            cmd_train(tiny_config(dataset, "epochs=1", f"output_dir={tmp_path}"))


class TestEval:
    def test_label_masks_score_perfectly(self, dataset):
        for sample in read_split(dataset, "test"):
            scores = score_path(sample.true_weights, sample.true_mask, sample.optimal_cost, sample.true_mask)
            assert scores == (0, True)

    def test_a_detour_scores_as_a_cost_miss(self):
        weights = np.ones((3, 3))
        weights[1, 1] = 10.0
        diagonal = np.eye(3, dtype=np.uint8)
        detour = np.array([[1, 1, 0], [0, 0, 1], [0, 0, 1]], dtype=np.uint8)
        assert score_path(weights, detour, 3.0, diagonal) == (3, False)
        assert score_path(weights, detour, 3.0, detour) == (0, True)

    def test_eval_reads_back_a_trained_checkpoint(self, dataset, tmp_path):
        report = cmd_train(tiny_config(dataset, "epochs=1", "record_wall_time=false", f"output_dir={tmp_path}"))
        row = cmd_eval(tiny_config(dataset, "record_wall_time=false", f"output_dir={tmp_path}"), report.checkpoint)
        assert row.exact_cost_match_acc == report.metrics[-1].exact_cost_match_acc
        assert row.mean_hamming == report.metrics[-1].mean_hamming
        assert (tmp_path / "eval_test.json").exists()

    def test_grid_size_mismatch_is_rejected(self, dataset, tmp_path):
        report = cmd_train(tiny_config(dataset, "epochs=1", f"output_dir={tmp_path / 'run'}"))
        other = tmp_path / "k5"
        cmd_gen_data(tiny_config(other, "k=5"))
        with pytest.raises(CheckpointFormatError, match="k=5"):
            cmd_eval(tiny_config(other, "k=5", f"output_dir={tmp_path}"), report.checkpoint)


class TestBenchAndInspect:
    def test_bench_families(self, tmp_path):
        config = load_config(None, ["bench_k=12", "bench_instances=4", "quiet=true", f"output_dir={tmp_path}"])
        summary = cmd_bench(config)
        assert list(summary.columns) == BENCH_COLUMNS
        assert list(pd.read_csv(tmp_path / "bench.csv").columns) == BENCH_COLUMNS
        by_key = summary.set_index(["family", "solver"])
        for family in ("uniform", "contrast", "random"):
            assert by_key.loc[(family, "astar_zero"), "mean_expansions"] == by_key.loc[(family, "dijkstra"), "mean_expansions"]
            assert by_key.loc[(family, "astar"), "mean_cost"] == pytest.approx(by_key.loc[(family, "dijkstra"), "mean_cost"])
        assert by_key.loc[("random", "dijkstra"), "instances"] == 4
        assert by_key.loc[("contrast", "dijkstra"), "mean_expansions"] == 12

    def test_bench_model_family(self, dataset, tmp_path):
        report = cmd_train(tiny_config(dataset, "epochs=1", f"output_dir={tmp_path}"))
        config = tiny_config(dataset, "bench_families=uniform", "bench_instances=3", f"output_dir={tmp_path}")
        summary = cmd_bench(config, report.checkpoint)
        model_rows = summary[summary["family"] == "model"]
        assert len(model_rows) == 3
        assert (model_rows["k"] == 4).all()

    def test_model_family_needs_a_checkpoint(self, tmp_path):
        config = load_config(None, ["bench_families=model", "quiet=true", f"output_dir={tmp_path}"])
        with pytest.raises(ConfigError):
            cmd_bench(config)

    def test_inspect_renders_the_label_path(self, dataset, capsys):
        text = cmd_inspect(tiny_config(dataset), "test", 0)
        assert "optimal_cost" in text
        assert text.count("[") >= 4
        assert "optimal_cost" in capsys.readouterr().out

    def test_inspect_rejects_bad_index(self, dataset):
        with pytest.raises(DatasetFormatError):
            cmd_inspect(tiny_config(dataset), "test", 99)


class TestCli:
    def test_config_error_exit_code(self):
        assert main(["train", "--set", "solver=bfs"]) == EXIT_CONFIG

    def test_missing_dataset_exit_code(self, tmp_path):
        assert main(["train", "--set", f"dataset={tmp_path / 'nothing'}", "--set", "quiet=true"]) == EXIT_DATA

    def test_numeric_exit_code(self, dataset, tmp_path, monkeypatch):
        def explode(*args, **kwargs):
            raise NumericError("non-finite loss at epoch 1, batch 0")

        monkeypatch.setattr("engine.main.cmd_train", explode)
        args = ["train", "--set", f"dataset={dataset}", "--set", f"output_dir={tmp_path}"]
        assert main(args) == EXIT_NUMERIC

    def test_gen_data_and_inspect(self, tmp_path, capsys):
        data_dir = tmp_path / "cli"
        overrides = [arg for item in TINY + [f"dataset={data_dir}"] for arg in ("--set", item)]
        assert main(["gen-data", *overrides]) == EXIT_OK
        assert main(["inspect", "--split", "val", "--index", "1", *overrides]) == EXIT_OK
        assert "val[1]" in capsys.readouterr().out

    def test_checkpoint_with_overflowing_extents_exit_code(self, dataset, tmp_path):
        corrupt = tmp_path / "huge.ckpt"
        corrupt.write_bytes(
            b"CGRD0001"
            + (1).to_bytes(8, "little")
            + b"w"
            + (2).to_bytes(8, "little")
            + (2**32).to_bytes(8, "little")
            + (2**32).to_bytes(8, "little")
            + bytes(32)
        )
        overrides = [arg for item in TINY + [f"dataset={dataset}", f"output_dir={tmp_path}"] for arg in ("--set", item)]
        assert main(["eval", "--checkpoint", str(corrupt), *overrides]) == EXIT_DATA
