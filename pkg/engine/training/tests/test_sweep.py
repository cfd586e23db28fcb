import sys
from pathlib import Path

import pandas as pd
import pytest

ROOT = Path(__file__).resolve().parents[3]
if str(ROOT) not in sys.path:
    sys.path.append(str(ROOT))

from engine.main import EXIT_CONFIG, main
from engine.training.config import ConfigError, load_config
from engine.training.harness import cmd_gen_data
from engine.training.sweep import SWEEP_TABLES, cmd_sweep, discover_methods, method_config

TINY = ["k=4", "p=2", "train_count=8", "val_count=0", "test_count=4", "batch_size=4", "quiet=true"]


def tiny_config(data_dir, *extra):
    return load_config(None, TINY + [f"dataset={data_dir}", *extra])


def write_methods(root, **methods):
    root.mkdir(parents=True, exist_ok=True)
    for name, text in methods.items():
        (root / f"{name}.cfg").write_text(text)
    return root


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    cmd_gen_data(tiny_config(root))
    return root


class TestMethods:
    def test_shipped_method_files_layer_onto_a_base_run(self, tmp_path):
        methods = discover_methods(ROOT / "configs" / "methods")
        assert list(methods) == ["astar", "astar_tcr", "dijkstra", "dijkstra_tcr", "dijkstra_tcr_l1", "hyper_tcr"]
        base = tiny_config(tmp_path, f"output_dir={tmp_path / 'sweep'}")
        configs = {name: method_config(base, name, path) for name, path in methods.items()}
        assert configs["astar"].solver == "astar" and configs["astar"].lambda_t == 0
        assert configs["dijkstra_tcr_l1"].alpha_l1 > 0
        assert configs["hyper_tcr"].uses_choice_head
        assert configs["hyper_tcr"].compare_on == "label"
        assert configs["dijkstra_tcr"].output_dir == str(tmp_path / "sweep" / "dijkstra_tcr")
        assert {config.dataset for config in configs.values()} == {str(tmp_path)}

    def test_shared_keys_are_rejected(self, tmp_path):
        methods = write_methods(tmp_path / "methods", bad="solver = astar\nseed = 3\n")
        with pytest.raises(ConfigError, match="seed"):
            method_config(tiny_config(tmp_path), "bad", methods / "bad.cfg")

    def test_invalid_method_values_are_config_errors(self, tmp_path):
        methods = write_methods(tmp_path / "methods", bad="solver = bfs\n")
        with pytest.raises(ConfigError):
            method_config(tiny_config(tmp_path), "bad", methods / "bad.cfg")

    def test_missing_or_empty_directory(self, tmp_path):
        with pytest.raises(ConfigError):
            discover_methods(tmp_path / "nothing")
        (tmp_path / "empty").mkdir()
        with pytest.raises(ConfigError):
            discover_methods(tmp_path / "empty")


class TestSweep:
    def test_tables_are_method_by_epoch(self, dataset, tmp_path):
        methods = write_methods(
            tmp_path / "methods",
            dijkstra="solver = dijkstra\n",
            hyper="solver = hyper\nlambda_t = 50\ncompare_probability = 1.0\n",
        )
        out_dir = tmp_path / "out"
        report = cmd_sweep(tiny_config(dataset, "epochs=2", f"output_dir={out_dir}"), methods)

        assert sorted(report.runs) == ["dijkstra", "hyper"]
        assert (out_dir / "hyper" / "metrics.csv").exists()
        for filename in SWEEP_TABLES:
            assert (out_dir / filename).exists()

        accuracy = pd.read_csv(out_dir / "accuracy_by_epoch.csv", index_col="method")
        assert list(accuracy.index) == ["dijkstra", "hyper"]
        assert list(accuracy.columns) == ["epoch_0", "epoch_1", "epoch_2"]
        assert accuracy.stack().between(0, 1).all()

        batch_time = pd.read_csv(out_dir / "batch_time_by_epoch.csv", index_col="method")
        assert list(batch_time.columns) == ["epoch_1", "epoch_2"]
        assert (batch_time > 0).all().all()

        usage = pd.read_csv(out_dir / "usage_by_epoch.csv", index_col="method")
        assert usage.loc["dijkstra"].isna().all()
        assert usage.loc["hyper"].notna().all()

    def test_train_as_eval_split_is_rejected(self, dataset, tmp_path):
        methods = write_methods(tmp_path / "methods", dijkstra="solver = dijkstra\n")
        with pytest.raises(ConfigError):
            cmd_sweep(tiny_config(dataset, "eval_split=train", f"output_dir={tmp_path}"), methods)

    def test_cli_exit_code_for_empty_methods_dir(self, dataset, tmp_path):
        (tmp_path / "methods").mkdir()
        args = ["sweep", "--methods-dir", str(tmp_path / "methods"), "--set", f"dataset={dataset}", "--set", "quiet=true"]
        assert main(args) == EXIT_CONFIG
