import json
import os

import pytest

from cflforge.cli import main

TINY = {
    "scenario": "domain_permute",
    "dataset": "synth",
    "synth_n_per_class": 10,
    "synth_test_per_class": 5,
    "synth_classes": 4,
    "synth_input_dim": 9,
    "tasks": 2,
    "clients": 2,
    "rounds_per_task": 1,
    "batch_size": 5,
    "seeds": [0, 1],
    "name": "tiny",
}


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "exp.json"
    path.write_text(json.dumps(TINY))
    return str(path)


class TestCli:
    def test_run_writes_everything(self, config_path, tmp_path, capsys):
        out = tmp_path / "out"
        code = main(["run", config_path, "--out", str(out), "--save-model"])
        assert code == 0
        files = os.listdir(out)
        assert "accuracy_matrix_tiny.csv" in files
        assert "metrics_tiny.csv" in files
        assert "accuracy_curve_tiny.png" in files
        assert "forgetting_curve_tiny.png" in files
        assert "report_tiny_seed0.json" in files
        assert "report_tiny_seed1.json" in files
        assert "model_tiny_seed0.json" in files
        assert "Acc_T=" in capsys.readouterr().out

    def test_run_single_seed_flag(self, config_path, tmp_path):
        out = tmp_path / "out"
        assert main(["run", config_path, "--seed", "7", "--out", str(out)]) == 0
        assert "report_tiny_seed7.json" in os.listdir(out)

    def test_saved_model_has_header(self, config_path, tmp_path):
        out = tmp_path / "out"
        main(["run", config_path, "--out", str(out), "--save-model"])
        with open(out / "model_tiny_seed0.json") as f:
            payload = json.load(f)
        assert payload["layer_sizes"] == [9, 32, 4]
        assert payload["activation"] == "relu"
        assert len(payload["params"]) == 9 * 32 + 32 + 32 * 4 + 4

    def test_plot_and_compare_flow(self, config_path, tmp_path, capsys):
        out = tmp_path / "out"
        main(["run", config_path, "--out", str(out)])
        reports = [
            str(out / "report_tiny_seed0.json"),
            str(out / "report_tiny_seed1.json"),
        ]
        assert main(["plot", *reports, "--out", str(tmp_path / "plots")]) == 0
        assert os.path.exists(tmp_path / "plots" / "accuracy_vs_tasks.svg")
        capsys.readouterr()
        assert main(["compare", *reports, "--baseline", "tiny"]) == 0
        table = capsys.readouterr().out
        assert table.startswith("method,seeds,")
        assert "tiny" in table

    def test_config_error_exits_1(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({**TINY, "buffersize": 9}))
        assert main(["run", str(bad)]) == 1
        assert "buffersize" in capsys.readouterr().err

    def test_missing_config_exits_1(self, tmp_path):
        assert main(["run", str(tmp_path / "none.json")]) == 1

    def test_runtime_error_exits_2(self, tmp_path, capsys):
        bad = tmp_path / "bad_report.json"
        bad.write_text("{}")
        assert main(["plot", str(bad), "--out", str(tmp_path)]) == 2
