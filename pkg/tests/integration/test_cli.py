"""
Integration tests for the composite-opt command line.
"""
import json

import pytest

from src.composite_opt.api.cli import EXIT_INCOMPLETE, EXIT_OK, prepare
from src.composite_opt.api.config_file import load_experiment_config
from src.composite_opt.core.trainer import direction_bound_at
from src.composite_opt.main import EXIT_ERROR, main

pytestmark = pytest.mark.integration

BASE_CONFIG = """
network.layer_sizes = 2, 4, 2
network.activations = tanh
network.seed = 1
loss = squared
train.eps = 0.25
train.beta = 1.0
train.D = 1.0
train.alpha = 0.2
train.seed = 0
data.source = random_regression
data.n = 3
data.m = 2
data.c = 2
data.seed = 4
"""


def write_config(tmp_path, extra="", name="exp.cfg"):
    out_dir = tmp_path / "out"
    path = tmp_path / name
    path.write_text(BASE_CONFIG + f"output_path = {out_dir}\n" + extra, encoding="utf-8")
    return path, out_dir


class TestRunCommand:
    def test_closed_form_run_writes_outputs(self, tmp_path):
        config_path, out_dir = write_config(tmp_path)
        assert main(["run", "--config", str(config_path)]) == EXIT_OK

        lines = (out_dir / "metrics.csv").read_text(encoding="utf-8").splitlines()
        assert len(lines) == 1 + 4
        payload = json.loads((out_dir / "summary.json").read_text(encoding="utf-8"))
        assert payload["command"] == "run"
        assert payload["completed"] is True
        assert payload["iterations"] == 4
        assert payload["certificates_satisfied"] is None
        assert payload["audit"]["skipped"] is False
        assert payload["config"]["train"]["eps"] == 0.25
        last_row_gap = float(lines[-1].split(",")[2])
        assert payload["final_gap_upper"] >= 0.0
        assert payload["final_gap_upper"] != last_row_gap

    def test_inner_gd_run_reports_certificates(self, tmp_path):
        config_path, out_dir = write_config(tmp_path, "train.algorithm = inner_gd\n")
        assert main(["run", "--config", str(config_path)]) == EXIT_OK
        payload = json.loads((out_dir / "summary.json").read_text(encoding="utf-8"))
        assert payload["certificates_satisfied"] is True
        assert payload["audit"]["complexity_constant_N"] > 0.0

    def test_exhausted_inner_budget_exits_incomplete(self, tmp_path):
        config_path, out_dir = write_config(tmp_path, "train.algorithm = inner_gd\ntrain.inner_max_iters = 0\n")
        assert main(["run", "--config", str(config_path)]) == EXIT_INCOMPLETE
        payload = json.loads((out_dir / "summary.json").read_text(encoding="utf-8"))
        assert payload["completed"] is False
        assert payload["abort_reason"]

    def test_cross_entropy_run_skips_audit(self, tmp_path):
        path = tmp_path / "ce.cfg"
        path.write_text(
            "network.layer_sizes = 2, 3, 2\nnetwork.activations = sigmoid\nnetwork.seed = 2\n"
            "loss = cross_entropy\ntrain.eps = 0.5\ntrain.beta = 1.0\ntrain.D = 1.0\n"
            "train.alpha = 0.3\ntrain.seed = 0\ndata.source = two_point\n"
            f"output_path = {tmp_path / 'ce'}\n",
            encoding="utf-8",
        )
        assert main(["run", "--config", str(path)]) == EXIT_OK
        payload = json.loads((tmp_path / "ce" / "summary.json").read_text(encoding="utf-8"))
        assert payload["audit"]["skipped"] is True
        assert payload["init_distance"] is None


class TestCheckCommand:
    def test_check_writes_summary_only(self, tmp_path):
        config_path, out_dir = write_config(tmp_path)
        assert main(["check", "--config", str(config_path)]) == EXIT_OK
        assert not (out_dir / "metrics.csv").exists()
        payload = json.loads((out_dir / "summary.json").read_text(encoding="utf-8"))
        assert payload["feasibility"]["rows"] == 6
        assert payload["feasibility"]["dim"] == 22
        assert payload["feasibility"]["numeric_rank"] == 6
        assert payload["estimates"]["hessian_estimated"] is True

    def test_check_reports_direction_bound(self, tmp_path):
        # y = x + 1 on a near-zero affine net: v_reg ~ -(alpha_0 / eta) (1, 1), |v_reg|^2 ~ 17
        data_path = tmp_path / "line.csv"
        data_path.write_text("x1,y1\n0,1\n1,2\n2,3\n3,4\n", encoding="utf-8")
        out_dir = tmp_path / "out"
        config_path = tmp_path / "line.cfg"
        config_path.write_text(
            "network.layer_sizes = 1, 1\n"
            "network.seed = 0\n"
            "loss = squared\n"
            "train.eps = 0.01\n"
            "train.beta = 0.01\n"
            "train.D = 1.0\n"
            "train.alpha = 0.3\n"
            "train.seed = 0\n"
            "init.scale = 1e-12\n"
            "data.source = csv\n"
            f"data.path = {data_path}\n"
            f"output_path = {out_dir}\n",
            encoding="utf-8",
        )
        assert main(["check", "--config", str(config_path)]) == EXIT_OK

        config = load_experiment_config(config_path)
        dataset, w0 = prepare(config)
        bound = direction_bound_at(config.train, config.network, dataset, w0)
        assert bound.norm_sq > 2.0
        payload = json.loads((out_dir / "summary.json").read_text(encoding="utf-8"))
        assert payload["estimates"]["direction_bound_V"] == pytest.approx(bound.V_implied)
        assert payload["estimates"]["direction_bound_V"] >= bound.norm_sq - 2.0 - 1e-12


class TestBaselineCommand:
    def test_gd_baseline(self, tmp_path):
        extra = "baseline.method = gd\nbaseline.step = 0.05\nbaseline.iters = 7\n"
        config_path, out_dir = write_config(tmp_path, extra)
        assert main(["baseline", "--config", str(config_path)]) == EXIT_OK
        lines = (out_dir / "metrics.csv").read_text(encoding="utf-8").splitlines()
        assert len(lines) == 8
        assert all(line.split(",")[3] == "" for line in lines[1:])

    def test_diverging_baseline_exits_incomplete(self, tmp_path):
        extra = "baseline.method = gd\nbaseline.step = 1e6\nbaseline.iters = 200\n"
        config_path, out_dir = write_config(tmp_path, extra)
        assert main(["baseline", "--config", str(config_path)]) == EXIT_INCOMPLETE
        payload = json.loads((out_dir / "summary.json").read_text(encoding="utf-8"))
        assert payload["baseline_diverged"] is True

    def test_missing_baseline_section_is_an_error(self, tmp_path):
        config_path, _ = write_config(tmp_path)
        assert main(["baseline", "--config", str(config_path)]) == EXIT_ERROR


class TestQScaleCommand:
    def test_prints_csv_table(self, capsys):
        assert main(["qscale", "--eps", "0.1,0.05", "--seed", "0"]) == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "eps,hidden,q_norm,ratio"
        assert lines[1].startswith("0.1,10,")
        assert lines[1].endswith(",")
        assert float(lines[2].split(",")[3]) == pytest.approx(2 ** 0.5, rel=1e-8)

    def test_ascending_eps_is_an_error(self):
        assert main(["qscale", "--eps", "0.05,0.1", "--seed", "0"]) == EXIT_ERROR


class TestConfigErrors:
    def test_malformed_line(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("loss squared\n", encoding="utf-8")
        assert main(["run", "--config", str(path)]) == EXIT_ERROR

    def test_missing_file(self, tmp_path):
        assert main(["check", "--config", str(tmp_path / "nope.cfg")]) == EXIT_ERROR
