import json

import pandas as pd
import pytest

import experiments
import rhc
from cli import EXIT_FAILED, EXIT_INVALID, EXIT_OK, main
from errors import NumericalFailureError
from experiments import save_config

TINY_OVERRIDES = ["--t-infinity", "0.5", "--n-cells", "4", "--max-iters", "5"]


@pytest.fixture
def tiny_config_file(tmp_path, tiny_config):
    path = tmp_path / "tiny.json"
    save_config(tiny_config, path)
    return path


def test_run_with_config(tmp_path, tiny_config_file, capsys):
    out = tmp_path / "run"
    assert main(["run", "--config", str(tiny_config_file), "--out", str(out)]) == EXIT_OK
    assert (out / "summary.json").is_file()
    assert str(out) in capsys.readouterr().out


def test_run_preset_with_overrides(tmp_path):
    out = tmp_path / "m4"
    assert main(["run", "--preset", "switch_m4", "--out", str(out)] + TINY_OVERRIDES) == EXIT_OK
    config = json.loads((out / "config.json").read_text())
    assert config["t_infinity"] == 0.5
    assert config["n_cells"] == 4
    assert config["optimizer"]["max_iters"] == 5
    assert len(pd.read_csv(out / "windows.csv")) == 2


def test_run_iterative_solver(tmp_path):
    out = tmp_path / "iterative"
    args = ["run", "--preset", "switch_m4", "--out", str(out), "--solver", "iterative"] + TINY_OVERRIDES
    assert main(args) == EXIT_OK
    assert json.loads((out / "config.json").read_text())["linear_solver"] == "iterative"


def test_bad_config_exits_2(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"optimizer": {"tol": "tiny"}}))
    assert main(["run", "--config", str(path), "--out", str(tmp_path / "run")]) == EXIT_INVALID
    assert "optimizer.tol" in capsys.readouterr().err


def test_bad_override_exits_2(tmp_path):
    args = ["run", "--preset", "switch_m4", "--out", str(tmp_path / "run"), "--t-infinity", "0.3"]
    assert main(args) == EXIT_INVALID


def test_unknown_preset_exits_2(tmp_path):
    assert main(["run", "--preset", "nope", "--out", str(tmp_path / "run")]) == EXIT_INVALID


def test_missing_arguments_exit_2():
    assert main(["run"]) == EXIT_INVALID


def test_solver_failure_exits_1(tmp_path, tiny_config_file, monkeypatch):
    def failing_solve(*args, **kwargs):
        raise NumericalFailureError("singular")

    monkeypatch.setattr(rhc, "solve_ocp", failing_solve)
    out = tmp_path / "run"
    assert main(["run", "--config", str(tiny_config_file), "--out", str(out)]) == EXIT_FAILED
    assert (out / "FAILED").is_file()
    assert (out / "norms.csv").is_file()


def test_setup_failure_exits_1(tmp_path, tiny_config_file, monkeypatch):
    def failing_setup(config):
        raise NumericalFailureError("singular mass matrix")

    monkeypatch.setattr(experiments, "setup_problem", failing_setup)
    out = tmp_path / "run"
    assert main(["run", "--config", str(tiny_config_file), "--out", str(out)]) == EXIT_FAILED
    assert (out / "FAILED").is_file()


def test_compare(tmp_path, tiny_config_file, capsys):
    out = tmp_path / "run"
    main(["run", "--config", str(tiny_config_file), "--out", str(out)])
    capsys.readouterr()
    table_path = tmp_path / "table.csv"
    assert main(["compare", str(out), str(out / "summary.json"), "--csv", str(table_path)]) == EXIT_OK
    assert "tiny" in capsys.readouterr().out
    assert len(pd.read_csv(table_path)) == 2


def test_compare_missing_run_exits_2(tmp_path):
    assert main(["compare", str(tmp_path / "nothing")]) == EXIT_INVALID


def test_placements(capsys):
    assert main(["placements", "--m", "9"]) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 10
    assert "0.500000" in lines[5]


def test_placements_unsupported():
    assert main(["placements", "--m", "5"]) == EXIT_INVALID


def test_bad_log_level():
    assert main(["--log-level", "LOUD", "placements", "--m", "4"]) == EXIT_INVALID
