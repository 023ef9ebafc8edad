import dataclasses
import json

import numpy as np
import pandas as pd
import pytest

import experiments
import rhc
from errors import InvalidArgumentError, NumericalFailureError
from experiments import (
    PRESETS,
    compare_runs,
    config_from_dict,
    config_to_dict,
    default_placement,
    load_config,
    load_summary,
    placement_table,
    preset_config,
    run_experiment,
    save_config,
)
from optimizer import OptimizerOptions


class TestPlacement:
    def test_four_is_symmetric(self):
        points = default_placement(4)
        assert len(points) == 4
        assert sorted(points) == sorted((1 - x, y) for x, y in points)
        assert sorted(points) == sorted((x, 1 - y) for x, y in points)

    def test_nine_contains_center(self):
        assert (0.5, 0.5) in default_placement(9)

    @pytest.mark.parametrize("m, count", [(3, 3), (12, 12)])
    def test_counts(self, m, count):
        points = default_placement(m)
        assert len(points) == count
        assert all(0 < x < 1 and 0 < y < 1 for x, y in points)

    def test_unsupported(self):
        with pytest.raises(InvalidArgumentError):
            default_placement(5)

    def test_table(self):
        table = placement_table(3)
        assert list(table.columns) == ["actuator", "x1", "x2"]
        assert list(table["actuator"]) == [1, 2, 3]


class TestPresets:
    def test_all_presets_valid(self):
        for name in PRESETS:
            assert preset_config(name).name == name

    def test_overrides(self):
        config = preset_config("switch_m9", t_infinity=1.0, n_cells=8)
        assert config.actuator_count == 9
        assert config.t_infinity == 1.0
        assert config.n_cells == 8

    def test_nonswitching_horizon(self):
        assert preset_config("nonswitch_m4").t_infinity == 10.0

    def test_switch_m3_window_cap(self):
        assert preset_config("switch_m3").optimizer.max_iters == 150
        assert preset_config("switch_m4").optimizer.max_iters == 500
        override = OptimizerOptions(max_iters=20)
        assert preset_config("switch_m3", optimizer=override).optimizer.max_iters == 20

    def test_unknown(self):
        with pytest.raises(InvalidArgumentError, match="unknown preset"):
            preset_config("switch_m5")


class TestConfigFiles:
    def test_echo_reparses_equal(self, tmp_path, tiny_config):
        config = dataclasses.replace(tiny_config, actuator_count=None,
                                     actuator_points=((0.2, 0.3), (0.7, 0.4)), snapshot_times=(0.0, 0.2))
        path = tmp_path / "config.json"
        save_config(config, path)
        assert load_config(path) == config

    def test_dict_round_trip_defaults(self):
        config = preset_config("switch_m4")
        assert config_from_dict(json.loads(json.dumps(config_to_dict(config)))) == config

    def test_partial_file_uses_defaults(self, tmp_path):
        path = tmp_path / "partial.json"
        path.write_text(json.dumps({"actuator_count": 9, "optimizer": {"max_iters": 10}}))
        config = load_config(path)
        assert config.actuator_count == 9
        assert config.optimizer.max_iters == 10
        assert config.optimizer.tol == 1e-5
        assert config.beta == 5e-4

    @pytest.mark.parametrize("data, field", [
        ({"betta": 1.0}, "betta"),
        ({"beta": "small"}, "beta"),
        ({"n_cells": 8.5}, "n_cells"),
        ({"optimizer": {"tol": "x"}}, "optimizer.tol"),
        ({"optimizer": {"memory": 3}}, "optimizer.memory"),
        ({"optimizer": {"tol": -1.0}}, "optimizer.tol"),
        ({"actuator_count": None, "actuator_points": [[0.5]]}, "actuator_points[0]"),
    ])
    def test_errors_name_field(self, data, field):
        with pytest.raises(InvalidArgumentError, match=field.replace("[", r"\[").replace("]", r"\]")):
            config_from_dict(data)

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(InvalidArgumentError, match="invalid JSON"):
            load_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(InvalidArgumentError):
            load_config(tmp_path / "missing.json")


def _snapshot_config(tiny_config):
    return dataclasses.replace(tiny_config, snapshot_times=(0.0, 0.1, 0.3))


class TestRunExperiment:
    def test_writes_artifacts(self, tmp_path, tiny_config):
        config = _snapshot_config(tiny_config)
        artifacts = run_experiment(config, tmp_path / "run")
        assert not artifacts.failed
        for path in (artifacts.norms, artifacts.switching, artifacts.windows,
                     artifacts.summary, artifacts.config, artifacts.snapshots):
            assert path.is_file()
        assert not (artifacts.directory / "FAILED").exists()

        norms = pd.read_csv(artifacts.norms)
        assert list(norms.columns) == ["t", "h_norm", "v_norm", "vprime_norm"]
        assert len(norms) == config.n_steps + 1

        switching = pd.read_csv(artifacts.switching)
        assert list(switching.columns) == ["t", "active_index", "magnitude", "u_1", "u_2", "u_3", "u_4"]
        assert len(switching) == config.n_steps
        controls = switching[["u_1", "u_2", "u_3", "u_4"]].to_numpy()
        assert np.count_nonzero(controls, axis=1).max() <= 1

        windows = pd.read_csv(artifacts.windows)
        assert list(windows["window"]) == [0, 1, 2]

        snapshots = pd.read_csv(artifacts.snapshots)
        assert list(snapshots.columns) == ["t", "node", "x1", "x2", "y", "active_index"]
        assert len(snapshots) == 3 * 25

    def test_summary(self, tmp_path, tiny_config):
        artifacts = run_experiment(tiny_config, tmp_path / "run")
        summary = load_summary(artifacts.directory)
        assert summary["schema_version"] == 1
        assert summary["name"] == "tiny"
        assert summary["mode"] == "switching"
        assert summary["actuator_count"] == 4
        assert summary["outer_iterations"] == 3
        assert summary["failed"] is False
        assert summary["failure_message"] is None
        # runs shorter than t = 1 fit the whole history
        assert isinstance(summary["decay_rate"], float)
        norms = pd.read_csv(artifacts.norms)
        assert summary["final_vprime_norm"] == pytest.approx(norms["vprime_norm"].iloc[-1], rel=1e-11)

    def test_config_echo(self, tmp_path, tiny_config):
        artifacts = run_experiment(tiny_config, tmp_path / "run")
        assert load_config(artifacts.config) == tiny_config

    def test_from_config_file(self, tmp_path, tiny_config):
        path = tmp_path / "tiny.json"
        save_config(tiny_config, path)
        artifacts = run_experiment(path, tmp_path / "run")
        assert load_summary(artifacts.summary)["name"] == "tiny"

    def test_free_mode(self, tmp_path, tiny_config):
        config = dataclasses.replace(tiny_config, mode="free", actuator_count=None, name="free")
        artifacts = run_experiment(config, tmp_path / "free")
        summary = load_summary(artifacts.directory)
        assert summary["actuator_count"] == 0
        assert summary["outer_iterations"] == 0
        switching = pd.read_csv(artifacts.switching)
        assert list(switching.columns) == ["t", "active_index", "magnitude"]

    def test_failure_marker(self, tmp_path, tiny_config, monkeypatch):
        def failing_solve(*args, **kwargs):
            raise NumericalFailureError("singular")

        monkeypatch.setattr(rhc, "solve_ocp", failing_solve)
        artifacts = run_experiment(tiny_config, tmp_path / "run")
        assert artifacts.failed
        assert "singular" in (artifacts.directory / "FAILED").read_text()
        summary = load_summary(artifacts.directory)
        assert summary["failed"] is True
        assert len(pd.read_csv(artifacts.norms)) == 1

    def test_setup_failure_writes_marker(self, tmp_path, tiny_config, monkeypatch):
        def failing_setup(config):
            raise NumericalFailureError("factorization broke down")

        monkeypatch.setattr(experiments, "setup_problem", failing_setup)
        out = tmp_path / "run"
        with pytest.raises(NumericalFailureError):
            run_experiment(tiny_config, out)
        assert "factorization broke down" in (out / "FAILED").read_text()
        assert (out / "config.json").is_file()
        assert not (out / "summary.json").exists()

    def test_rerun_clears_stale_artifacts(self, tmp_path, tiny_config):
        out = tmp_path / "run"
        first = run_experiment(dataclasses.replace(tiny_config, snapshot_times=(0.0, 0.1)), out)
        assert first.snapshots.is_file()
        (out / "FAILED").write_text("old\n")
        second = run_experiment(tiny_config, out)
        assert second.snapshots is None
        assert not (out / "snapshots.csv").exists()
        assert not (out / "FAILED").exists()
        assert (out / "summary.json").is_file()

    def test_byte_identical_reruns(self, tmp_path, tiny_config):
        first = run_experiment(tiny_config, tmp_path / "a")
        second = run_experiment(tiny_config, tmp_path / "b")
        for name in ("norms.csv", "switching.csv", "windows.csv", "config.json"):
            assert (first.directory / name).read_bytes() == (second.directory / name).read_bytes()


class TestCompare:
    def test_single_row(self, tmp_path, tiny_config):
        artifacts = run_experiment(tiny_config, tmp_path / "run")
        table = compare_runs([artifacts.directory])
        assert len(table) == 1
        assert table["run"].iloc[0] == "tiny"

    def test_identical_rows(self, tmp_path, tiny_config):
        artifacts = run_experiment(tiny_config, tmp_path / "run")
        table = compare_runs([artifacts.summary, artifacts.summary])
        assert table.iloc[0].equals(table.iloc[1])

    def test_missing_summary(self, tmp_path):
        with pytest.raises(InvalidArgumentError):
            compare_runs([tmp_path])


@pytest.mark.slow
class TestBenchmarkPresets:
    def test_free_against_nine_actuators(self, tmp_path):
        free = run_experiment(preset_config("free"), tmp_path / "free")
        nine = run_experiment(preset_config("switch_m9"), tmp_path / "m9")
        table = compare_runs([free.directory, nine.directory]).set_index("run")
        assert table.loc["free", "final_vprime_norm"] >= 1e6
        assert table.loc["free", "final_vprime_norm"] / table.loc["switch_m9", "final_vprime_norm"] >= 1e7

    def test_switch_m4_deterministic(self, tmp_path):
        first = run_experiment(preset_config("switch_m4"), tmp_path / "a")
        second = run_experiment(preset_config("switch_m4"), tmp_path / "b")
        for name in ("norms.csv", "switching.csv", "windows.csv"):
            assert (first.directory / name).read_bytes() == (second.directory / name).read_bytes()
        assert load_summary(first.directory)["final_vprime_norm"] <= 1e-1

    def test_switch_m3_does_not_stabilize(self, tmp_path):
        artifacts = run_experiment(preset_config("switch_m3"), tmp_path / "m3")
        assert load_summary(artifacts.directory)["final_vprime_norm"] >= 1.0
