"""
Experiments Module

Presets of the benchmark experiments, JSON configuration files, run artifacts
(CSV series and a JSON summary) and comparison tables across runs.
"""

import dataclasses
import json
import math
import os
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from errors import InvalidArgumentError, NumericalFailureError
from logging_config import get_logger
from optimizer import OptimizerOptions
from placements import SUPPORTED_COUNTS, default_placement
from rhc import RhcConfig, fit_exponential_decay, run_configured, setup_problem

logger = get_logger(__name__)

SCHEMA_VERSION = 1
FLOAT_FORMAT = "%.12e"

# Files a run writes into its directory; removed before a run starts
RUN_ARTIFACTS = (
    "norms.csv", "switching.csv", "windows.csv", "snapshots.csv", "summary.json", "FAILED",
)

PRESETS = {
    "free": {"mode": "free", "actuator_count": None, "t_infinity": 5.0},
    # non-stabilizing placement; fewer optimizer iterations per window
    "switch_m3": {
        "mode": "switching", "actuator_count": 3, "t_infinity": 5.0,
        "optimizer": OptimizerOptions(max_iters=150),
    },
    "switch_m4": {"mode": "switching", "actuator_count": 4, "t_infinity": 5.0},
    "switch_m9": {"mode": "switching", "actuator_count": 9, "t_infinity": 5.0},
    "switch_m12": {"mode": "switching", "actuator_count": 12, "t_infinity": 5.0},
    "nonswitch_m4": {"mode": "nonswitching", "actuator_count": 4, "t_infinity": 10.0},
}

# JSON type of every configuration field
CONFIG_FIELDS = {
    "name": "str",
    "mode": "str",
    "nu": "float",
    "beta": "float",
    "dt": "float",
    "horizon_T": "float",
    "delta": "float",
    "t_infinity": "float",
    "n_cells": "int",
    "actuator_count": "optional_int",
    "actuator_points": "optional_points",
    "linear_solver": "str",
    "snapshot_times": "float_list",
    "optimizer": "optimizer",
}

OPTIMIZER_FIELDS = {
    "tol": "float",
    "max_iters": "int",
    "ls_memory": "int",
    "ls_shrink": "float",
    "ls_sufficient_decrease": "float",
    "bb_clip": "float_pair",
    "initial_alpha": "float",
    "ls_max_backtracks": "int",
}


@dataclass(frozen=True)
class RunArtifacts:
    """Paths of the files written by ``run_experiment``"""

    directory: Path
    norms: Path
    switching: Path
    windows: Path
    summary: Path
    config: Path
    snapshots: Path = None
    failed: bool = False


def _is_number(value):
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _coerce(path, value, kind):
    if kind == "str":
        if not isinstance(value, str):
            raise InvalidArgumentError(f"{path}: expected a string, got {value!r}")
        return value
    if kind == "float":
        if not _is_number(value):
            raise InvalidArgumentError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise InvalidArgumentError(f"{path}: expected an integer, got {value!r}")
        return value
    if kind == "optional_int":
        return None if value is None else _coerce(path, value, "int")
    if kind == "float_list":
        if not isinstance(value, list):
            raise InvalidArgumentError(f"{path}: expected a list of numbers, got {value!r}")
        return tuple(_coerce(f"{path}[{i}]", v, "float") for i, v in enumerate(value))
    if kind == "float_pair":
        pair = _coerce(path, value, "float_list")
        if len(pair) != 2:
            raise InvalidArgumentError(f"{path}: expected two numbers, got {value!r}")
        return pair
    if kind == "optional_points":
        if value is None:
            return None
        if not isinstance(value, list) or not value:
            raise InvalidArgumentError(f"{path}: expected a non-empty list of [x1, x2] pairs")
        return tuple(_coerce(f"{path}[{i}]", p, "float_pair") for i, p in enumerate(value))
    if kind == "optimizer":
        return _optimizer_from_dict(path, value)
    raise AssertionError(kind)


def _check_keys(path, data, fields):
    if not isinstance(data, dict):
        raise InvalidArgumentError(f"{path or 'config'}: expected an object, got {type(data).__name__}")
    unknown = sorted(set(data) - set(fields))
    if unknown:
        prefix = f"{path}." if path else ""
        raise InvalidArgumentError(f"{prefix}{unknown[0]}: unknown configuration key")


def _optimizer_from_dict(path, data):
    _check_keys(path, data, OPTIMIZER_FIELDS)
    values = {key: _coerce(f"{path}.{key}", data[key], OPTIMIZER_FIELDS[key]) for key in data}
    return OptimizerOptions(**values)


def config_from_dict(data):
    """
    Build and validate a configuration from parsed JSON

    Args:
        data: Dictionary with keys of RhcConfig (nested ``optimizer`` object)

    Returns:
        RhcConfig: Validated configuration
    """
    _check_keys("", data, CONFIG_FIELDS)
    values = {key: _coerce(key, data[key], CONFIG_FIELDS[key]) for key in data}
    return RhcConfig(**values).validate()


def config_to_dict(config):
    """
    Plain JSON-ready representation of a configuration

    Args:
        config: RhcConfig

    Returns:
        dict: Re-parses into an equal configuration with ``config_from_dict``
    """
    data = dataclasses.asdict(config)
    data["snapshot_times"] = list(config.snapshot_times)
    data["actuator_points"] = (
        None if config.actuator_points is None else [list(p) for p in config.actuator_points]
    )
    data["optimizer"]["bb_clip"] = list(config.optimizer.bb_clip)
    return data


def load_config(path):
    """
    Read a JSON configuration file

    Args:
        path: File path

    Returns:
        RhcConfig: Validated configuration
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except OSError as exc:
        raise InvalidArgumentError(f"{path}: cannot read configuration ({exc.strerror})") from exc
    except json.JSONDecodeError as exc:
        raise InvalidArgumentError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return config_from_dict(data)


def save_config(config, path):
    """Write the configuration echo"""
    _write_text(Path(path), json.dumps(config_to_dict(config), indent=2, sort_keys=True) + "\n")


def preset_config(name, **overrides):
    """
    Configuration of a named benchmark preset

    Args:
        name: One of PRESETS
        **overrides: Replacement values for RhcConfig fields

    Returns:
        RhcConfig: Validated configuration
    """
    if name not in PRESETS:
        raise InvalidArgumentError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    values = dict(PRESETS[name], name=name)
    values.update(overrides)
    return RhcConfig(**values).validate()


def _write_text(path, text):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _write_csv(frame, path):
    tmp = path.with_name(path.name + ".tmp")
    frame.to_csv(tmp, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    os.replace(tmp, path)


def _clean(value):
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return None if math.isnan(value) or math.isinf(value) else value
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def switching_frame(report):
    """Switching series: t, active_index, magnitude and every control channel"""
    path = report.switching_path
    frame = pd.DataFrame({
        "t": path["t"].to_numpy(dtype=float),
        "active_index": path["active_index"].to_numpy(dtype=int),
        "magnitude": path["magnitude"].to_numpy(dtype=float),
    })
    if report.control is not None:
        for j in range(report.control.n_channels):
            frame[f"u_{j + 1}"] = report.control.values[:, j]
    return frame


def snapshot_frame(report, mesh, times):
    """
    Nodal state values at the requested times

    Args:
        report: RhcReport
        mesh: Mesh of the run
        times: Iterable of times

    Returns:
        pandas.DataFrame: Columns t, node, x1, x2, y, active_index
    """
    frames = []
    path = report.switching_path
    for t in times:
        k = report.states.node_index(t)
        active = 0
        if len(path):
            active = int(path["active_index"].iloc[min(k, len(path) - 1)])
        frames.append(pd.DataFrame({
            "t": np.full(mesh.n_nodes, report.states.grid.nodes[k]),
            "node": np.arange(mesh.n_nodes),
            "x1": mesh.nodes[:, 0],
            "x2": mesh.nodes[:, 1],
            "y": report.states.states[k],
            "active_index": np.full(mesh.n_nodes, active),
        }))
    return pd.concat(frames, ignore_index=True)


def summarize(config, report, wall_time):
    """
    Summary record of a run

    Args:
        config: RhcConfig
        report: RhcReport
        wall_time: Elapsed seconds

    Returns:
        dict: JSON-ready summary
    """
    history = report.norm_history
    t_start = 1.0 if config.t_infinity > 1.0 else 0.0
    diagnostics = report.window_diagnostics
    summary = {
        "schema_version": SCHEMA_VERSION,
        "name": config.name,
        "mode": report.mode,
        "actuator_count": 0 if report.mode == "free" else len(config.resolved_points()),
        "accumulated_cost": report.accumulated_cost,
        "initial_vprime_norm": history["vprime_norm"].iloc[0],
        "final_vprime_norm": report.final_vprime_norm,
        "decay_rate": fit_exponential_decay(history, t_start=t_start),
        "outer_iterations": report.outer_iterations,
        "inner_iterations": report.inner_iterations,
        "converged_windows": int(diagnostics["converged"].sum()) if len(diagnostics) else 0,
        "failed": report.failed,
        "failure_message": report.failure_message,
        "wall_time_seconds": wall_time,
    }
    return {key: _clean(value) for key, value in summary.items()}


def run_experiment(config, output_dir, problem=None):
    """
    Run a configuration and write its artifacts

    Args:
        config: RhcConfig or path of a JSON configuration file
        output_dir: Directory receiving the artifacts (created if needed)
        problem: Optional Problem to reuse an assembled discretization

    Returns:
        RunArtifacts: Paths of the written files
    """
    if not isinstance(config, RhcConfig):
        config = load_config(config)
    config.validate()
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name in RUN_ARTIFACTS:
        (out / name).unlink(missing_ok=True)
    marker = out / "FAILED"

    config_path = out / "config.json"
    save_config(config, config_path)

    if problem is None:
        try:
            problem = setup_problem(config)
        except NumericalFailureError as exc:
            _write_text(marker, f"setup failed: {exc}\n")
            logger.error("run %s failed during setup: %s", config.name, exc)
            raise

    start = time.perf_counter()
    report = run_configured(config, problem)
    wall_time = time.perf_counter() - start

    norms_path = out / "norms.csv"
    switching_path = out / "switching.csv"
    windows_path = out / "windows.csv"
    summary_path = out / "summary.json"
    _write_csv(report.norm_history, norms_path)
    _write_csv(switching_frame(report), switching_path)
    _write_csv(report.window_diagnostics, windows_path)

    snapshots_path = None
    if config.snapshot_times and report.states is not None:
        times = [t for t in config.snapshot_times if t <= report.states.grid.t_end + 1e-12]
        if times:
            snapshots_path = out / "snapshots.csv"
            _write_csv(snapshot_frame(report, problem.mesh, times), snapshots_path)

    summary = summarize(config, report, wall_time)
    _write_text(summary_path, json.dumps(summary, indent=2, sort_keys=True) + "\n")

    if report.failed:
        _write_text(marker, (report.failure_message or "run failed") + "\n")
        logger.error("run %s failed; partial artifacts in %s", config.name, out)
    else:
        logger.info(
            "run %s finished in %.1fs: J=%.6e, final |y|_V'=%.3e; artifacts in %s",
            config.name, wall_time, summary["accumulated_cost"], summary["final_vprime_norm"], out,
        )

    return RunArtifacts(
        directory=out,
        norms=norms_path,
        switching=switching_path,
        windows=windows_path,
        summary=summary_path,
        config=config_path,
        snapshots=snapshots_path,
        failed=report.failed,
    )


def load_summary(path):
    """
    Read a run summary

    Args:
        path: ``summary.json`` or the run directory containing it

    Returns:
        dict: The summary
    """
    path = Path(path)
    if path.is_dir():
        path = path / "summary.json"
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except OSError as exc:
        raise InvalidArgumentError(f"{path}: cannot read summary ({exc.strerror})") from exc
    except json.JSONDecodeError as exc:
        raise InvalidArgumentError(f"{path}: invalid summary JSON: {exc.msg}") from exc


COMPARISON_COLUMNS = [
    "run", "mode", "actuator_count", "accumulated_cost", "final_vprime_norm",
    "decay_rate", "outer_iterations", "inner_iterations", "failed",
]


def compare_runs(paths):
    """
    Comparison table of several runs

    Args:
        paths: Summary files or run directories

    Returns:
        pandas.DataFrame: One row per run
    """
    rows = []
    for path in paths:
        summary = load_summary(path)
        row = {column: summary.get(column) for column in COMPARISON_COLUMNS if column != "run"}
        row["run"] = summary.get("name") or Path(path).stem
        rows.append(row)
    return pd.DataFrame(rows, columns=COMPARISON_COLUMNS)


def format_comparison(frame):
    """Aligned text rendering of a comparison table"""
    return frame.to_string(index=False, float_format=lambda v: f"{v:.4e}")


def placement_table(m):
    """Default placement as a DataFrame with columns actuator, x1, x2"""
    points = default_placement(m)
    return pd.DataFrame({
        "actuator": np.arange(1, len(points) + 1),
        "x1": [p[0] for p in points],
        "x2": [p[1] for p in points],
    })


__all__ = [
    "PRESETS", "SUPPORTED_COUNTS", "RunArtifacts", "compare_runs", "config_from_dict",
    "config_to_dict", "default_placement", "format_comparison", "load_config",
    "load_summary", "placement_table", "preset_config", "run_experiment", "save_config",
]
