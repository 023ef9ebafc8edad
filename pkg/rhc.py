"""
Receding Horizon Control Module

Receding horizon driver: on every sampling interval [t0, t0 + delta) solve
the window problem on [t0, t0 + T] from the current state, apply the first
delta of its optimal control, advance the state and shift the window.
"""

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from dynamics import (
    ControlTrajectory,
    CrankNicolsonStepper,
    StateTrajectory,
    TimeGrid,
    solve_forward,
    solve_uncontrolled,
)
from errors import InvalidArgumentError, NumericalFailureError
from logging_config import get_logger
from mesh_fem import (
    build_actuators,
    build_mesh,
    build_operators,
    interpolate,
    benchmark_coefficients,
    benchmark_initial_state,
)
from norms import build_norm_context, h_norm, norm_history, v_norm, vprime_norm
from ocp import build_ocp_instance, trajectory_cost
from optimizer import OptimizerOptions, identity_projection, project_control, solve_ocp
from placements import default_placement

logger = get_logger(__name__)

MODES = ("switching", "nonswitching", "free")
SOLVERS = ("direct", "iterative")


def _multiple(value, unit):
    """Integer k with value = k * unit, or None"""
    k = int(round(value / unit))
    if k < 1 or abs(k * unit - value) > 1e-9 * unit:
        return None
    return k


@dataclass(frozen=True)
class RhcConfig:
    """Experiment configuration with the benchmark defaults"""

    name: str = "custom"
    mode: str = "switching"
    nu: float = 0.1
    beta: float = 5e-4
    dt: float = 5e-3
    horizon_T: float = 1.0
    delta: float = 0.25
    t_infinity: float = 5.0
    n_cells: int = 32
    actuator_count: int = 4
    actuator_points: tuple = None
    linear_solver: str = "direct"
    snapshot_times: tuple = ()
    optimizer: OptimizerOptions = field(default_factory=OptimizerOptions)

    def __post_init__(self):
        if self.actuator_points is not None:
            points = tuple(tuple(float(c) for c in p) for p in self.actuator_points)
            object.__setattr__(self, "actuator_points", points)
        object.__setattr__(self, "snapshot_times", tuple(float(t) for t in self.snapshot_times))

    def validate(self):
        """
        Check the configuration invariants

        Returns:
            RhcConfig: self, for chaining
        """
        if self.mode not in MODES:
            raise InvalidArgumentError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.linear_solver not in SOLVERS:
            raise InvalidArgumentError(f"linear_solver must be one of {SOLVERS}, got {self.linear_solver!r}")
        for name in ("nu", "beta", "dt", "horizon_T", "delta", "t_infinity"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise InvalidArgumentError(f"{name} must be positive, got {value!r}")
        if isinstance(self.n_cells, bool) or not isinstance(self.n_cells, (int, np.integer)) or self.n_cells < 2:
            raise InvalidArgumentError(f"n_cells must be an integer >= 2, got {self.n_cells!r}")
        if self.delta > self.horizon_T:
            raise InvalidArgumentError("delta must not exceed horizon_T")
        if _multiple(self.delta, self.dt) is None:
            raise InvalidArgumentError("delta must be an integer multiple of dt")
        if _multiple(self.horizon_T, self.dt) is None:
            raise InvalidArgumentError("horizon_T must be an integer multiple of dt")
        if _multiple(self.t_infinity, self.delta) is None:
            raise InvalidArgumentError("t_infinity must be an integer multiple of delta")
        for t in self.snapshot_times:
            if not 0 <= t <= self.t_infinity:
                raise InvalidArgumentError(f"snapshot_times entry {t!r} outside [0, t_infinity]")
        if self.mode != "free":
            self.resolved_points()
        return self

    def resolved_points(self):
        """Explicit actuator points, or the default placement for actuator_count"""
        if self.actuator_points is not None:
            if self.actuator_count is not None and self.actuator_count != len(self.actuator_points):
                raise InvalidArgumentError(
                    f"actuator_count={self.actuator_count} but {len(self.actuator_points)} actuator_points given"
                )
            return [tuple(p) for p in self.actuator_points]
        if self.actuator_count is None:
            raise InvalidArgumentError("actuator_count or actuator_points is required")
        return default_placement(self.actuator_count)

    @property
    def steps_per_delta(self):
        return _multiple(self.delta, self.dt)

    @property
    def steps_per_horizon(self):
        return _multiple(self.horizon_T, self.dt)

    @property
    def n_windows(self):
        return _multiple(self.t_infinity, self.delta)

    @property
    def n_steps(self):
        return self.n_windows * self.steps_per_delta


@dataclass(eq=False)
class Problem:
    """Assembled discretization shared by the runs of one configuration"""

    mesh: object
    operators: object
    actuators: object
    norms: object
    stepper: object
    y0: np.ndarray


@dataclass(eq=False)
class RhcReport:
    mode: str
    control: ControlTrajectory
    states: StateTrajectory
    switching_path: pd.DataFrame
    norm_history: pd.DataFrame
    accumulated_cost: float
    window_diagnostics: pd.DataFrame
    failed: bool = False
    failure_message: str = None

    @property
    def outer_iterations(self):
        return len(self.window_diagnostics)

    @property
    def inner_iterations(self):
        if self.window_diagnostics.empty:
            return 0
        return int(self.window_diagnostics["iterations"].sum())

    @property
    def final_vprime_norm(self):
        return float(self.norm_history["vprime_norm"].iloc[-1])


def setup_problem(config, coefficients=None, initial_state=None):
    """
    Assemble mesh, operators, actuators and norms for a configuration

    Args:
        config: RhcConfig
        coefficients: Optional Coefficients (benchmark by default)
        initial_state: Optional callable ``f(x1, x2)`` (benchmark y0 by default)

    Returns:
        Problem: Shared discretization
    """
    config.validate()
    mesh = build_mesh(config.n_cells)
    operators = build_operators(mesh, config.nu, coefficients or benchmark_coefficients())
    actuators = None
    if config.mode != "free":
        actuators = build_actuators(mesh, config.resolved_points())
    stepper = CrankNicolsonStepper(
        operators, config.dt, solver=config.linear_solver,
        cache_size=max(512, 2 * config.steps_per_horizon),
    )
    y0 = interpolate(mesh, initial_state or benchmark_initial_state)
    logger.info(
        "problem %s: %d nodes, %d elements, %s actuators, %s solver",
        config.name, mesh.n_nodes, mesh.n_elements,
        actuators.count if actuators is not None else 0, config.linear_solver,
    )
    return Problem(mesh, operators, actuators, build_norm_context(operators), stepper, y0)


def shift_warm_start(values, shift):
    """
    Previous window optimum shifted left by ``shift`` steps, zero padded

    Args:
        values: Array (n_steps, M)
        shift: Number of applied steps

    Returns:
        numpy.ndarray: Warm start of the same shape
    """
    values = np.asarray(values, dtype=float)
    shifted = np.zeros_like(values)
    if shift < values.shape[0]:
        shifted[: values.shape[0] - shift] = values[shift:]
    return shifted


def control_path(u):
    """
    Dominant channel per step following u(t) = sign(u_j) |u|_inf, c(t) = x^j

    Args:
        u: ControlTrajectory

    Returns:
        pandas.DataFrame: Columns t, active_index (1-based, 0 = none),
        n_active, value, magnitude
    """
    values = u.values
    n_active = np.count_nonzero(values, axis=1)
    if values.shape[1]:
        dominant = np.argmax(np.abs(values), axis=1)
        value = values[np.arange(values.shape[0]), dominant]
    else:
        dominant = np.zeros(values.shape[0], dtype=int)
        value = np.zeros(values.shape[0])
    active = np.where(n_active > 0, dominant + 1, 0)
    return pd.DataFrame({
        "t": u.grid.step_starts,
        "active_index": active.astype(int),
        "n_active": n_active.astype(int),
        "value": value,
        "magnitude": np.abs(value),
    })


def extract_switching(u):
    """
    Switching pair (c(t), u(t)) of a control with at most one active channel

    Args:
        u: ControlTrajectory

    Returns:
        pandas.DataFrame: As ``control_path``
    """
    n_active = np.count_nonzero(u.values, axis=1)
    violations = np.flatnonzero(n_active > 1)
    if violations.size:
        raise InvalidArgumentError(
            f"control is not switching: {n_active[violations[0]]} active channels at step {violations[0]}"
        )
    return control_path(u)


def fit_exponential_decay(history, t_start=1.0, t_end=None, column="vprime_norm"):
    """
    Least-squares slope of log(norm) against t

    Args:
        history: Norm history DataFrame
        t_start: Start of the fitted interval
        t_end: End of the fitted interval (default: last time)
        column: Norm column to fit

    Returns:
        float: Fitted rate (negative for decay); NaN with fewer than two points
    """
    mask = history["t"] >= t_start
    if t_end is not None:
        mask &= history["t"] <= t_end
    window = history.loc[mask & (history[column] > 0)]
    if len(window) < 2:
        return float("nan")
    slope, _ = np.polyfit(window["t"].to_numpy(), np.log(window[column].to_numpy()), 1)
    return float(slope)


def _diagnostics_frame(rows):
    return pd.DataFrame(rows, columns=["window", "t0", "iterations", "cost", "converged", "residual"])


def _receding(config, y0, problem, projection, mode):
    config.validate()
    if problem is None:
        problem = setup_problem(config)
    if problem.actuators is None:
        raise InvalidArgumentError("receding horizon control needs actuators")
    y = problem.y0 if y0 is None else np.asarray(y0, dtype=float)

    dt = config.dt
    per_delta = config.steps_per_delta
    n_controls = problem.actuators.count
    applied = np.zeros((config.n_steps, n_controls))
    states = np.empty((config.n_steps + 1, y.shape[0]))
    states[0] = y
    warm = np.zeros((config.steps_per_horizon, n_controls))
    rows = []
    completed = 0
    failure = None

    for window in range(config.n_windows):
        k0 = window * per_delta
        t0 = k0 * dt
        try:
            inst = build_ocp_instance(
                t0, config.horizon_T, y, config.beta,
                problem.operators, problem.actuators, problem.stepper,
            )
            u_init = ControlTrajectory(inst.grid, warm)
            solution = solve_ocp(inst, u_init, config.optimizer, projection)
            head = solution.control.values[:per_delta]
            segment = solve_forward(
                y, ControlTrajectory(inst.grid.head(per_delta), head),
                problem.operators, problem.actuators, problem.stepper,
            )
        except NumericalFailureError as exc:
            failure = f"window {window} at t0={t0:g}: {exc}"
            logger.error("receding horizon run aborted in %s", failure)
            break

        applied[k0:k0 + per_delta] = head
        states[k0 + 1:k0 + per_delta + 1] = segment.states[1:]
        y = segment.final
        completed = k0 + per_delta
        warm = shift_warm_start(solution.control.values, per_delta)
        rows.append((window, t0, solution.iterations, solution.cost, solution.converged, solution.residual))

        if not solution.converged:
            logger.warning(
                "window %d (t0=%g) stopped after %d iterations, residual %.3e",
                window, t0, solution.iterations, solution.residual,
            )
        logger.info(
            "window %d/%d t0=%.3f iterations=%d cost=%.6e converged=%s |y|_V'=%.3e",
            window + 1, config.n_windows, t0, solution.iterations, solution.cost,
            solution.converged, vprime_norm(y, problem.norms),
        )

    return _assemble_report(mode, config, problem, applied, states, completed, rows, failure)


def _assemble_report(mode, config, problem, applied, states, completed, rows, failure):
    diagnostics = _diagnostics_frame(rows)
    if completed == 0:
        # nothing was applied; only the initial norms are reported
        y0 = states[0]
        initial = pd.DataFrame({
            "t": [0.0],
            "h_norm": [h_norm(y0, problem.norms)],
            "v_norm": [v_norm(y0, problem.norms)],
            "vprime_norm": [vprime_norm(y0, problem.norms)],
        })
        empty = pd.DataFrame(columns=["t", "active_index", "n_active", "value", "magnitude"])
        return RhcReport(mode, None, None, empty, initial, 0.0, diagnostics, True, failure)

    grid = TimeGrid(0.0, config.dt, completed)
    control = ControlTrajectory(grid, applied[:completed])
    trajectory = StateTrajectory(grid, states[:completed + 1])
    path = extract_switching(control) if mode == "switching" else control_path(control)
    cost = trajectory_cost(trajectory.states, control.values, problem.operators.mass, config.beta, config.dt)
    return RhcReport(
        mode=mode,
        control=control,
        states=trajectory,
        switching_path=path,
        norm_history=norm_history(trajectory, problem.norms),
        accumulated_cost=cost,
        window_diagnostics=diagnostics,
        failed=failure is not None,
        failure_message=failure,
    )


def run_rhc(config, y0=None, problem=None):
    """
    Switching receding horizon control

    Args:
        config: RhcConfig
        y0: Initial coefficient vector (default: interpolated benchmark y0)
        problem: Optional Problem from ``setup_problem`` to reuse assembly

    Returns:
        RhcReport: Concatenated control, state, switching path and diagnostics
    """
    return _receding(config, y0, problem, project_control, "switching")


def run_rhc_nonswitching(config, y0=None, problem=None):
    """
    Receding horizon control with all actuators allowed at once

    Args:
        config: RhcConfig
        y0: Initial coefficient vector
        problem: Optional Problem

    Returns:
        RhcReport: As ``run_rhc``; the path reports the dominant channel
    """
    return _receding(config, y0, problem, identity_projection, "nonswitching")


def run_free(config, y0=None, problem=None):
    """
    Uncontrolled reference run over [0, t_infinity]

    Args:
        config: RhcConfig
        y0: Initial coefficient vector
        problem: Optional Problem

    Returns:
        RhcReport: Report with a zero control of no channels
    """
    config.validate()
    if problem is None:
        problem = setup_problem(config)
    y = problem.y0 if y0 is None else np.asarray(y0, dtype=float)
    grid = TimeGrid(0.0, config.dt, config.n_steps)
    try:
        trajectory = solve_uncontrolled(y, problem.operators, grid, problem.stepper)
    except NumericalFailureError as exc:
        logger.error("free run failed: %s", exc)
        states = np.empty((config.n_steps + 1, y.shape[0]))
        states[0] = y
        return _assemble_report("free", config, problem, np.zeros((config.n_steps, 0)), states, 0, [], str(exc))

    control = ControlTrajectory.zeros(grid, 0)
    cost = trajectory_cost(trajectory.states, control.values, problem.operators.mass, config.beta, config.dt)
    history = norm_history(trajectory, problem.norms)
    logger.info("free run: final |y|_V'=%.3e, cost=%.6e", history["vprime_norm"].iloc[-1], cost)
    return RhcReport(
        mode="free",
        control=control,
        states=trajectory,
        switching_path=control_path(control),
        norm_history=history,
        accumulated_cost=cost,
        window_diagnostics=_diagnostics_frame([]),
    )


def run_configured(config, problem=None):
    """Dispatch on ``config.mode``"""
    runners = {"switching": run_rhc, "nonswitching": run_rhc_nonswitching, "free": run_free}
    return runners[config.validate().mode](config, problem=problem)
