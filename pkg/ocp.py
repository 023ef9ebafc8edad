"""
Optimal Control Problem Module

Finite horizon cost
    J_T(u; t0, y0) = 1/2 int (|y(t)|_H^2 + beta |u(t)|^2) dt
of the fully discrete Crank-Nicolson system and its exact gradient with
respect to the per-step control values (discretize-then-optimize adjoint).
"""

from dataclasses import dataclass

import numpy as np

from dynamics import ControlTrajectory, TimeGrid, solve_forward
from errors import InvalidArgumentError


@dataclass(eq=False)
class OcpInstance:
    """Window [t0, t0 + horizon] of the receding horizon loop"""

    t0: float
    horizon: float
    y0: np.ndarray
    beta: float
    grid: TimeGrid
    operators: object
    actuators: object
    stepper: object

    def __post_init__(self):
        if not np.isfinite(self.horizon) or self.horizon <= 0:
            raise InvalidArgumentError(f"horizon must be positive, got {self.horizon!r}")
        if not np.isfinite(self.beta) or self.beta <= 0:
            raise InvalidArgumentError(f"beta must be positive, got {self.beta!r}")
        if abs(self.grid.n_steps * self.grid.dt - self.horizon) > 1e-12 * max(1.0, self.horizon):
            raise InvalidArgumentError("grid does not cover the horizon")
        if abs(self.grid.t0 - self.t0) > 1e-12 * max(1.0, abs(self.t0)):
            raise InvalidArgumentError("grid does not start at t0")
        y0 = np.asarray(self.y0, dtype=float)
        if y0.shape != (self.operators.n_nodes,):
            raise InvalidArgumentError(f"y0 must have shape ({self.operators.n_nodes},), got {y0.shape}")
        self.y0 = y0

    @property
    def n_channels(self):
        return self.actuators.count

    def zero_control(self):
        return ControlTrajectory.zeros(self.grid, self.n_channels)


@dataclass(frozen=True, eq=False)
class AdjointTrajectory:
    """
    Costates of the discrete adjoint; ``costates[k]`` multiplies the
    constraint of step k (t_k -> t_{k+1}). The costate after the last step is
    zero since the cost has no terminal term.
    """

    grid: TimeGrid
    costates: np.ndarray


def build_ocp_instance(t0, horizon, y0, beta, operators, actuators, stepper):
    """
    Set up the window problem on [t0, t0 + horizon]

    Args:
        t0: Window start time
        horizon: Prediction horizon T, a multiple of the stepper's dt
        y0: State at t0
        beta: Control penalty
        operators: OperatorSet
        actuators: ActuatorSet
        stepper: CrankNicolsonStepper shared across windows

    Returns:
        OcpInstance: The window problem
    """
    grid = TimeGrid.spanning(t0, horizon, stepper.dt)
    return OcpInstance(float(t0), float(horizon), y0, float(beta), grid, operators, actuators, stepper)


def trapezoid_weights(n_steps):
    weights = np.ones(n_steps + 1)
    weights[0] = weights[-1] = 0.5
    return weights


def trajectory_cost(states, controls, mass, beta, dt):
    """
    Discrete cost of a state/control pair

    Args:
        states: Array (n_steps + 1, N) of nodal states
        controls: Array (n_steps, M) of per-step controls
        mass: Mass matrix
        beta: Control penalty
        dt: Step size

    Returns:
        float: Trapezoidal state term plus exact piecewise constant control term
    """
    states = np.asarray(states, dtype=float)
    controls = np.asarray(controls, dtype=float)
    squared = np.einsum("kn,kn->k", states, (mass @ states.T).T)
    state_term = 0.5 * dt * float(trapezoid_weights(states.shape[0] - 1) @ squared)
    control_term = 0.5 * beta * dt * float(np.sum(controls ** 2))
    return state_term + control_term


def _check_control(u, inst):
    if u.grid != inst.grid:
        raise InvalidArgumentError("control grid does not match the problem grid")
    if u.n_channels != inst.n_channels:
        raise InvalidArgumentError(
            f"control has {u.n_channels} channels, problem has {inst.n_channels}"
        )


def eval_cost(u, inst):
    """
    Evaluate J_T at a control

    Args:
        u: ControlTrajectory on ``inst.grid``
        inst: OcpInstance

    Returns:
        tuple: (cost, StateTrajectory)
    """
    _check_control(u, inst)
    trajectory = solve_forward(inst.y0, u, inst.operators, inst.actuators, inst.stepper)
    cost = trajectory_cost(trajectory.states, u.values, inst.operators.mass, inst.beta, inst.grid.dt)
    return cost, trajectory


def solve_adjoint(trajectory, inst):
    """
    Backward sweep of the transposed Crank-Nicolson recursion

    With L_k y_{k+1} = R_k y_k + B u_k and trapezoid weights w_k:
        L_{n-1}^T p_{n-1} = dt w_n M y_n
        L_k^T p_k = dt w_{k+1} M y_{k+1} + R_{k+1}^T p_{k+1}

    Args:
        trajectory: StateTrajectory from the forward solve
        inst: OcpInstance

    Returns:
        AdjointTrajectory: Costates p_k, k = 0..n_steps-1
    """
    grid = inst.grid
    n = grid.n_steps
    steps = inst.stepper.steps(grid)
    weights = trapezoid_weights(n)
    mass_states = (inst.operators.mass @ trajectory.states.T).T

    costates = np.empty((n, trajectory.states.shape[1]))
    costates[n - 1] = steps[n - 1].solve_transposed(grid.dt * weights[n] * mass_states[n])
    for k in range(n - 2, -1, -1):
        rhs = grid.dt * weights[k + 1] * mass_states[k + 1] + steps[k + 1].rhs.T @ costates[k + 1]
        costates[k] = steps[k].solve_transposed(rhs)
    return AdjointTrajectory(grid, costates)


def gradient(u, inst, trajectory=None):
    """
    Exact gradient of the discrete cost in the Euclidean inner product

    Entry (k, j) equals beta dt u_{k,j} + (d^j)^T p_k.

    Args:
        u: ControlTrajectory on ``inst.grid``
        inst: OcpInstance
        trajectory: Optional StateTrajectory of ``u`` to skip the forward solve

    Returns:
        ControlTrajectory: The gradient
    """
    _check_control(u, inst)
    if trajectory is None:
        _, trajectory = eval_cost(u, inst)
    adjoint = solve_adjoint(trajectory, inst)
    coupling = np.asarray((inst.actuators.control_matrix.T @ adjoint.costates.T).T)
    return u.with_values(inst.beta * inst.grid.dt * u.values + coupling)
