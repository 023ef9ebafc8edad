"""
Dynamics Module

Crank-Nicolson time integration of the semidiscrete controlled system
M y' + (nu K + C(t)) y = sum_j u_j(t) d^j with controls held constant on
every time step.
"""

import threading
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from errors import InvalidArgumentError, NumericalFailureError
from logging_config import get_logger

logger = get_logger(__name__)

SOLVERS = ("direct", "iterative")
GMRES_RTOL = 1e-10
GMRES_RESTART = 50
GMRES_MAXITER = 200


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_k = t0 + k dt, k = 0..n_steps"""

    t0: float
    dt: float
    n_steps: int

    def __post_init__(self):
        if not np.isfinite(self.t0) or self.t0 < 0:
            raise InvalidArgumentError(f"t0 must be a nonnegative time, got {self.t0!r}")
        if not np.isfinite(self.dt) or self.dt <= 0:
            raise InvalidArgumentError(f"dt must be positive, got {self.dt!r}")
        if isinstance(self.n_steps, bool) or not isinstance(self.n_steps, (int, np.integer)) or self.n_steps < 1:
            raise InvalidArgumentError(f"n_steps must be a positive integer, got {self.n_steps!r}")

    @classmethod
    def spanning(cls, t0, length, dt):
        """Grid covering [t0, t0 + length]; length must be a multiple of dt"""
        n_steps = int(round(length / dt))
        if n_steps < 1 or abs(n_steps * dt - length) > 1e-12 * max(1.0, abs(length)):
            raise InvalidArgumentError(f"length {length!r} is not a positive multiple of dt={dt!r}")
        return cls(float(t0), float(dt), n_steps)

    @property
    def t_end(self):
        return self.t0 + self.n_steps * self.dt

    @property
    def nodes(self):
        return self.t0 + self.dt * np.arange(self.n_steps + 1)

    @property
    def step_starts(self):
        return self.t0 + self.dt * np.arange(self.n_steps)

    @property
    def midpoints(self):
        return self.t0 + self.dt * (np.arange(self.n_steps) + 0.5)

    def head(self, n_steps):
        """Grid with the same start and step covering only the first ``n_steps`` steps"""
        return TimeGrid(self.t0, self.dt, n_steps)


@dataclass(frozen=True, eq=False)
class ControlTrajectory:
    """Controls of M channels, constant on every step [t_k, t_{k+1})"""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] != self.grid.n_steps:
            raise InvalidArgumentError(
                f"control values must have shape ({self.grid.n_steps}, M), got {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise InvalidArgumentError("control values must be finite")
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, grid, n_channels):
        return cls(grid, np.zeros((grid.n_steps, n_channels)))

    @property
    def n_channels(self):
        return self.values.shape[1]

    def with_values(self, values):
        return ControlTrajectory(self.grid, values)


@dataclass(frozen=True, eq=False)
class StateTrajectory:
    """FEM coefficient vectors at every node of the grid, shape (n_steps + 1, N)"""

    grid: TimeGrid
    states: np.ndarray

    @property
    def initial(self):
        return self.states[0]

    @property
    def final(self):
        return self.states[-1]

    def node_index(self, t):
        """Index of the grid node closest to time ``t``"""
        k = int(round((t - self.grid.t0) / self.grid.dt))
        if k < 0 or k > self.grid.n_steps:
            raise InvalidArgumentError(f"time {t!r} outside [{self.grid.t0}, {self.grid.t_end}]")
        return k


class _DirectSolve:
    def __init__(self, matrix):
        try:
            self._lu = spla.splu(matrix.tocsc())
        except RuntimeError as exc:
            raise NumericalFailureError(f"Crank-Nicolson matrix is singular: {exc}") from exc

    def solve(self, b):
        return self._lu.solve(b)

    def solve_transposed(self, b):
        return self._lu.solve(b, trans="T")


class _IterativeSolve:
    """GMRES preconditioned with the factorized time independent part M/dt + nu K/2"""

    def __init__(self, matrix, preconditioner):
        self._matrix = matrix.tocsr()
        self._matrix_t = matrix.T.tocsr()
        n = matrix.shape[0]
        # the preconditioner matrix is symmetric, so it serves both directions
        self._precond = spla.LinearOperator((n, n), matvec=preconditioner.solve)

    def _run(self, matrix, b):
        if not np.any(b):
            return np.zeros_like(b)
        x, info = spla.gmres(
            matrix, b, M=self._precond, rtol=GMRES_RTOL, atol=0.0,
            restart=GMRES_RESTART, maxiter=GMRES_MAXITER,
        )
        if info != 0:
            raise NumericalFailureError(f"GMRES did not converge (info={info})")
        return x

    def solve(self, b):
        return self._run(self._matrix, b)

    def solve_transposed(self, b):
        return self._run(self._matrix_t, b)


@dataclass(frozen=True, eq=False)
class CrankNicolsonStep:
    """One step L y_{k+1} = R y_k + B u_k with L = M/dt + G/2, R = M/dt - G/2"""

    t_mid: float
    lhs: object
    rhs: object
    solver: object

    def solve(self, b):
        return self.solver.solve(b)

    def solve_transposed(self, b):
        return self.solver.solve_transposed(b)


class CrankNicolsonStepper:
    """
    Builds and caches the per-step Crank-Nicolson systems.

    The time dependent operator is sampled at the step midpoint. Systems are
    cached by midpoint time so that overlapping receding horizon windows and
    the backward adjoint sweep reuse the same factorizations.
    """

    def __init__(self, operators, dt, solver="direct", cache_size=512):
        if solver not in SOLVERS:
            raise InvalidArgumentError(f"solver must be one of {SOLVERS}, got {solver!r}")
        if not np.isfinite(dt) or dt <= 0:
            raise InvalidArgumentError(f"dt must be positive, got {dt!r}")
        if cache_size < 1:
            raise InvalidArgumentError(f"cache_size must be positive, got {cache_size!r}")

        self.operators = operators
        self.dt = float(dt)
        self.solver = solver
        self.cache_size = int(cache_size)
        self._mass_over_dt = (operators.mass / self.dt).tocsr()
        self._cache = OrderedDict()
        self._lock = threading.Lock()
        self._preconditioner = None
        if solver == "iterative":
            base = self._mass_over_dt + 0.5 * operators.nu * operators.stiffness
            self._preconditioner = _DirectSolve(base)

    def _build(self, t_mid):
        logger.debug("assembling Crank-Nicolson step at t=%.6f (%s solver)", t_mid, self.solver)
        half = 0.5 * self.operators.dynamics_matrix(t_mid)
        lhs = (self._mass_over_dt + half).tocsc()
        rhs = (self._mass_over_dt - half).tocsr()
        if self.solver == "direct":
            solver = _DirectSolve(lhs)
        else:
            solver = _IterativeSolve(lhs, self._preconditioner)
        return CrankNicolsonStep(t_mid, lhs, rhs, solver)

    def step(self, t_mid):
        key = round(float(t_mid), 12)
        with self._lock:
            cached = self._cache.get(key)
            if cached is not None:
                self._cache.move_to_end(key)
                return cached

        built = self._build(float(t_mid))
        with self._lock:
            cached = self._cache.setdefault(key, built)
            self._cache.move_to_end(key)
            while len(self._cache) > self.cache_size:
                self._cache.popitem(last=False)
        return cached

    def steps(self, grid):
        return [self.step(t) for t in grid.midpoints]


def _resolve_stepper(stepper, operators, dt):
    if stepper is None:
        return CrankNicolsonStepper(operators, dt)
    if stepper.operators is not operators:
        raise InvalidArgumentError("stepper was built for a different operator set")
    if abs(stepper.dt - dt) > 1e-15 * max(1.0, dt):
        raise InvalidArgumentError(f"stepper dt={stepper.dt} does not match grid dt={dt}")
    return stepper


def _check_initial_state(y0, operators):
    y0 = np.asarray(y0, dtype=float)
    if y0.shape != (operators.n_nodes,):
        raise InvalidArgumentError(f"initial state must have shape ({operators.n_nodes},), got {y0.shape}")
    if not np.all(np.isfinite(y0)):
        raise InvalidArgumentError("initial state must be finite")
    return y0


def _integrate(y0, grid, stepper, forcing):
    states = np.empty((grid.n_steps + 1, y0.shape[0]))
    states[0] = y0
    for k, step in enumerate(stepper.steps(grid)):
        rhs = step.rhs @ states[k]
        if forcing is not None:
            rhs += forcing[k]
        states[k + 1] = step.solve(rhs)
        if not np.all(np.isfinite(states[k + 1])):
            raise NumericalFailureError(f"non-finite state at t={grid.t0 + (k + 1) * grid.dt:.6g}")
    return StateTrajectory(grid, states)


def control_forcing(u, actuators):
    """Load vectors B u_k for every step, shape (n_steps, N)"""
    return np.asarray((actuators.control_matrix @ u.values.T).T)


def solve_forward(y0, u, operators, actuators, stepper=None):
    """
    Integrate the controlled system with Crank-Nicolson

    Args:
        y0: Initial coefficient vector
        u: ControlTrajectory with one channel per actuator
        operators: OperatorSet
        actuators: ActuatorSet
        stepper: Optional CrankNicolsonStepper to share cached factorizations

    Returns:
        StateTrajectory: States at every node of ``u.grid``
    """
    y0 = _check_initial_state(y0, operators)
    if u.n_channels != actuators.count:
        raise InvalidArgumentError(
            f"control has {u.n_channels} channels but there are {actuators.count} actuators"
        )
    if actuators.control_matrix.shape[0] != operators.n_nodes:
        raise InvalidArgumentError("actuators were built on a different mesh")
    stepper = _resolve_stepper(stepper, operators, u.grid.dt)
    return _integrate(y0, u.grid, stepper, control_forcing(u, actuators))


def solve_uncontrolled(y0, operators, grid, stepper=None):
    """
    Integrate the free dynamics (u = 0)

    Args:
        y0: Initial coefficient vector
        operators: OperatorSet
        grid: TimeGrid
        stepper: Optional CrankNicolsonStepper

    Returns:
        StateTrajectory: Free trajectory
    """
    y0 = _check_initial_state(y0, operators)
    stepper = _resolve_stepper(stepper, operators, grid.dt)
    return _integrate(y0, grid, stepper, None)
