"""
Optimizer Module

Proximal (projected) gradient method with Barzilai-Borwein steps and a
nonmonotone backtracking line search for the window problems. Controls are
projected pointwise in time onto {x in R^M : |x|_0 <= 1}.
"""

from collections import deque
from dataclasses import dataclass

import numpy as np

from dynamics import ControlTrajectory
from errors import InvalidArgumentError, NumericalFailureError
from logging_config import get_logger
from ocp import eval_cost, gradient

logger = get_logger(__name__)


@dataclass(frozen=True)
class OptimizerOptions:
    """
    Options of ``solve_ocp``.

    The method stops when alpha_k |u_{k+1} - u_k| <= tol in the dt weighted
    L2 norm. Trial steps are 1/alpha with alpha from a BB formula clipped to
    ``bb_clip``; backtracking multiplies alpha by 1/ls_shrink.
    """

    tol: float = 1e-5
    max_iters: int = 500
    ls_memory: int = 10
    ls_shrink: float = 0.5
    ls_sufficient_decrease: float = 1e-4
    bb_clip: tuple = (1e-8, 1e8)
    initial_alpha: float = 1.0
    ls_max_backtracks: int = 60

    def __post_init__(self):
        object.__setattr__(self, "bb_clip", tuple(float(v) for v in self.bb_clip))
        if not self.tol > 0:
            raise InvalidArgumentError(f"optimizer.tol must be positive, got {self.tol!r}")
        for name in ("max_iters", "ls_memory", "ls_max_backtracks"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
                raise InvalidArgumentError(f"optimizer.{name} must be a positive integer, got {value!r}")
        if not 0 < self.ls_shrink < 1:
            raise InvalidArgumentError(f"optimizer.ls_shrink must lie in (0, 1), got {self.ls_shrink!r}")
        if not 0 < self.ls_sufficient_decrease < 1:
            raise InvalidArgumentError(
                f"optimizer.ls_sufficient_decrease must lie in (0, 1), got {self.ls_sufficient_decrease!r}"
            )
        if len(self.bb_clip) != 2 or not 0 < self.bb_clip[0] <= self.bb_clip[1]:
            raise InvalidArgumentError(f"optimizer.bb_clip must be ordered positive bounds, got {self.bb_clip!r}")
        if not self.bb_clip[0] <= self.initial_alpha <= self.bb_clip[1]:
            raise InvalidArgumentError("optimizer.initial_alpha must lie within bb_clip")


@dataclass(frozen=True, eq=False)
class OcpSolution:
    control: ControlTrajectory
    cost: float
    iterations: int
    converged: bool
    residual: float
    backtracks: int
    cost_history: tuple


def project_card1(v):
    """
    Keep the first component of largest magnitude, zero the rest

    Args:
        v: Finite vector of length M

    Returns:
        numpy.ndarray: Nearest point with at most one nonzero entry
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise InvalidArgumentError(f"expected a vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise InvalidArgumentError("vector must be finite")
    w = np.zeros_like(v)
    if v.size:
        # argmax returns the smallest index among ties
        j = int(np.argmax(np.abs(v)))
        w[j] = v[j]
    return w


def project_rows(values):
    """Row-wise ``project_card1`` of an (n_steps, M) array"""
    values = np.asarray(values, dtype=float)
    projected = np.zeros_like(values)
    if values.shape[1]:
        rows = np.arange(values.shape[0])
        keep = np.argmax(np.abs(values), axis=1)
        projected[rows, keep] = values[rows, keep]
    return projected


def project_control(u):
    """
    Project a control trajectory pointwise in time onto the switching set

    Args:
        u: ControlTrajectory

    Returns:
        ControlTrajectory: At most one nonzero channel per step
    """
    return u.with_values(project_rows(u.values))


def identity_projection(u):
    """No constraint: every channel may be active (nonswitching control)"""
    return u


def _inner(a, b, dt):
    return dt * float(np.sum(a * b))


def bb_step(s, g_diff, dt, fallback, bb_clip):
    """
    Barzilai-Borwein reciprocal step length

    BB1 alpha = <s, y>/<s, s>, then BB2 alpha = <y, y>/<s, y>; when the
    curvature pairing <s, y> is not positive the fallback is used.

    Args:
        s: Iterate difference
        g_diff: Gradient difference
        dt: Weight of the discrete L2 inner product
        fallback: Safeguard value
        bb_clip: (alpha_min, alpha_max)

    Returns:
        float: Clipped alpha
    """
    ss = _inner(s, s, dt)
    sy = _inner(s, g_diff, dt)
    yy = _inner(g_diff, g_diff, dt)
    alpha = fallback
    if ss > 0 and sy > 0:
        for candidate in (sy / ss, yy / sy):
            if np.isfinite(candidate) and candidate > 0:
                alpha = candidate
                break
    return float(np.clip(alpha, bb_clip[0], bb_clip[1]))


def solve_ocp(inst, u_init, opts=None, projection=project_control, callback=None):
    """
    Projected gradient iteration u+ = proj(u - grad F(u) / alpha)

    Args:
        inst: OcpInstance
        u_init: Initial ControlTrajectory (projected before use)
        opts: OptimizerOptions
        projection: Pointwise projection; ``identity_projection`` for the
            unconstrained problem
        callback: Optional ``callback(iteration, values, cost, alpha, residual)``
            called after every accepted step

    Returns:
        OcpSolution: Best iterate found
    """
    opts = opts or OptimizerOptions()
    if u_init.grid != inst.grid or u_init.n_channels != inst.n_channels:
        raise InvalidArgumentError("initial control does not match the problem")
    dt = inst.grid.dt

    u = projection(u_init)
    cost, trajectory = eval_cost(u, inst)
    if not np.isfinite(cost):
        raise NumericalFailureError("non-finite cost at the initial control")
    grad = gradient(u, inst, trajectory).values / dt

    history = deque([cost], maxlen=opts.ls_memory)
    costs = [cost]
    best_cost, best_u = cost, u
    alpha = opts.initial_alpha
    residual = np.inf
    converged = False
    total_backtracks = 0
    iteration = 0

    while iteration < opts.max_iters:
        iteration += 1
        reference = max(history)
        backtracks = 0
        while True:
            trial = u.values - grad / alpha
            if not np.all(np.isfinite(trial)):
                raise NumericalFailureError("non-finite trial control")
            u_new = projection(u.with_values(trial))
            step = u_new.values - u.values
            step_sq = _inner(step, step, dt)
            cost_new, trajectory_new = eval_cost(u_new, inst)
            if not np.isfinite(cost_new):
                raise NumericalFailureError(f"non-finite cost in iteration {iteration}")
            if cost_new <= reference - opts.ls_sufficient_decrease * alpha * step_sq:
                break
            backtracks += 1
            alpha /= opts.ls_shrink
            if backtracks > opts.ls_max_backtracks or alpha > opts.bb_clip[1]:
                break
        total_backtracks += backtracks

        if backtracks > opts.ls_max_backtracks or alpha > opts.bb_clip[1]:
            logger.warning("line search failed in iteration %d (alpha=%.3e)", iteration, alpha)
            break

        residual = alpha * np.sqrt(step_sq)
        grad_new = gradient(u_new, inst, trajectory_new).values / dt
        accepted_alpha = alpha
        alpha = bb_step(step, grad_new - grad, dt, opts.initial_alpha, opts.bb_clip)

        u, cost, grad = u_new, cost_new, grad_new
        history.append(cost)
        costs.append(cost)
        if cost < best_cost:
            best_cost, best_u = cost, u

        logger.debug(
            "iteration %d: cost=%.6e alpha=%.3e residual=%.3e backtracks=%d",
            iteration, cost, accepted_alpha, residual, backtracks,
        )
        if callback is not None:
            callback(iteration, u.values, cost, accepted_alpha, residual)
        if residual <= opts.tol:
            converged = True
            break

    return OcpSolution(
        control=best_u,
        cost=best_cost,
        iterations=iteration,
        converged=converged,
        residual=float(residual),
        backtracks=total_backtracks,
        cost_history=tuple(costs),
    )
