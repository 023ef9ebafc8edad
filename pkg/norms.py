"""
Norms Module

Discrete H = L2, V = W^{1,2} and dual V' norms of FEM coefficient vectors.
The V' norm is the Riesz dual of the energy norm of A = nu K + M.
"""

from dataclasses import dataclass

import numpy as np
import pandas as pd
import scipy.sparse.linalg as spla

from errors import InvalidArgumentError, NumericalFailureError


@dataclass(frozen=True, eq=False)
class NormContext:
    """Mass matrix, discrete A = nu K + M and the factorization of A"""

    mass: object
    a_op: object
    a_factor: object

    @property
    def n_nodes(self):
        return self.mass.shape[0]


def build_norm_context(operators):
    """
    Factorize the discrete A of an operator set

    Args:
        operators: OperatorSet

    Returns:
        NormContext: Context shared by all norm evaluations
    """
    a_op = operators.a_operator
    try:
        factor = spla.splu(a_op)
    except RuntimeError as exc:
        raise NumericalFailureError(f"factorization of nu K + M failed: {exc}") from exc
    return NormContext(mass=operators.mass.tocsr(), a_op=a_op.tocsr(), a_factor=factor)


def _check(y, ctx):
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != ctx.n_nodes:
        raise InvalidArgumentError(f"vector length {y.shape[-1]} does not match {ctx.n_nodes} nodes")
    return y


def _root(squared):
    return np.sqrt(np.maximum(squared, 0.0))


def h_norm(y, ctx):
    """sqrt(y^T M y)"""
    y = _check(y, ctx)
    return float(_root(y @ (ctx.mass @ y)))


def v_norm(y, ctx):
    """sqrt(y^T (nu K + M) y)"""
    y = _check(y, ctx)
    return float(_root(y @ (ctx.a_op @ y)))


def dual_norm(f, ctx):
    """
    Norm of a dual datum f (a functional on the P1 space)

    Args:
        f: Vector of values <f, phi_i>
        ctx: NormContext

    Returns:
        float: sqrt(f^T (nu K + M)^{-1} f)
    """
    f = _check(f, ctx)
    return float(_root(f @ ctx.a_factor.solve(f)))


def vprime_norm(y, ctx):
    """
    V' norm of a P1 function

    Args:
        y: Coefficient vector
        ctx: NormContext

    Returns:
        float: dual_norm(M y)
    """
    y = _check(y, ctx)
    return dual_norm(ctx.mass @ y, ctx)


def norm_history(trajectory, ctx):
    """
    H, V and V' norms at every node of a trajectory

    Args:
        trajectory: StateTrajectory
        ctx: NormContext

    Returns:
        pandas.DataFrame: Columns t, h_norm, v_norm, vprime_norm
    """
    states = _check(trajectory.states, ctx)
    mass_states = (ctx.mass @ states.T).T
    a_states = (ctx.a_op @ states.T).T
    riesz = ctx.a_factor.solve(np.ascontiguousarray(mass_states.T)).T

    return pd.DataFrame({
        "t": trajectory.grid.nodes,
        "h_norm": _root(np.einsum("kn,kn->k", states, mass_states)),
        "v_norm": _root(np.einsum("kn,kn->k", states, a_states)),
        "vprime_norm": _root(np.einsum("kn,kn->k", mass_states, riesz)),
    })
