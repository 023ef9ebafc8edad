"""
Mesh and Finite Element Module

This module builds the uniform triangulation of the unit square and assembles
the P1 finite element operators of the controlled parabolic equation: mass,
stiffness (pure Neumann Laplacian), the time dependent reaction-convection
matrix and the point evaluation load vectors of Dirac actuators.
"""

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.sparse as sp

from errors import InvalidArgumentError

# Values of the three local basis functions at the midpoints of the edges
# (0,1), (1,2) and (2,0). Each midpoint carries a third of the element area;
# the rule is exact for quadratic integrands.
MIDPOINT_BASIS = np.array([
    [0.5, 0.5, 0.0],
    [0.0, 0.5, 0.5],
    [0.5, 0.0, 0.5],
])

LOCAL_MASS = np.array([
    [2.0, 1.0, 1.0],
    [1.0, 2.0, 1.0],
    [1.0, 1.0, 2.0],
]) / 12.0

BARYCENTRIC_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Mesh:
    """
    Uniform criss-cross triangulation of (0,1)^2.

    Every square cell is split along its bottom-left to top-right diagonal.
    Node ``j*(n+1) + i`` sits at ``(i/n, j/n)``; cell ``(i, j)`` owns the
    elements ``2*(j*n + i)`` (lower) and ``2*(j*n + i) + 1`` (upper).
    """

    n_cells_per_side: int
    nodes: np.ndarray
    elements: np.ndarray

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_elements(self):
        return self.elements.shape[0]

    @property
    def h(self):
        return 1.0 / self.n_cells_per_side

    @cached_property
    def vertices(self):
        """Element vertex coordinates, shape (n_elements, 3, 2)"""
        return self.nodes[self.elements]

    @cached_property
    def areas(self):
        """Signed element areas (positive for counterclockwise elements)"""
        p = self.vertices
        return 0.5 * _signed_double_area(p)

    @cached_property
    def basis_gradients(self):
        """Constant gradients of the local basis functions, shape (n_elements, 3, 2)"""
        p = self.vertices
        double_area = _signed_double_area(p)
        x, y = p[..., 0], p[..., 1]
        grads = np.empty_like(p)
        for i in range(3):
            j, k = (i + 1) % 3, (i + 2) % 3
            grads[:, i, 0] = (y[:, j] - y[:, k]) / double_area
            grads[:, i, 1] = (x[:, k] - x[:, j]) / double_area
        return grads

    @cached_property
    def quadrature_points(self):
        """Edge midpoints used by the time dependent assembly, shape (n_elements, 3, 2)"""
        return np.einsum("qi,eid->eqd", MIDPOINT_BASIS, self.vertices)


@dataclass(frozen=True)
class Coefficients:
    """
    Reaction coefficient a(t, x) and convection field b(t, x).

    Both callables take ``(t, x1, x2)`` with array arguments of equal shape;
    ``convection`` returns the pair ``(b1, b2)``.
    """

    reaction: Callable
    convection: Callable
    name: str = "custom"


def _benchmark_reaction(t, x1, x2):
    return -2.0 + (2.0 - x1) * np.cos(np.pi * x2) - 0.2 * np.abs(np.sin(t + x2))


def _benchmark_convection(t, x1, x2):
    b1 = (t + 2.0) / (t + 1.0) * (x1 * (x1 - 1.0) * x2)
    b2 = -(x1 - 0.5) * x2 * (x2 - 1.0) * np.cos(t)
    return b1, b2


def benchmark_coefficients():
    """
    Coefficients of the unstable reaction-convection-diffusion benchmark

    Returns:
        Coefficients: a(t,x) = -2 + (2 - x1) cos(pi x2) - 0.2 |sin(t + x2)| and
        b(t,x) = ((t+2)/(t+1) x1 (x1-1) x2, -(x1-0.5) x2 (x2-1) cos t)
    """
    return Coefficients(_benchmark_reaction, _benchmark_convection, name="benchmark")


def constant_coefficients(reaction=0.0, convection=(0.0, 0.0)):
    """
    Space and time independent coefficients, mostly for testing

    Args:
        reaction: Constant value of a
        convection: Constant vector b

    Returns:
        Coefficients: The constant coefficient set
    """
    a_value = float(reaction)
    b1_value, b2_value = (float(v) for v in convection)

    def reaction_fn(t, x1, x2):
        return np.full(np.shape(x1), a_value)

    def convection_fn(t, x1, x2):
        return np.full(np.shape(x1), b1_value), np.full(np.shape(x1), b2_value)

    return Coefficients(reaction_fn, convection_fn, name=f"constant(a={a_value:g})")


def zero_coefficients():
    """Coefficients with a = 0 and b = 0 (pure diffusion)"""
    return constant_coefficients(0.0, (0.0, 0.0))


def benchmark_initial_state(x1, x2):
    """Initial state y0(x) = x1 (1 + sin(2 x2))"""
    return x1 * (1.0 + np.sin(2.0 * x2))


@dataclass(eq=False)
class OperatorSet:
    """
    Assembled operators of the semidiscrete system
    M y' + (nu K + C(t)) y = B u.

    ``mass`` and ``stiffness`` are fixed; C(t) is assembled on demand from
    ``coefficients``.
    """

    mesh: Mesh
    mass: sp.csr_matrix
    stiffness: sp.csr_matrix
    nu: float
    coefficients: Coefficients

    @property
    def n_nodes(self):
        return self.mesh.n_nodes

    def reaction_convection(self, t):
        return assemble_reaction_convection(self.mesh, t, self.coefficients)

    def dynamics_matrix(self, t):
        """nu K + C(t)"""
        return (self.nu * self.stiffness + self.reaction_convection(t)).tocsr()

    @cached_property
    def a_operator(self):
        """Discrete A = nu K + M used for the V and V' norms"""
        return (self.nu * self.stiffness + self.mass).tocsc()


@dataclass(frozen=True, eq=False)
class ActuatorSet:
    """Dirac actuator positions and their P1 load vectors"""

    points: np.ndarray
    load_vectors: tuple

    @property
    def count(self):
        return self.points.shape[0]

    @cached_property
    def control_matrix(self):
        """B = [d^1 ... d^M], shape (n_nodes, M)"""
        return sp.hstack(self.load_vectors, format="csr")


def _signed_double_area(p):
    return ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
            - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))


def _assemble(mesh, local):
    """Scatter element matrices of shape (n_elements, 3, 3) into a CSR matrix"""
    elements = mesh.elements
    rows = np.broadcast_to(elements[:, :, None], local.shape).ravel()
    cols = np.broadcast_to(elements[:, None, :], local.shape).ravel()
    n = mesh.n_nodes
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def build_mesh(n_cells_per_side):
    """
    Build the uniform triangulation of the unit square

    Args:
        n_cells_per_side: Number of square cells per side, at least 2

    Returns:
        Mesh: (n+1)^2 nodes and 2 n^2 counterclockwise triangles
    """
    if isinstance(n_cells_per_side, bool) or not isinstance(n_cells_per_side, (int, np.integer)):
        raise InvalidArgumentError(f"n_cells_per_side must be an integer, got {n_cells_per_side!r}")
    n = int(n_cells_per_side)
    if n < 2:
        raise InvalidArgumentError(f"n_cells_per_side must be at least 2, got {n}")

    coords = np.linspace(0.0, 1.0, n + 1)
    x, y = np.meshgrid(coords, coords)
    nodes = np.column_stack([x.ravel(), y.ravel()])

    ci, cj = np.meshgrid(np.arange(n), np.arange(n))
    v00 = (cj * (n + 1) + ci).ravel()
    v10 = v00 + 1
    v01 = v00 + n + 1
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    elements = np.stack([lower, upper], axis=1).reshape(-1, 3)

    nodes.setflags(write=False)
    elements.setflags(write=False)
    return Mesh(n, nodes, elements)


def assemble_mass(mesh):
    """
    Assemble the P1 mass matrix

    Args:
        mesh: Mesh

    Returns:
        scipy.sparse.csr_matrix: Symmetric positive definite mass matrix
    """
    local = mesh.areas[:, None, None] * LOCAL_MASS
    return _assemble(mesh, local)


def assemble_stiffness(mesh):
    """
    Assemble the P1 stiffness matrix of the Neumann Laplacian

    Args:
        mesh: Mesh

    Returns:
        scipy.sparse.csr_matrix: Symmetric positive semidefinite matrix with
        the constant vector in its kernel
    """
    grads = mesh.basis_gradients
    local = mesh.areas[:, None, None] * np.einsum("eid,ejd->eij", grads, grads)
    return _assemble(mesh, local)


def assemble_reaction_convection(mesh, t, coefficients=None):
    """
    Assemble C(t)_ij = int a(t) phi_j phi_i + (b(t) . grad phi_j) phi_i

    Args:
        mesh: Mesh
        t: Time, nonnegative
        coefficients: Coefficients; defaults to the benchmark problem

    Returns:
        scipy.sparse.csr_matrix: Generally nonsymmetric matrix
    """
    if not np.isfinite(t) or t < 0:
        raise InvalidArgumentError(f"t must be a nonnegative time, got {t!r}")
    if coefficients is None:
        coefficients = benchmark_coefficients()

    quad = mesh.quadrature_points
    x1, x2 = quad[..., 0], quad[..., 1]
    a = np.broadcast_to(coefficients.reaction(t, x1, x2), x1.shape)
    b1, b2 = coefficients.convection(t, x1, x2)
    b1 = np.broadcast_to(b1, x1.shape)
    b2 = np.broadcast_to(b2, x1.shape)

    weights = mesh.areas / 3.0
    grads = mesh.basis_gradients
    reaction = np.einsum("e,eq,qi,qj->eij", weights, a, MIDPOINT_BASIS, MIDPOINT_BASIS)
    # b(x_q) . grad phi_j for every element, quadrature point and basis function
    transport = b1[:, :, None] * grads[:, None, :, 0] + b2[:, :, None] * grads[:, None, :, 1]
    convection = np.einsum("e,qi,eqj->eij", weights, MIDPOINT_BASIS, transport)
    return _assemble(mesh, reaction + convection)


def _barycentric(mesh, point):
    """Barycentric coordinates of ``point`` with respect to every element"""
    p0 = mesh.vertices[:, 0, :]
    lam = np.einsum("eid,ed->ei", mesh.basis_gradients, point[None, :] - p0)
    lam[:, 0] += 1.0
    return lam


def dirac_load(mesh, point):
    """
    Load vector of a Dirac actuator: entries phi_i(point)

    The point is assigned to the lowest-index element containing it.

    Args:
        mesh: Mesh
        point: 2D coordinate in the closed unit square

    Returns:
        scipy.sparse.csc_matrix: Column of shape (n_nodes, 1) with at most
        three nonzeros summing to one
    """
    point = np.asarray(point, dtype=float)
    if point.shape != (2,) or not np.all(np.isfinite(point)):
        raise InvalidArgumentError(f"point must be a finite 2D coordinate, got {point!r}")
    if np.any(point < 0.0) or np.any(point > 1.0):
        raise InvalidArgumentError(f"point {tuple(point)} lies outside the unit square")

    lam = _barycentric(mesh, point)
    containing = np.flatnonzero(np.all(lam >= -BARYCENTRIC_TOL, axis=1))
    if containing.size == 0:
        raise InvalidArgumentError(f"no element contains point {tuple(point)}")

    element = containing[0]
    weights = np.clip(lam[element], 0.0, None)
    weights = weights / weights.sum()
    vector = sp.csc_matrix(
        (weights, (mesh.elements[element], np.zeros(3, dtype=int))),
        shape=(mesh.n_nodes, 1),
    )
    vector.eliminate_zeros()
    return vector


def build_operators(mesh, nu=0.1, coefficients=None):
    """
    Assemble the fixed operators and bind the coefficient functions

    Args:
        mesh: Mesh
        nu: Diffusion coefficient, positive
        coefficients: Coefficients; defaults to the benchmark problem

    Returns:
        OperatorSet: Operators of the semidiscrete system
    """
    if not np.isfinite(nu) or nu <= 0:
        raise InvalidArgumentError(f"nu must be positive, got {nu!r}")
    if coefficients is None:
        coefficients = benchmark_coefficients()
    return OperatorSet(
        mesh=mesh,
        mass=assemble_mass(mesh),
        stiffness=assemble_stiffness(mesh),
        nu=float(nu),
        coefficients=coefficients,
    )


def build_actuators(mesh, points):
    """
    Build the Dirac actuator set

    Args:
        mesh: Mesh
        points: Sequence of M >= 1 pairwise distinct points strictly inside (0,1)^2

    Returns:
        ActuatorSet: Points and their load vectors
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != 2 or points.shape[0] < 1:
        raise InvalidArgumentError(f"actuator points must have shape (M, 2) with M >= 1, got {points.shape}")
    if not np.all(np.isfinite(points)):
        raise InvalidArgumentError("actuator points must be finite")
    if np.any(points <= 0.0) or np.any(points >= 1.0):
        raise InvalidArgumentError("actuator points must lie strictly inside the unit square")
    if np.unique(points, axis=0).shape[0] != points.shape[0]:
        raise InvalidArgumentError("actuator points must be pairwise distinct")

    points = points.copy()
    points.setflags(write=False)
    loads = tuple(dirac_load(mesh, p) for p in points)
    return ActuatorSet(points, loads)


def interpolate(mesh, func):
    """
    Nodal interpolant of a function

    Args:
        mesh: Mesh
        func: Vectorized callable ``func(x1, x2)``

    Returns:
        numpy.ndarray: Coefficient vector of length n_nodes
    """
    x1, x2 = mesh.nodes[:, 0], mesh.nodes[:, 1]
    values = np.broadcast_to(np.asarray(func(x1, x2), dtype=float), x1.shape)
    return np.array(values)
