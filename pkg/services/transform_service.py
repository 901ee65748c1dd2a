"""Potential elimination: the fundamental pair Y, the change of variable tau and the transformed pencil."""
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from services.assembly_service import (
    BoundaryKind, BoundarySpec, DiscretePencil, SturmLiouvilleProblem, assemble, reflect
)
from services.coefficient_service import GeneralizedFunction, ShiftedPrimitive, shifted_primitive
from services.eigen_service import EigenService
from utils.constants import (
    DEFAULT_CELLS, DEFAULT_DIRICHLET_C, MIN_Y1_WARNING, SUBSTEPS, TAU_RENORMALIZATION_TOL
)
from utils.errors import ConjugatePointError, PreconditionError, TransformError
from utils.mesh_utils import Mesh, PiecewiseConstant, PiecewiseLinear, simpson_weights

logger = logging.getLogger(__name__)

SUPPORTED_KINDS = (
    BoundaryKind.DIRICHLET_DIRICHLET,
    BoundaryKind.NEUMANN_DIRICHLET,
    BoundaryKind.NEUMANN_NEUMANN,
)


@dataclass(frozen=True, eq=False)
class FundamentalPair:
    """
    Normalized solution Y = (Y1, Y2) of the first-order system with Y1 > 0.

    Y2 is the quasi-derivative p Y1' - omega Y1. The fine RK4 samples are kept
    per cell (shape (n_cells, substeps + 1)) for quadrature.
    """

    Y1: PiecewiseLinear
    Y2: PiecewiseLinear
    xi: float
    C_init: float
    kind: BoundaryKind
    omega: ShiftedPrimitive
    fine1: np.ndarray
    fine2: np.ndarray

    @property
    def mesh(self) -> Mesh:
        return self.Y1.mesh

    @property
    def substeps(self) -> int:
        return self.fine1.shape[1] - 1

    @property
    def min_y1(self) -> float:
        return float(np.min(self.fine1))

    @property
    def ill_conditioned(self) -> bool:
        return self.min_y1 < MIN_Y1_WARNING


@dataclass(frozen=True, eq=False)
class TauMap:
    """Monotone map tau(t) = int_0^t dx / Y1^2 stored by its nodal values."""

    tau: PiecewiseLinear

    @property
    def mesh_hat(self) -> Mesh:
        return Mesh(self.tau.values)

    def __call__(self, t):
        return self.tau(t)

    def inverse(self, s):
        """tau^{-1} by monotone search over the nodal values."""
        s = np.asarray(s, dtype=float)
        nodes, values = self.tau.mesh.nodes, self.tau.values
        cell = np.clip(np.searchsorted(values, s, side='right') - 1, 0, nodes.size - 2)
        frac = (s - values[cell]) / (values[cell + 1] - values[cell])
        result = nodes[cell] + frac * (nodes[cell + 1] - nodes[cell])
        return float(result) if result.ndim == 0 else result


@dataclass(frozen=True, eq=False)
class TransformResult:
    """Everything produced by one run of the potential-elimination pipeline."""

    problem: SturmLiouvilleProblem
    pencil: DiscretePencil
    reflected: bool
    xi: float
    pair: FundamentalPair
    tau: TauMap
    identity_residual: float
    robin_constant: Optional[float]
    transformed: SturmLiouvilleProblem
    transformed_pencil: DiscretePencil

    @property
    def dirichlet_constant(self) -> Optional[float]:
        if self.pair.kind is BoundaryKind.DIRICHLET_DIRICHLET:
            return dirichlet_form_constant(self.pair)
        return None


def _system_matrix(omega: np.ndarray, p: np.ndarray) -> np.ndarray:
    """dY/dt = [[w/p, 1/p], [-w^2/p, -w/p]] Y, batched over cells."""
    a = np.empty(omega.shape + (2, 2))
    a[..., 0, 0] = omega / p
    a[..., 0, 1] = 1.0 / p
    a[..., 1, 0] = -omega ** 2 / p
    a[..., 1, 1] = -omega / p
    return a


def _step_propagators(omega: ShiftedPrimitive, p: np.ndarray, substeps: int,
                      backward: bool = False) -> np.ndarray:
    """
    RK4 step matrices for every cell, shape (n_cells, substeps, 2, 2).

    The system is linear, so one RK4 step is the matrix
    I + dt/6 (K1 + 2 K2 + 2 K3 + K4) applied to Y. Step k runs in the
    direction of travel: left to right, or right to left when backward.
    """
    h = omega.mesh.widths
    dt = (-h if backward else h) / substeps
    dt = dt[:, None, None]
    eye = np.eye(2)
    steps = np.empty((h.size, substeps, 2, 2))
    for k in range(substeps):
        if backward:
            s0, s1 = 1.0 - k / substeps, 1.0 - (k + 1) / substeps
        else:
            s0, s1 = k / substeps, (k + 1) / substeps
        a0 = _system_matrix(omega.at(slice(None), s0), p)
        am = _system_matrix(omega.at(slice(None), 0.5 * (s0 + s1)), p)
        a1 = _system_matrix(omega.at(slice(None), s1), p)
        k1 = a0
        k2 = am @ (eye + 0.5 * dt * k1)
        k3 = am @ (eye + 0.5 * dt * k2)
        k4 = a1 @ (eye + dt * k3)
        steps[:, k] = eye + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return steps


def _cell_propagators(steps: np.ndarray) -> np.ndarray:
    product = np.broadcast_to(np.eye(2), steps.shape[:1] + (2, 2)).copy()
    for k in range(steps.shape[1]):
        product = steps[:, k] @ product
    return product


def _integrate(steps: np.ndarray, start: Tuple[float, float], backward: bool = False) -> np.ndarray:
    """Nodal values of Y, shape (n_nodes, 2), chaining the cell propagators."""
    cells = _cell_propagators(steps)
    n_cells = cells.shape[0]
    nodes = np.empty((n_cells + 1, 2))
    order = range(n_cells - 1, -1, -1) if backward else range(n_cells)
    y1, y2 = float(start[0]), float(start[1])
    nodes[n_cells if backward else 0] = (y1, y2)
    for i in order:
        (a, b), (c, d) = cells[i]
        y1, y2 = a * y1 + b * y2, c * y1 + d * y2
        nodes[i if backward else i + 1] = (y1, y2)
    return nodes


def _fine_samples(steps: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    """Per-cell substep values, shape (n_cells, substeps + 1, 2)."""
    n_cells, substeps = steps.shape[:2]
    fine = np.empty((n_cells, substeps + 1, 2))
    fine[:, 0] = nodes[:-1]
    for k in range(substeps):
        fine[:, k + 1] = np.einsum('mij,mj->mi', steps[:, k], fine[:, k])
    # the last substep reproduces the right node up to roundoff; keep Y continuous
    fine[:, -1] = nodes[1:]
    return fine


def solve_fundamental(p: PiecewiseConstant, omega: ShiftedPrimitive, kind: BoundaryKind,
                      C: float = DEFAULT_DIRICHLET_C, substeps: int = SUBSTEPS) -> FundamentalPair:
    """
    Integrate the first-order system for Y and normalize so int dx / Y1^2 = 1.

    Args:
        p: Cell values of p
        omega: Shifted primitive of q - xi r on the integration mesh
        kind: DIRICHLET_DIRICHLET, NEUMANN_DIRICHLET or NEUMANN_NEUMANN
        C: Free constant of the Dirichlet construction, C > 0
        substeps: RK4 steps per cell (even)

    Returns:
        FundamentalPair with Y1 > 0 everywhere
    """
    if kind not in SUPPORTED_KINDS:
        raise PreconditionError(f"Kind {kind.value} is not handled directly; reflect it first",
                                kind=kind.value)
    mesh = omega.mesh
    p_cells = p.on_mesh(mesh).values
    weights = simpson_weights(substeps)
    forward = _step_propagators(omega, p_cells, substeps)

    C_init = 0.0
    if kind is BoundaryKind.DIRICHLET_DIRICHLET:
        if not C > 0.0:
            raise PreconditionError(f"The Dirichlet construction needs C > 0, got {C!r}", C=C)
        backward = _step_propagators(omega, p_cells, substeps, backward=True)
        z = _integrate(backward, (0.0, -1.0), backward=True)
        start = (z[0, 0], z[0, 1] + C)
        C_init = float(C)
        logger.debug("Backward solution at 0: Z=(%.6g, %.6g)", z[0, 0], z[0, 1])
    else:
        start = (1.0, 0.0)

    nodes = _integrate(forward, start)
    fine = _fine_samples(forward, nodes)
    y1 = fine[..., 0]
    if not np.all(np.isfinite(y1)) or np.min(y1) <= 0.0:
        bad = np.argwhere(~(y1 > 0.0))[0]
        location = mesh.nodes[bad[0]] + bad[1] / substeps * mesh.widths[bad[0]]
        raise ConjugatePointError("Conjugate point encountered: Y1 vanished during integration",
                                  location=float(location), xi=omega.xi)

    integral = float(np.sum(mesh.widths * ((1.0 / y1 ** 2) @ weights)))
    scale = np.sqrt(integral)
    fine = scale * fine
    nodes = scale * nodes

    pair = FundamentalPair(
        PiecewiseLinear(mesh, nodes[:, 0]), PiecewiseLinear(mesh, nodes[:, 1]),
        float(omega.xi), C_init, kind, omega, fine[..., 0], fine[..., 1]
    )
    if pair.ill_conditioned:
        logger.warning("Fundamental pair is ill-conditioned: min Y1 = %.3e", pair.min_y1)
    return pair


def verify_identity(pair: FundamentalPair, problem: SturmLiouvilleProblem) -> Tuple[float, Optional[float]]:
    """
    Check int p Y1' y' + int (q - xi r) Y1 y = [Y2(1) + omega_1 Y1(1)] y(1) on every FEM basis function.

    The left side uses the coefficients directly (cell densities and atoms);
    the right side uses the pair and omega_1.

    Args:
        pair: Normalized fundamental pair
        problem: Canonical problem the pair was built for

    Returns:
        (max absolute discrepancy, Y2(1)/Y1(1) + omega_1 for NEUMANN_NEUMANN else None)
    """
    mesh = pair.mesh
    h = mesh.widths
    y1 = pair.Y1.values
    fine = pair.fine1
    local = np.linspace(0.0, 1.0, pair.substeps + 1)
    weights = simpson_weights(pair.substeps)

    flux = problem.p.on_mesh(mesh).values * np.diff(y1) / h
    lhs = np.zeros(mesh.nodes.size)
    lhs[1:] += flux
    lhs[:-1] -= flux

    density = problem.q.density(mesh) - pair.xi * problem.r.density(mesh)
    left_moment = h * ((fine * (1.0 - local)) @ weights)
    right_moment = h * ((fine * local) @ weights)
    lhs[:-1] += density * left_moment
    lhs[1:] += density * right_moment
    lhs += (problem.q.node_masses(mesh) - pair.xi * problem.r.node_masses(mesh)) * y1

    omega1 = pair.omega.omega1
    rhs = np.zeros(mesh.nodes.size)
    rhs[-1] = pair.Y2.values[-1] + omega1 * y1[-1]

    lo, hi = BoundarySpec.from_kind(pair.kind).dof_range(mesh.nodes.size)
    residual = float(np.max(np.abs(lhs[lo:hi] - rhs[lo:hi])))

    robin = None
    if pair.kind is BoundaryKind.NEUMANN_NEUMANN:
        robin = float(pair.Y2.values[-1] / y1[-1] + omega1)
    logger.debug("Identity residual %.3e, Robin constant %s", residual, robin)
    return residual, robin


def build_tau(pair: FundamentalPair, mesh: Optional[Mesh] = None) -> TauMap:
    """
    tau(t) = int_0^t dx / Y1^2 by Simpson's rule on the integrator's substeps.

    Args:
        pair: Normalized fundamental pair
        mesh: Mesh of the pair (defaults to it)

    Returns:
        TauMap with tau(0) = 0 and tau(1) = 1 exactly
    """
    mesh = pair.mesh if mesh is None else mesh
    if not mesh.same_as(pair.mesh):
        raise PreconditionError("tau must be built on the mesh of the fundamental pair")
    weights = simpson_weights(pair.substeps)
    increments = mesh.widths * ((1.0 / pair.fine1 ** 2) @ weights)
    values = np.concatenate([[0.0], np.cumsum(increments)])

    total = values[-1]
    if abs(total - 1.0) > TAU_RENORMALIZATION_TOL:
        raise TransformError("tau(1) departs from 1 beyond the renormalization tolerance",
                             tau_end=float(total))
    values = values / total
    values[-1] = 1.0
    if np.any(np.diff(values) <= 0.0):
        raise TransformError("tau is not strictly increasing")
    return TauMap(PiecewiseLinear(mesh, values))


def pushforward(p: PiecewiseConstant, r: GeneralizedFunction, pair: FundamentalPair,
                tau: TauMap, mesh: Mesh) -> Tuple[PiecewiseConstant, GeneralizedFunction, Mesh]:
    """
    Transport p and r through tau.

    p keeps its cell values on the image cells. The measure r is weighted by
    Y1^2: atoms (a, c) go to (tau(a), Y1(a)^2 c) and the absolutely continuous
    part is carried by its primitive, W_rhat(tau(t)) = int_0^t Y1^2 dW_r.

    Returns:
        (p_hat, r_hat, mesh_hat)
    """
    mesh_hat = tau.mesh_hat
    p_hat = PiecewiseConstant(mesh_hat, p.on_mesh(mesh).values)

    weights = simpson_weights(pair.substeps)
    increments = r.density(mesh) * mesh.widths * ((pair.fine1 ** 2) @ weights)
    primitive = PiecewiseLinear(mesh_hat, np.concatenate([[0.0], np.cumsum(increments)]))

    y1 = pair.Y1.values
    atoms = []
    for a, c in r.atoms:
        node = mesh.find_node(a)
        atoms.append((float(tau.tau.values[node]), float(y1[node] ** 2 * c)))
    return p_hat, GeneralizedFunction(primitive, tuple(atoms)), mesh_hat


def transformed_bc(pair: FundamentalPair, omega1: float, kind: BoundaryKind) -> BoundarySpec:
    """
    Boundary condition of the transformed pencil.

    Dirichlet-Dirichlet and Neumann-Dirichlet are unchanged; Neumann-Neumann
    becomes Robin on the right with C = Y2(1)/Y1(1) + omega_1 > 0.
    """
    if kind not in SUPPORTED_KINDS:
        raise PreconditionError(f"Kind {kind.value} has no transformed condition", kind=kind.value)
    if kind is not BoundaryKind.NEUMANN_NEUMANN:
        return BoundarySpec.from_kind(kind)
    C = float(pair.Y2.values[-1] / pair.Y1.values[-1] + omega1)
    if not C > 0.0:
        raise TransformError("Transformed Robin constant is not positive", C=C, xi=pair.xi)
    return BoundarySpec.robin_right(C)


def apply_S(y: PiecewiseLinear, pair: FundamentalPair, tau: TauMap) -> PiecewiseLinear:
    """S y: nodal values of y / Y1 placed at the nodes tau(x_i)."""
    if not y.mesh.same_as(pair.mesh):
        raise PreconditionError("y and the fundamental pair live on different meshes")
    return PiecewiseLinear(tau.mesh_hat, y.values / pair.Y1.values)


def dirichlet_form_constant(pair: FundamentalPair) -> float:
    """
    (Z2(0) + C) / Z1(0) for the Dirichlet construction.

    Equal to Y2(0)/Y1(0), which the normalization leaves unchanged.
    """
    if pair.kind is not BoundaryKind.DIRICHLET_DIRICHLET:
        raise PreconditionError("Only defined for the Dirichlet-Dirichlet construction",
                                kind=pair.kind.value)
    return float(pair.Y2.values[0] / pair.Y1.values[0])


class TransformService:
    """Runs the potential-elimination pipeline on one problem."""

    def __init__(self, problem: SturmLiouvilleProblem, n_cells: int = DEFAULT_CELLS,
                 C: float = DEFAULT_DIRICHLET_C, substeps: int = SUBSTEPS):
        """
        Initialize the transform service.

        Args:
            problem: Problem in any diagonal boundary condition
            n_cells: Uniform cells before breakpoints are merged in
            C: Free constant of the Dirichlet construction
            substeps: RK4 steps per cell
        """
        self.problem = problem
        self.n_cells = n_cells
        self.C = C
        self.substeps = substeps

    def working_problem(self) -> Tuple[SturmLiouvilleProblem, bool]:
        """Canonical problem, reflected when its kind is Dirichlet-Neumann."""
        problem = self.problem.canonical()
        if problem.bc.kind is BoundaryKind.DIRICHLET_NEUMANN:
            logger.info("Reflecting t -> 1 - t to reach the Neumann-Dirichlet kind")
            return reflect(problem), True
        return problem, False

    def run(self) -> TransformResult:
        """
        Canonicalize, find xi, build Y and tau, and assemble the transformed pencil.

        Returns:
            TransformResult; the transformed pencil is in mu = lambda - xi
        """
        problem, reflected = self.working_problem()
        kind = problem.bc.kind
        logger.info("=== Transforming %s problem (%d cells) ===", kind.value, self.n_cells)

        mesh = problem.mesh(self.n_cells)
        pencil = assemble(problem.p, problem.q, problem.r, problem.bc, mesh)
        xi = EigenService(pencil).find_shift()
        logger.info("Positivity shift xi = %.12g", xi)

        omega = shifted_primitive(problem.q, problem.r, xi, mesh)
        pair = solve_fundamental(problem.p, omega, kind, self.C, self.substeps)
        residual, robin = verify_identity(pair, problem)
        tau = build_tau(pair, mesh)
        p_hat, r_hat, mesh_hat = pushforward(problem.p, problem.r, pair, tau, mesh)
        bc_hat = transformed_bc(pair, omega.omega1, kind)

        transformed = SturmLiouvilleProblem(p_hat, GeneralizedFunction.zero(), r_hat, bc_hat)
        transformed_pencil = assemble(p_hat, transformed.q, r_hat, bc_hat, mesh_hat)
        logger.info("Transformed boundary condition: %s", bc_hat.describe())
        return TransformResult(problem, pencil, reflected, xi, pair, tau, residual, robin,
                               transformed, transformed_pencil)

    @staticmethod
    def spectral_invariance(result: TransformResult, count: int) -> Dict:
        """
        Compare the lowest eigenvalues of both pencils (transformed ones shifted back by xi).

        Returns:
            Dictionary with both spectra, relative deltas and their maximum
        """
        original = EigenService(result.pencil).eigenvalues(count)
        shifted = [mu + result.xi
                   for mu in EigenService(result.transformed_pencil).eigenvalues(count)]
        deltas = [abs(b - a) / max(1.0, abs(a)) for a, b in zip(original, shifted)]
        return {
            'original': original,
            'transformed': shifted,
            'relative_deltas': deltas,
            'max_relative_delta': max(deltas),
        }

    @staticmethod
    def eigenfunction_agreement(result: TransformResult, count: int) -> List[float]:
        """
        Sup-norm distance between S y_n and the transformed eigenfunctions, up to sign.
        """
        pairs = EigenService(result.pencil).eigenpairs(count)
        hat_pairs = EigenService(result.transformed_pencil).eigenpairs(count)
        distances = []
        for pair, hat in zip(pairs, hat_pairs):
            mapped = apply_S(pair.vector, result.pair, result.tau).values
            target = hat.vector.values
            sign = 1.0 if mapped @ target >= 0.0 else -1.0
            distances.append(float(np.max(np.abs(sign * mapped - target))))
        return distances


def transform(problem: SturmLiouvilleProblem, n_cells: int = DEFAULT_CELLS) -> TransformResult:
    """Run the potential-elimination pipeline with default settings."""
    return TransformService(problem, n_cells).run()
