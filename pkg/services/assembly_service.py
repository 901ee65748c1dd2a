"""Boundary conditions and finite-element assembly of the pencil's quadratic form."""
import cmath
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np

from services.coefficient_service import Atom, GeneralizedFunction, shifted_primitive
from utils.errors import AssemblyError, DomainError, PreconditionError
from utils.mesh_utils import (
    Mesh, PiecewiseConstant, PiecewiseLinear, build_mesh, linear_product_integral
)

logger = logging.getLogger(__name__)

UNIT_TOLERANCE = 1e-12
COT_ROUNDOFF = 1e-14


class BoundaryKind(Enum):
    """The four canonical conditions plus Neumann-left / Robin-right."""

    DIRICHLET_DIRICHLET = 'dirichlet_dirichlet'
    NEUMANN_DIRICHLET = 'neumann_dirichlet'
    DIRICHLET_NEUMANN = 'dirichlet_neumann'
    NEUMANN_NEUMANN = 'neumann_neumann'
    ROBIN_RIGHT = 'robin_right'

    @property
    def dirichlet_left(self) -> bool:
        return self in (BoundaryKind.DIRICHLET_DIRICHLET, BoundaryKind.DIRICHLET_NEUMANN)

    @property
    def dirichlet_right(self) -> bool:
        return self in (BoundaryKind.DIRICHLET_DIRICHLET, BoundaryKind.NEUMANN_DIRICHLET)

    @classmethod
    def from_pattern(cls, dirichlet_left: bool, dirichlet_right: bool) -> 'BoundaryKind':
        return {
            (True, True): cls.DIRICHLET_DIRICHLET,
            (False, True): cls.NEUMANN_DIRICHLET,
            (True, False): cls.DIRICHLET_NEUMANN,
            (False, False): cls.NEUMANN_NEUMANN,
        }[(dirichlet_left, dirichlet_right)]

    def reflected(self) -> 'BoundaryKind':
        swap = {
            BoundaryKind.NEUMANN_DIRICHLET: BoundaryKind.DIRICHLET_NEUMANN,
            BoundaryKind.DIRICHLET_NEUMANN: BoundaryKind.NEUMANN_DIRICHLET,
        }
        return swap.get(self, self)


def _is_one(u: complex) -> bool:
    return abs(u - 1.0) <= UNIT_TOLERANCE


def boundary_matrix(U: Tuple[complex, complex]) -> Tuple[float, float]:
    """
    Diagonal of V from the diagonal of U.

    V_kk = -cot(arg(U_kk) / 2) for U_kk != 1 and 0 for U_kk = 1, with arg
    taken in (-pi, pi].

    Args:
        U: Pair of unit-modulus complex numbers

    Returns:
        (V_11, V_22)
    """
    values = []
    for u in U:
        u = complex(u)
        if abs(abs(u) - 1.0) > UNIT_TOLERANCE:
            raise DomainError(f"Boundary entry {u!r} is not unimodular", entry=abs(u))
        if _is_one(u):
            values.append(0.0)
            continue
        half = cmath.phase(u) / 2.0
        v = -math.cos(half) / math.sin(half)
        values.append(0.0 if abs(v) < COT_ROUNDOFF else v)
    return values[0], values[1]


@dataclass(frozen=True)
class BoundarySpec:
    """Diagonal unitary U, the derived V, and the resulting boundary kind."""

    U: Tuple[complex, complex]
    V: Tuple[float, float]
    kind: BoundaryKind

    @classmethod
    def from_unitary(cls, U: Tuple[complex, complex]) -> 'BoundarySpec':
        U = (complex(U[0]), complex(U[1]))
        V = boundary_matrix(U)
        kind = BoundaryKind.from_pattern(_is_one(U[0]), _is_one(U[1]))
        if kind is BoundaryKind.NEUMANN_NEUMANN and V[0] == 0.0 and V[1] > 0.0:
            kind = BoundaryKind.ROBIN_RIGHT
        return cls(U, V, kind)

    @classmethod
    def from_kind(cls, kind: BoundaryKind) -> 'BoundarySpec':
        """Canonical condition: U_kk = 1 at Dirichlet ends, -1 at Neumann ends."""
        if kind is BoundaryKind.ROBIN_RIGHT:
            raise PreconditionError("Use BoundarySpec.robin_right(C) for Robin conditions")
        U = (1.0 + 0j if kind.dirichlet_left else -1.0 + 0j,
             1.0 + 0j if kind.dirichlet_right else -1.0 + 0j)
        return cls(U, (0.0, 0.0), kind)

    @classmethod
    def robin_right(cls, C: float) -> 'BoundarySpec':
        """y[1](0) = y[1](1) + C y(1) = 0 with C > 0."""
        if not C > 0.0:
            raise PreconditionError(f"Robin constant must be positive, got {C!r}", C=C)
        # -cot(theta/2) = C
        theta = 2.0 * math.atan2(1.0, -C) - 2.0 * math.pi
        return cls((-1.0 + 0j, cmath.exp(1j * theta)), (0.0, float(C)), BoundaryKind.ROBIN_RIGHT)

    @property
    def C(self) -> Optional[float]:
        return self.V[1] if self.kind is BoundaryKind.ROBIN_RIGHT else None

    def dof_range(self, n_nodes: int) -> Tuple[int, int]:
        lo = 1 if self.kind.dirichlet_left else 0
        hi = n_nodes - 1 if self.kind.dirichlet_right else n_nodes
        return lo, hi

    def describe(self) -> dict:
        return {'kind': self.kind.value, 'V': list(self.V), 'C': self.C,
                'U_angles': [cmath.phase(u) / math.pi for u in self.U]}


def canonicalize_bc(U: Tuple[complex, complex]) -> Tuple[BoundarySpec, List[Atom]]:
    """
    Rewrite a diagonal U as one of the four canonical kinds.

    Non-Dirichlet ends become natural (Neumann) ends and their V_kk moves
    into the potential as an atom at that end.

    Returns:
        (canonical BoundarySpec, atoms to add to q)
    """
    spec = BoundarySpec.from_unitary(U)
    dirichlet = (_is_one(spec.U[0]), _is_one(spec.U[1]))
    atoms = []
    for end, (is_dirichlet, v) in enumerate(zip(dirichlet, spec.V)):
        if not is_dirichlet and v != 0.0:
            atoms.append((float(end), v))
    return BoundarySpec.from_kind(BoundaryKind.from_pattern(*dirichlet)), atoms


@dataclass(frozen=True)
class SymTridiagonal:
    """Symmetric tridiagonal matrix stored by its diagonal and off-diagonal."""

    diag: np.ndarray
    off: np.ndarray

    @property
    def size(self) -> int:
        return self.diag.size

    def __add__(self, other: 'SymTridiagonal') -> 'SymTridiagonal':
        return SymTridiagonal(self.diag + other.diag, self.off + other.off)

    def __sub__(self, other: 'SymTridiagonal') -> 'SymTridiagonal':
        return SymTridiagonal(self.diag - other.diag, self.off - other.off)

    def __rmul__(self, factor: float) -> 'SymTridiagonal':
        return SymTridiagonal(factor * self.diag, factor * self.off)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        y = self.diag * x
        y[:-1] += self.off * x[1:]
        y[1:] += self.off * x[:-1]
        return y

    def quadratic(self, x: np.ndarray) -> float:
        return float(x @ self.matvec(x))

    def restricted(self, lo: int, hi: int) -> 'SymTridiagonal':
        """Principal submatrix on the contiguous index range [lo, hi)."""
        return SymTridiagonal(self.diag[lo:hi].copy(), self.off[lo:hi - 1].copy())

    def to_dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.off, 1) + np.diag(self.off, -1)

    def to_banded_upper(self) -> np.ndarray:
        """Upper banded storage for scipy.linalg.cholesky_banded / solveh_banded."""
        ab = np.zeros((2, self.size))
        ab[0, 1:] = self.off
        ab[1] = self.diag
        return ab

    def to_banded(self) -> np.ndarray:
        """General (1, 1) banded storage for scipy.linalg.solve_banded."""
        ab = np.zeros((3, self.size))
        ab[0, 1:] = self.off
        ab[1] = self.diag
        ab[2, :-1] = self.off
        return ab


@dataclass(frozen=True, eq=False)
class SturmLiouvilleProblem:
    """-(p y')' + (q - lambda r) y = 0 with a diagonal boundary condition."""

    p: PiecewiseConstant
    q: GeneralizedFunction
    r: GeneralizedFunction
    bc: BoundarySpec

    def breakpoints(self) -> List[float]:
        points = set(self.p.mesh.nodes.tolist())
        points.update(self.q.breakpoints())
        points.update(self.r.breakpoints())
        return sorted(points)

    def mesh(self, n_cells: int) -> Mesh:
        return build_mesh(n_cells, self.breakpoints())

    @property
    def potential_free(self) -> bool:
        return (not np.any(self.q.primitive.values)
                and all(c == 0.0 for _, c in self.q.atoms))

    def canonical(self) -> 'SturmLiouvilleProblem':
        """Same pencil with V folded into q and a canonical boundary kind."""
        if self.bc.V == (0.0, 0.0):
            return self
        bc, atoms = canonicalize_bc(self.bc.U)
        return SturmLiouvilleProblem(self.p, self.q.with_atoms(atoms), self.r, bc)


@dataclass(frozen=True, eq=False)
class DiscretePencil:
    """A(lambda) = A_p + B_q - lambda * M_r restricted to the unknown nodes."""

    A_p: SymTridiagonal
    B_q: SymTridiagonal
    M_r: SymTridiagonal
    dof_map: np.ndarray
    bc: BoundarySpec
    mesh: Mesh
    potential_free: bool = field(default=False)

    @property
    def n_dofs(self) -> int:
        return self.dof_map.size

    @property
    def stiffness(self) -> SymTridiagonal:
        return self.A_p + self.B_q

    def at(self, lam: float) -> SymTridiagonal:
        return self.A_p + self.B_q - lam * self.M_r

    def restrict(self, y: PiecewiseLinear) -> np.ndarray:
        return np.asarray(y.values)[self.dof_map]

    def extend(self, u: np.ndarray) -> PiecewiseLinear:
        """Zero-extend a dof vector to all mesh nodes."""
        values = np.zeros(self.mesh.nodes.size)
        values[self.dof_map] = u
        return PiecewiseLinear(self.mesh, values)


def stiffness_matrix(p: PiecewiseConstant, mesh: Mesh) -> SymTridiagonal:
    """Full-node matrix of int p u' v'."""
    coeff = p.on_mesh(mesh).values / mesh.widths
    diag = np.zeros(mesh.nodes.size)
    diag[:-1] += coeff
    diag[1:] += coeff
    return SymTridiagonal(diag, -coeff)


def potential_matrix(q: GeneralizedFunction, mesh: Mesh) -> SymTridiagonal:
    """
    Full-node matrix of int q u v assembled through the omega representation.

    int q phi_i phi_j = -int omega (phi_i phi_j)' + omega_1 phi_i(1) phi_j(1),
    with omega linear inside each cell.
    """
    omega = shifted_primitive(q, GeneralizedFunction.zero(), 0.0, mesh)
    left, right = omega.cell_left, omega.cell_right
    diag = np.zeros(mesh.nodes.size)
    diag[:-1] += (2.0 * left + right) / 3.0
    diag[1:] -= (left + 2.0 * right) / 3.0
    diag[-1] += omega.omega1
    return SymTridiagonal(diag, (right - left) / 6.0)


def measure_matrix(f: GeneralizedFunction, mesh: Mesh) -> SymTridiagonal:
    """Full-node matrix of int f u v from the cell densities and point atoms."""
    h = mesh.widths
    density = f.density(mesh)
    diag = np.zeros(mesh.nodes.size)
    diag[:-1] += density * h / 3.0
    diag[1:] += density * h / 3.0
    diag += f.node_masses(mesh)
    return SymTridiagonal(diag, density * h / 6.0)


def assemble(p: PiecewiseConstant, q: GeneralizedFunction, r: GeneralizedFunction,
             bc: BoundarySpec, mesh: Mesh) -> DiscretePencil:
    """
    Assemble the pencil on `mesh`.

    Args:
        p: Uniformly positive cell function
        q: Potential
        r: Weight
        bc: Boundary condition; Dirichlet nodes are eliminated
        mesh: Mesh containing every breakpoint of p, q and r

    Returns:
        DiscretePencil on the unknown nodes
    """
    if p.minimum() <= 0.0:
        raise AssemblyError("p must be uniformly positive", p_min=p.minimum())
    try:
        A_p = stiffness_matrix(p, mesh)
        B_q = potential_matrix(q, mesh)
        M_r = measure_matrix(r, mesh)
    except PreconditionError as exc:
        raise AssemblyError(f"Coefficient breakpoints are not mesh nodes: {exc}") from exc

    if not bc.kind.dirichlet_left:
        B_q.diag[0] += bc.V[0]
    if not bc.kind.dirichlet_right:
        B_q.diag[-1] += bc.V[1]

    lo, hi = bc.dof_range(mesh.nodes.size)
    potential_free = (not np.any(q.primitive.values)) and all(c == 0.0 for _, c in q.atoms)
    logger.debug("Assembled pencil: %d cells, %d dofs, kind %s",
                 mesh.n_cells, hi - lo, bc.kind.value)
    return DiscretePencil(A_p.restricted(lo, hi), B_q.restricted(lo, hi), M_r.restricted(lo, hi),
                          np.arange(lo, hi), bc, mesh, potential_free)


def assemble_problem(problem: SturmLiouvilleProblem, n_cells: int) -> DiscretePencil:
    """Assemble a problem on the uniform grid refined by its breakpoints."""
    return assemble(problem.p, problem.q, problem.r, problem.bc, problem.mesh(n_cells))


def quadratic_form(p: PiecewiseConstant, q: GeneralizedFunction, r: GeneralizedFunction,
                   bc: BoundarySpec, y: PiecewiseLinear, lam: float) -> float:
    """
    int p |y'|^2 + int (q - lam r) |y|^2 + <V y^, y^>, by cell quadrature.

    Independent of the assembled matrices; y is taken as given, including
    its values at Dirichlet ends.
    """
    mesh = y.mesh
    h = mesh.widths
    left, right = y.values[:-1], y.values[1:]
    slopes = (right - left) / h
    density = q.density(mesh) - lam * r.density(mesh)
    masses = q.node_masses(mesh) - lam * r.node_masses(mesh)

    total = float(np.sum(p.on_mesh(mesh).values * slopes ** 2 * h))
    total += float(np.sum(density * linear_product_integral(left, right, left, right, h)))
    total += float(np.sum(masses * y.values ** 2))
    if not bc.kind.dirichlet_left:
        total += bc.V[0] * y.values[0] ** 2
    if not bc.kind.dirichlet_right:
        total += bc.V[1] * y.values[-1] ** 2
    return total


def reflect(problem: SturmLiouvilleProblem) -> SturmLiouvilleProblem:
    """
    Change of variable t -> 1 - t.

    Coefficients are mirrored about 1/2 and the boundary ends are swapped,
    so the Dirichlet-Neumann kind becomes Neumann-Dirichlet.
    """
    p = PiecewiseConstant(problem.p.mesh.reflected(), problem.p.values[::-1])
    U = (problem.bc.U[1], problem.bc.U[0])
    if problem.bc.V == (0.0, 0.0):
        bc = BoundarySpec.from_kind(problem.bc.kind.reflected())
    else:
        bc = BoundarySpec.from_unitary(U)
    return SturmLiouvilleProblem(p, problem.q.reflected(), problem.r.reflected(), bc)
