"""Distributional coefficients: L2 primitive plus point atoms."""
import logging
from dataclasses import dataclass, field
from typing import Iterable, List, Tuple

import numpy as np

from utils.constants import NODE_TOLERANCE
from utils.errors import PreconditionError
from utils.mesh_utils import Mesh, PiecewiseLinear, union_mesh

logger = logging.getLogger(__name__)

Atom = Tuple[float, float]


@dataclass(frozen=True, eq=False)
class GeneralizedFunction:
    """
    The distribution f = W' + sum_j c_j delta_{a_j}.

    The primitive W is piecewise linear with W(0) = 0, so the absolutely
    continuous part W' is constant on each cell of the primitive's mesh.
    """

    primitive: PiecewiseLinear
    atoms: Tuple[Atom, ...] = field(default=())

    def __post_init__(self):
        if self.primitive.values[0] != 0.0:
            raise PreconditionError("A primitive must vanish at 0",
                                    value=self.primitive.values[0])
        atoms = tuple(sorted((float(a), float(c)) for a, c in self.atoms))
        for a, _ in atoms:
            if a < 0.0 or a > 1.0:
                raise PreconditionError(f"Atom at {a!r} lies outside [0,1]", location=a)
        for (a, _), (b, _) in zip(atoms, atoms[1:]):
            if b - a <= NODE_TOLERANCE:
                raise PreconditionError(f"Duplicate atom location {a!r}", location=a)
        object.__setattr__(self, 'atoms', atoms)

    @classmethod
    def zero(cls) -> 'GeneralizedFunction':
        return cls(PiecewiseLinear(Mesh(np.array([0.0, 1.0])), np.zeros(2)))

    @classmethod
    def lebesgue(cls, atoms: Iterable[Atom] = ()) -> 'GeneralizedFunction':
        """Lebesgue measure (W(t) = t), optionally with atoms."""
        return cls(PiecewiseLinear(Mesh(np.array([0.0, 1.0])), np.array([0.0, 1.0])),
                   tuple(atoms))

    @classmethod
    def from_atoms(cls, atoms: Iterable[Atom]) -> 'GeneralizedFunction':
        return cls(cls.zero().primitive, tuple(atoms))

    @classmethod
    def from_density(cls, mesh: Mesh, density: np.ndarray,
                     atoms: Iterable[Atom] = ()) -> 'GeneralizedFunction':
        """Primitive of a cell-wise constant density."""
        cumulative = np.concatenate([[0.0], np.cumsum(np.asarray(density) * mesh.widths)])
        return cls(PiecewiseLinear(mesh, cumulative), tuple(atoms))

    @property
    def atom_locations(self) -> List[float]:
        return [a for a, _ in self.atoms]

    def breakpoints(self) -> List[float]:
        """Nodes a mesh must contain for exact assembly."""
        return sorted(set(self.primitive.mesh.nodes.tolist()) | set(self.atom_locations))

    def on_mesh(self, mesh: Mesh) -> 'GeneralizedFunction':
        """Same distribution with the primitive stored on `mesh`."""
        if not mesh.contains_nodes(self.atom_locations):
            raise PreconditionError("Atom locations must be mesh nodes",
                                    atoms=self.atom_locations)
        return GeneralizedFunction(self.primitive.on_mesh(mesh), self.atoms)

    def density(self, mesh: Mesh) -> np.ndarray:
        """Cell values of W' on `mesh`."""
        return self.on_mesh(mesh).primitive.slopes().values

    def node_masses(self, mesh: Mesh) -> np.ndarray:
        """Atom masses collected onto the nodes of `mesh`."""
        masses = np.zeros(mesh.nodes.size)
        for a, c in self.atoms:
            masses[mesh.find_node(a)] += c
        return masses

    def total_mass(self) -> float:
        return float(self.primitive.values[-1] + sum(c for _, c in self.atoms))

    def is_nonnegative(self) -> bool:
        """W nondecreasing and every atom mass nonnegative."""
        return bool(np.all(np.diff(self.primitive.values) >= 0.0)
                    and all(c >= 0.0 for _, c in self.atoms))

    def combined(self, other: 'GeneralizedFunction', scale: float = 1.0) -> 'GeneralizedFunction':
        """self + scale * other on the union of both meshes."""
        mesh = union_mesh(self.primitive.mesh, other.primitive.mesh)
        nodes = mesh.nodes
        values = (np.interp(nodes, self.primitive.mesh.nodes, self.primitive.values)
                  + scale * np.interp(nodes, other.primitive.mesh.nodes, other.primitive.values))
        masses = {}
        for a, c in self.atoms:
            masses[a] = masses.get(a, 0.0) + c
        for a, c in other.atoms:
            key = next((b for b in masses if abs(b - a) <= NODE_TOLERANCE), a)
            masses[key] = masses.get(key, 0.0) + scale * c
        return GeneralizedFunction(PiecewiseLinear(mesh, values), tuple(masses.items()))

    def with_atoms(self, extra: Iterable[Atom]) -> 'GeneralizedFunction':
        return self.combined(GeneralizedFunction.from_atoms(extra))

    def reflected(self) -> 'GeneralizedFunction':
        """Image under t -> 1 - t, re-anchored so the primitive vanishes at 0."""
        mesh = self.primitive.mesh.reflected()
        values = self.primitive.values[-1] - self.primitive.values[::-1]
        values[0] = 0.0
        return GeneralizedFunction(PiecewiseLinear(mesh, values),
                                   tuple((1.0 - a, c) for a, c in self.atoms))


@dataclass(frozen=True, eq=False)
class ShiftedPrimitive:
    """
    The pair (omega, omega_1) representing q - xi*r by integration by parts.

    omega is linear inside each cell and may jump at nodes carrying atoms,
    so it is stored by its left and right traces on every cell.
    """

    mesh: Mesh
    cell_left: np.ndarray
    cell_right: np.ndarray
    omega1: float
    xi: float

    @property
    def omega(self) -> PiecewiseLinear:
        """Nodal values of omega, left-continuous at interior nodes."""
        values = np.concatenate([[self.cell_left[0]], self.cell_right])
        return PiecewiseLinear(self.mesh, values)

    @property
    def jumps(self) -> np.ndarray:
        """Jump of omega at each interior node."""
        return self.cell_left[1:] - self.cell_right[:-1]

    def at(self, cell: int, local: np.ndarray) -> np.ndarray:
        """omega inside `cell` at local coordinates in [0,1]."""
        return self.cell_left[cell] + (self.cell_right[cell] - self.cell_left[cell]) * local


def shifted_primitive(q: GeneralizedFunction, r: GeneralizedFunction, xi: float,
                      mesh: Mesh) -> ShiftedPrimitive:
    """
    Build omega and omega_1 with
    int (q - xi r) y dx = -int omega y' dx + omega_1 y(1) for every y in W_2^1.

    Args:
        q: Potential
        r: Weight
        xi: Shift
        mesh: Mesh containing all breakpoints of q and r

    Returns:
        ShiftedPrimitive on `mesh`
    """
    q_mesh = q.on_mesh(mesh)
    r_mesh = r.on_mesh(mesh)
    smooth = q_mesh.primitive.values - xi * r_mesh.primitive.values
    masses = q_mesh.node_masses(mesh) - xi * r_mesh.node_masses(mesh)
    # atoms at nodes 0..i are to the left of the interior of cell i
    accumulated = np.cumsum(masses)

    cell_left = smooth[:-1] + accumulated[:-1]
    cell_right = smooth[1:] + accumulated[:-1]
    omega1 = float(smooth[-1] + accumulated[-1])
    return ShiftedPrimitive(mesh, cell_left, cell_right, omega1, float(xi))


def validate_weight(r: GeneralizedFunction, mesh: Mesh) -> bool:
    """
    Per-cell support test: every cell carries positive r-measure.

    A cell passes if W_r strictly increases across it or one of its two
    end nodes holds an atom of positive mass.
    """
    r_mesh = r.on_mesh(mesh)
    increases = np.diff(r_mesh.primitive.values) > 0.0
    positive_atom = r_mesh.node_masses(mesh) > 0.0
    covered = increases | positive_atom[:-1] | positive_atom[1:]
    if not np.all(covered):
        logger.debug("Weight carries no measure on %d cells", int(np.sum(~covered)))
    return bool(np.all(covered))


def identity_sides(omega: ShiftedPrimitive, q: GeneralizedFunction, r: GeneralizedFunction,
                   y: PiecewiseLinear) -> Tuple[float, float]:
    """
    Both sides of the integration-by-parts identity for a nodal test function.

    The left side integrates (q - xi r) y directly (density plus atoms), the
    right side uses omega; they are independent computations.
    """
    mesh = omega.mesh
    y = y.on_mesh(mesh) if not y.mesh.same_as(mesh) else y
    h = mesh.widths
    density = q.density(mesh) - omega.xi * r.density(mesh)
    masses = q.node_masses(mesh) - omega.xi * r.node_masses(mesh)
    lhs = float(np.sum(density * h * 0.5 * (y.values[:-1] + y.values[1:]))
                + np.sum(masses * y.values))

    slopes = y.slopes().values
    rhs = float(-np.sum(slopes * h * 0.5 * (omega.cell_left + omega.cell_right))
                + omega.omega1 * y.values[-1])
    return lhs, rhs
