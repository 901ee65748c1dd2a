"""Meshes on [0,1], nodal and cell functions, and exact cell quadrature."""
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from utils.constants import NODE_TOLERANCE
from utils.errors import DomainError, PreconditionError


@dataclass(frozen=True, eq=False)
class Mesh:
    """Partition 0 = x_0 < x_1 < ... < x_M = 1."""

    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise DomainError("A mesh needs at least two nodes")
        if nodes[0] != 0.0 or nodes[-1] != 1.0:
            raise DomainError("Mesh endpoints must be exactly 0 and 1",
                              first=nodes[0], last=nodes[-1])
        if np.any(np.diff(nodes) <= 0.0):
            raise DomainError("Mesh nodes must be strictly increasing")
        nodes.setflags(write=False)
        object.__setattr__(self, 'nodes', nodes)

    @property
    def n_cells(self) -> int:
        return self.nodes.size - 1

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.nodes[:-1] + self.nodes[1:])

    def find_node(self, x: float) -> int:
        """
        Index of the node at x.

        Args:
            x: Location in [0,1]

        Returns:
            Node index

        Raises:
            PreconditionError: if no node lies within NODE_TOLERANCE of x
        """
        i = int(np.argmin(np.abs(self.nodes - x)))
        if abs(self.nodes[i] - x) > NODE_TOLERANCE:
            raise PreconditionError(f"Location {x!r} is not a mesh node", location=x)
        return i

    def contains_nodes(self, points: Iterable[float]) -> bool:
        """True if every point is a node of this mesh."""
        for x in points:
            i = int(np.argmin(np.abs(self.nodes - x)))
            if abs(self.nodes[i] - x) > NODE_TOLERANCE:
                return False
        return True

    def reflected(self) -> 'Mesh':
        """Mesh of the points 1 - x."""
        nodes = 1.0 - self.nodes[::-1]
        nodes[0], nodes[-1] = 0.0, 1.0
        return Mesh(nodes)

    def same_as(self, other: 'Mesh') -> bool:
        return (self.nodes.size == other.nodes.size
                and bool(np.all(np.abs(self.nodes - other.nodes) <= NODE_TOLERANCE)))


@dataclass(frozen=True, eq=False)
class PiecewiseLinear:
    """Continuous function given by its nodal values."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != self.mesh.nodes.shape:
            raise PreconditionError(
                f"Expected {self.mesh.nodes.size} nodal values, got {values.size}")
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)

    def __call__(self, x):
        return evaluate(self, x)

    def slopes(self) -> 'PiecewiseConstant':
        """The derivative, constant on each cell."""
        return PiecewiseConstant(self.mesh, np.diff(self.values) / self.mesh.widths)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def integral(self) -> float:
        """Exact integral over [0,1] (trapezoid rule is exact for linear cells)."""
        return float(np.sum(0.5 * (self.values[:-1] + self.values[1:]) * self.mesh.widths))

    def on_mesh(self, mesh: Mesh) -> 'PiecewiseLinear':
        """
        Re-express on a finer mesh.

        Exact when every node of the current mesh is a node of the target.
        """
        if not mesh.contains_nodes(self.mesh.nodes):
            raise PreconditionError("Target mesh does not contain the breakpoints of f")
        return PiecewiseLinear(mesh, np.interp(mesh.nodes, self.mesh.nodes, self.values))


@dataclass(frozen=True, eq=False)
class PiecewiseConstant:
    """Function constant on each cell."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.mesh.n_cells,):
            raise PreconditionError(
                f"Expected {self.mesh.n_cells} cell values, got {values.size}")
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)

    def on_mesh(self, mesh: Mesh) -> 'PiecewiseConstant':
        """Re-express on a mesh that refines the current one."""
        if not mesh.contains_nodes(self.mesh.nodes):
            raise PreconditionError("Target mesh does not refine the cells of f")
        cells = np.searchsorted(self.mesh.nodes, mesh.midpoints, side='right') - 1
        return PiecewiseConstant(mesh, self.values[cells])

    def minimum(self) -> float:
        return float(np.min(self.values))

    def integral(self) -> float:
        return float(np.sum(self.values * self.mesh.widths))


def build_mesh(n_cells: int, required_nodes: Iterable[float] = ()) -> Mesh:
    """
    Uniform grid {k/n_cells} merged with the required nodes.

    Required nodes closer than NODE_TOLERANCE to an existing node are merged
    into it; grid nodes win over required nodes.

    Args:
        n_cells: Number of uniform cells, at least 1
        required_nodes: Locations in [0,1] that must be nodes

    Returns:
        Mesh containing the grid and the required nodes
    """
    if int(n_cells) != n_cells or n_cells < 1:
        raise DomainError(f"n_cells must be a positive integer, got {n_cells!r}")
    nodes = list(np.arange(n_cells + 1) / n_cells)
    extra = []
    for x in sorted(float(x) for x in required_nodes):
        if x < 0.0 or x > 1.0:
            raise DomainError(f"Required node {x!r} lies outside [0,1]", location=x)
        extra.append(x)

    grid = np.asarray(nodes)
    merged = []
    for x in extra:
        if np.min(np.abs(grid - x)) <= NODE_TOLERANCE:
            continue
        if merged and x - merged[-1] <= NODE_TOLERANCE:
            continue
        merged.append(x)

    return Mesh(np.sort(np.concatenate([grid, np.asarray(merged, dtype=float)])))


def evaluate(f: PiecewiseLinear, x):
    """
    Linear interpolation between bracketing nodes.

    Args:
        f: Nodal function
        x: Point or array of points in [0,1]

    Returns:
        f(x), exact at nodes
    """
    xs = np.asarray(x, dtype=float)
    if np.any(xs < 0.0) or np.any(xs > 1.0):
        raise DomainError(f"Evaluation point outside [0,1]: {x!r}")
    result = np.interp(xs, f.mesh.nodes, f.values)
    return float(result) if result.ndim == 0 else result


def linear_product_integral(f_left, f_right, g_left, g_right, width):
    """
    Exact integral over a cell of the product of two linear functions.

    All arguments may be arrays (one entry per cell).
    """
    return width / 6.0 * (2.0 * f_left * g_left + f_left * g_right
                          + f_right * g_left + 2.0 * f_right * g_right)


def simpson_weights(substeps: int) -> np.ndarray:
    """Composite Simpson weights on [0,1] with an even number of substeps."""
    if substeps < 2 or substeps % 2:
        raise PreconditionError(f"Simpson needs an even number of substeps, got {substeps}")
    weights = np.ones(substeps + 1)
    weights[1:-1:2] = 4.0
    weights[2:-1:2] = 2.0
    return weights / (3.0 * substeps)


def union_mesh(*meshes: Mesh) -> Mesh:
    """Smallest mesh containing the nodes of all arguments (merged within tolerance)."""
    nodes = np.sort(np.concatenate([m.nodes for m in meshes]))
    kept = [nodes[0]]
    for x in nodes[1:]:
        if x - kept[-1] > NODE_TOLERANCE:
            kept.append(x)
    kept[-1] = 1.0
    return Mesh(np.asarray(kept))
