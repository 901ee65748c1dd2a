"""Shared problem builders and fixtures for the test suite."""
import numpy as np
import pytest

from services.assembly_service import (
    BoundaryKind, BoundarySpec, SturmLiouvilleProblem, assemble_problem
)
from services.coefficient_service import GeneralizedFunction
from services.eigen_service import EigenService
from utils.mesh_utils import Mesh, PiecewiseConstant, PiecewiseLinear

DD = BoundaryKind.DIRICHLET_DIRICHLET
ND = BoundaryKind.NEUMANN_DIRICHLET
NN = BoundaryKind.NEUMANN_NEUMANN


def unit_p() -> PiecewiseConstant:
    return PiecewiseConstant(Mesh([0.0, 1.0]), [1.0])


def constant_problem(kind: BoundaryKind = DD, q: GeneralizedFunction = None,
                     r: GeneralizedFunction = None) -> SturmLiouvilleProblem:
    """p = 1, q = 0 and r = Lebesgue unless given."""
    return SturmLiouvilleProblem(
        unit_p(),
        GeneralizedFunction.zero() if q is None else q,
        GeneralizedFunction.lebesgue() if r is None else r,
        BoundarySpec.from_kind(kind),
    )


def random_problem(seed: int, kind: BoundaryKind) -> SturmLiouvilleProblem:
    """
    Seeded instance: p in [0.5, 2] on 8 layers, q with a signed L2 density and
    up to three signed atoms, r a positive density with up to two atoms.
    """
    rng = np.random.default_rng(seed)
    p = PiecewiseConstant(Mesh(np.linspace(0.0, 1.0, 9)), rng.uniform(0.5, 2.0, 8))

    coarse = Mesh(np.linspace(0.0, 1.0, 5))
    locations = np.arange(5, 96) / 100.0
    q_sites = rng.choice(locations, size=rng.integers(0, 4), replace=False)
    q = GeneralizedFunction.from_density(
        coarse, rng.uniform(-3.0, 3.0, 4),
        [(float(a), float(rng.uniform(-5.0, 5.0))) for a in q_sites]
    )
    r_sites = rng.choice(locations, size=rng.integers(0, 3), replace=False)
    r = GeneralizedFunction.from_density(
        coarse, rng.uniform(0.5, 2.0, 4),
        [(float(a), float(rng.uniform(0.1, 2.0))) for a in r_sites]
    )
    return SturmLiouvilleProblem(p, q, r, BoundarySpec.from_kind(kind))


def nodal(mesh: Mesh, fn) -> PiecewiseLinear:
    return PiecewiseLinear(mesh, fn(mesh.nodes))


@pytest.fixture(scope='session')
def dirichlet_pairs():
    """Eight eigenpairs of -y'' = lambda y, y(0) = y(1) = 0, on 1000 cells."""
    pencil = assemble_problem(constant_problem(), 1000)
    return pencil, EigenService(pencil).eigenpairs(8)
