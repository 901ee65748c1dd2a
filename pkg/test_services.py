"""
Tests for coefficients, pencil assembly and the eigensolver.
Run with: pytest test_services.py
"""
import cmath
import math

import numpy as np
import pytest
from scipy import linalg

from conftest import DD, ND, NN, constant_problem, nodal, random_problem, unit_p
from services.assembly_service import (
    BoundaryKind, BoundarySpec, SturmLiouvilleProblem, SymTridiagonal, assemble, assemble_problem,
    boundary_matrix, canonicalize_bc, measure_matrix, potential_matrix, quadratic_form, reflect
)
from services.coefficient_service import (
    GeneralizedFunction, identity_sides, shifted_primitive, validate_weight
)
from services.eigen_service import EigenService, tridiagonal_inertia
from utils.errors import AssemblyError, DomainError, PreconditionError, WeightError
from utils.mesh_utils import Mesh, PiecewiseConstant, PiecewiseLinear, build_mesh


def _random_q(seed):
    rng = np.random.default_rng(seed)
    return GeneralizedFunction.from_density(
        Mesh(np.linspace(0.0, 1.0, 6)), rng.uniform(-4.0, 4.0, 5),
        [(0.3, float(rng.uniform(-2.0, 2.0))), (0.75, float(rng.uniform(-2.0, 2.0)))]
    )


# ---------------------------------------------------------------- coefficients

def test_shifted_primitive_of_zero_is_zero():
    omega = shifted_primitive(GeneralizedFunction.zero(), GeneralizedFunction.lebesgue(), 0.0,
                              build_mesh(8))
    assert not np.any(omega.cell_left) and not np.any(omega.cell_right)
    assert omega.omega1 == 0.0


def test_shifted_primitive_of_delta_is_left_continuous_step():
    mesh = build_mesh(4, [0.5])
    omega = shifted_primitive(GeneralizedFunction.from_atoms([(0.5, 1.0)]),
                              GeneralizedFunction.lebesgue(), 0.0, mesh)
    assert omega.omega.values.tolist() == [0.0, 0.0, 0.0, 1.0, 1.0]
    assert omega.cell_left.tolist() == [0.0, 0.0, 1.0, 1.0]
    assert omega.jumps.tolist() == [0.0, 1.0, 0.0]
    assert omega.omega1 == 1.0


def test_shifted_primitive_of_lebesgue_shift():
    mesh = build_mesh(10)
    omega = shifted_primitive(GeneralizedFunction.zero(), GeneralizedFunction.lebesgue(), -1.0,
                              mesh)
    assert np.allclose(omega.omega.values, mesh.nodes)
    assert omega.omega1 == pytest.approx(1.0)


def test_integration_by_parts_identity_holds():
    q = _random_q(1)
    r = GeneralizedFunction.lebesgue([(0.5, 0.7)])
    mesh = build_mesh(40, q.breakpoints() + r.breakpoints())
    rng = np.random.default_rng(2)
    for xi in (0.0, 2.5, -7.0):
        omega = shifted_primitive(q, r, xi, mesh)
        y = PiecewiseLinear(mesh, rng.standard_normal(mesh.nodes.size))
        lhs, rhs = identity_sides(omega, q, r, y)
        assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)


def test_shifted_primitive_is_affine_in_xi():
    q, r = _random_q(3), GeneralizedFunction.lebesgue([(0.5, 0.7)])
    mesh = build_mesh(20, q.breakpoints() + r.breakpoints())
    a, b, mid = (shifted_primitive(q, r, xi, mesh) for xi in (1.0, 3.0, 2.0))
    assert np.allclose(a.cell_left + b.cell_left, 2.0 * mid.cell_left)
    assert a.omega1 + b.omega1 == pytest.approx(2.0 * mid.omega1)


def test_validate_weight():
    coarse = Mesh([0.0, 0.5, 1.0])
    assert validate_weight(GeneralizedFunction.lebesgue(), build_mesh(10))
    assert validate_weight(GeneralizedFunction.from_atoms([(0.5, 1.0)]), coarse)
    assert not validate_weight(GeneralizedFunction.from_atoms([(0.5, 1.0)]), build_mesh(4))
    assert validate_weight(GeneralizedFunction.lebesgue([(0.25, 2.0)]), build_mesh(4))


def test_generalized_function_validation():
    with pytest.raises(PreconditionError):
        GeneralizedFunction(PiecewiseLinear(Mesh([0.0, 1.0]), [1.0, 2.0]))
    with pytest.raises(PreconditionError):
        GeneralizedFunction.from_atoms([(0.5, 1.0), (0.5, 2.0)])
    with pytest.raises(PreconditionError):
        GeneralizedFunction.from_atoms([(1.5, 1.0)])


def test_reflected_twice_is_identity():
    q = _random_q(4)
    back = q.reflected().reflected()
    assert np.allclose(back.primitive.values, q.primitive.values)
    assert [a for a, _ in back.atoms] == pytest.approx([a for a, _ in q.atoms])


# ---------------------------------------------------------------- boundary conditions

def test_boundary_matrix_examples():
    assert boundary_matrix((1, 1)) == (0.0, 0.0)
    assert boundary_matrix((-1, -1)) == (0.0, 0.0)
    v1, v2 = boundary_matrix((1j, 1))
    assert v1 == pytest.approx(-1.0)
    assert v2 == 0.0


def test_boundary_matrix_rejects_non_unimodular():
    with pytest.raises(DomainError):
        boundary_matrix((2.0, 1.0))


def test_canonicalize_examples():
    spec, atoms = canonicalize_bc((1, 1))
    assert spec.kind is DD and atoms == []
    spec, atoms = canonicalize_bc((-1, 1))
    assert spec.kind is ND and atoms == []
    spec, atoms = canonicalize_bc((1, 1j))
    assert spec.kind is BoundaryKind.DIRICHLET_NEUMANN
    assert len(atoms) == 1
    assert atoms[0][0] == 1.0 and atoms[0][1] == pytest.approx(-1.0)


@pytest.mark.parametrize('C', [0.1, 1.0, 2.0, 25.0])
def test_robin_right_reproduces_its_constant(C):
    spec = BoundarySpec.robin_right(C)
    assert spec.kind is BoundaryKind.ROBIN_RIGHT
    assert spec.C == C
    assert boundary_matrix(spec.U)[1] == pytest.approx(C)
    assert BoundarySpec.from_unitary(spec.U).kind is BoundaryKind.ROBIN_RIGHT


def test_robin_right_needs_positive_constant():
    with pytest.raises(PreconditionError):
        BoundarySpec.robin_right(0.0)


def test_canonical_problem_moves_v_into_q():
    problem = SturmLiouvilleProblem(unit_p(), GeneralizedFunction.zero(),
                                    GeneralizedFunction.lebesgue(),
                                    BoundarySpec.from_unitary((-1, cmath.exp(1j * math.pi / 2))))
    canonical = problem.canonical()
    assert canonical.bc.kind is NN
    assert canonical.bc.V == (0.0, 0.0)
    assert canonical.q.atoms[0][0] == 1.0
    assert canonical.q.atoms[0][1] == pytest.approx(-1.0)


# ---------------------------------------------------------------- assembly

def test_stiffness_and_mass_on_uniform_mesh():
    pencil = assemble_problem(constant_problem(), 4)
    h = 0.25
    assert np.allclose(pencil.A_p.diag, 2.0 / h)
    assert np.allclose(pencil.A_p.off, -1.0 / h)
    assert np.allclose(pencil.M_r.diag, 2.0 * h / 3.0)
    assert np.allclose(pencil.M_r.off, h / 6.0)
    assert pencil.n_dofs == 3
    assert not np.any(pencil.B_q.to_dense())


def test_delta_potential_adds_one_diagonal_entry():
    mesh = build_mesh(4, [0.5])
    B = potential_matrix(GeneralizedFunction.from_atoms([(0.5, 3.0)]), mesh).to_dense()
    expected = np.zeros((5, 5))
    expected[2, 2] = 3.0
    assert np.allclose(B, expected)


@pytest.mark.parametrize('seed', [5, 6, 7])
def test_potential_matrix_routes_agree(seed):
    q = _random_q(seed)
    mesh = build_mesh(30, q.breakpoints())
    via_omega = potential_matrix(q, mesh)
    direct = measure_matrix(q, mesh)
    assert np.allclose(via_omega.diag, direct.diag, rtol=1e-12, atol=1e-12)
    assert np.allclose(via_omega.off, direct.off, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize('kind', [DD, ND, NN])
def test_quadratic_form_matches_matrices(kind):
    problem = random_problem(8, kind)
    mesh = problem.mesh(60)
    pencil = assemble(problem.p, problem.q, problem.r, problem.bc, mesh)
    rng = np.random.default_rng(9)
    u = rng.standard_normal(pencil.n_dofs)
    y = pencil.extend(u)
    lam = 3.7
    direct = quadratic_form(problem.p, problem.q, problem.r, problem.bc, y, lam)
    assert pencil.at(lam).quadratic(u) == pytest.approx(direct, rel=1e-10, abs=1e-10)


def test_dirichlet_elimination_commutes_with_assembly():
    full = assemble_problem(constant_problem(NN, q=_random_q(10)), 20)
    reduced = assemble_problem(constant_problem(DD, q=_random_q(10)), 20)
    assert np.allclose(full.stiffness.restricted(1, full.n_dofs - 1).to_dense(),
                       reduced.stiffness.to_dense())


def test_robin_constant_enters_last_diagonal_entry():
    problem = constant_problem()
    neumann = assemble(problem.p, problem.q, problem.r, BoundarySpec.from_kind(NN), build_mesh(5))
    robin = assemble(problem.p, problem.q, problem.r, BoundarySpec.robin_right(2.0), build_mesh(5))
    difference = (robin.stiffness - neumann.stiffness).to_dense()
    expected = np.zeros_like(difference)
    expected[-1, -1] = 2.0
    assert np.allclose(difference, expected)


def test_assembly_rejects_nonpositive_p():
    problem = constant_problem()
    bad_p = PiecewiseConstant(Mesh([0.0, 0.5, 1.0]), [1.0, -1.0])
    with pytest.raises(AssemblyError):
        assemble(bad_p, problem.q, problem.r, problem.bc, build_mesh(4))


def test_assembly_rejects_off_mesh_atoms():
    problem = constant_problem(q=GeneralizedFunction.from_atoms([(0.3, 1.0)]))
    with pytest.raises(AssemblyError):
        assemble(problem.p, problem.q, problem.r, problem.bc, build_mesh(4))


def test_reflect_maps_dn_to_nd():
    problem = SturmLiouvilleProblem(unit_p(), GeneralizedFunction.from_atoms([(0.25, 1.0)]),
                                    GeneralizedFunction.lebesgue(),
                                    BoundarySpec.from_kind(BoundaryKind.DIRICHLET_NEUMANN))
    mirrored = reflect(problem)
    assert mirrored.bc.kind is ND
    assert mirrored.q.atoms[0] == pytest.approx((0.75, 1.0))
    back = reflect(mirrored)
    assert back.bc.kind is BoundaryKind.DIRICHLET_NEUMANN
    assert back.q.atoms[0] == pytest.approx((0.25, 1.0))


def test_reflection_preserves_the_spectrum():
    problem = random_problem(11, BoundaryKind.DIRICHLET_NEUMANN)
    original = EigenService(assemble_problem(problem, 400)).eigenvalues(4)
    mirrored = EigenService(assemble_problem(reflect(problem), 400)).eigenvalues(4)
    assert mirrored == pytest.approx(original, rel=1e-6)


# ---------------------------------------------------------------- eigensolver

def test_inertia_counts_eigenvalues_below():
    service = EigenService(assemble_problem(constant_problem(), 400))
    assert service.inertia(0.0)[0] == 0
    assert service.inertia(50.0)[0] == 2
    neumann = EigenService(assemble_problem(constant_problem(NN), 400))
    assert neumann.inertia(-1.0)[0] == 0
    assert neumann.inertia(0.5)[0] == 1


def test_tridiagonal_inertia_matches_dense_eigenvalues():
    rng = np.random.default_rng(12)
    for _ in range(20):
        n = int(rng.integers(2, 30))
        matrix = SymTridiagonal(rng.standard_normal(n), rng.standard_normal(n - 1))
        eigenvalues = np.linalg.eigvalsh(matrix.to_dense())
        n_minus, n_zero, n_plus = tridiagonal_inertia(matrix)
        assert n_zero == 0
        assert n_minus == int(np.sum(eigenvalues < 0.0))
        assert n_plus == n - n_minus


def test_dirichlet_eigenvalues_are_squares_of_multiples_of_pi():
    values = EigenService(assemble_problem(constant_problem(), 2000)).eigenvalues(5)
    expected = [(n * math.pi) ** 2 for n in range(1, 6)]
    assert values == pytest.approx(expected, rel=1e-3)


def test_eigenvalues_match_dense_generalized_solver():
    pencil = assemble_problem(random_problem(13, ND), 60)
    values = EigenService(pencil).eigenvalues(6)
    dense = linalg.eigh(pencil.stiffness.to_dense(), pencil.M_r.to_dense(), eigvals_only=True)
    assert values == pytest.approx(dense[:6].tolist(), rel=1e-9, abs=1e-9)


def test_delta_potential_keeps_antisymmetric_eigenvalue():
    problem = constant_problem(q=GeneralizedFunction.from_atoms([(0.5, 10.0)]))
    values = EigenService(assemble_problem(problem, 2000)).eigenvalues(2)
    assert values[1] == pytest.approx(4.0 * math.pi ** 2, rel=1e-3)
    assert values[0] > math.pi ** 2


def test_neumann_ground_state_is_constant():
    service = EigenService(assemble_problem(constant_problem(NN), 400))
    pair = service.eigenpairs(1)[0]
    assert abs(pair.lam) <= 1e-8
    assert np.allclose(pair.vector.values, 1.0, atol=1e-6)


def test_single_cell_dirichlet_pencil_has_no_unknowns():
    service = EigenService(assemble_problem(constant_problem(), 1))
    assert service.pencil.n_dofs == 0
    with pytest.raises(PreconditionError):
        service.inertia(0.0)
    with pytest.raises(PreconditionError):
        service.eigenvalues(1)


def test_eigenfunctions_are_normalized_and_signed(dirichlet_pairs):
    pencil, pairs = dirichlet_pairs
    for pair in pairs:
        u = pencil.restrict(pair.vector)
        assert pencil.M_r.quadratic(u) == pytest.approx(1.0)
        first = np.flatnonzero(np.abs(u) > 1e-8 * np.max(np.abs(u)))[0]
        assert u[first] > 0.0
        assert pair.residual <= 1e-10
    expected = np.sqrt(2.0) * np.sin(np.pi * pencil.mesh.nodes)
    assert np.max(np.abs(pairs[0].vector.values - expected)) <= 1e-3


def test_find_shift_makes_pencil_positive_definite():
    service = EigenService(assemble_problem(random_problem(14, NN), 200))
    xi = service.find_shift()
    assert xi == pytest.approx(service.eigenvalues(1)[0] - 1.0)
    n_minus, n_zero, n_plus = service.inertia(xi)
    assert (n_minus, n_zero) == (0, 0)


def test_eigenvalue_count_must_fit_the_dofs():
    service = EigenService(assemble_problem(constant_problem(), 4))
    with pytest.raises(PreconditionError):
        service.eigenvalues(4)
    with pytest.raises(PreconditionError):
        service.eigenvalues(0)


def test_singular_weight_is_rejected():
    problem = constant_problem(r=GeneralizedFunction.from_atoms([(0.5, 1.0)]))
    pencil = assemble(problem.p, problem.q, problem.r, BoundarySpec.from_kind(NN), build_mesh(4))
    with pytest.raises(WeightError):
        EigenService(pencil).eigenvalues(1)
