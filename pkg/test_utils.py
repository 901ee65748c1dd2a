"""Tests for meshes, nodal functions and the sign-counting helpers."""
import json

import numpy as np
import pytest

from conftest import nodal
from utils.errors import ConfigError, ConvergenceError, DomainError, PreconditionError
from utils.mesh_utils import (
    Mesh, PiecewiseConstant, PiecewiseLinear, build_mesh, evaluate, linear_product_integral,
    simpson_weights, union_mesh
)
from utils.sign_utils import (
    interlaces, pseudo_zero_scan, pseudo_zeros, pseudo_zeros_bruteforce, sign_changes,
    vanishes_on_cell, zero_components
)


# ---------------------------------------------------------------- meshes

def test_build_mesh_uniform():
    assert build_mesh(4).nodes.tolist() == [0.0, 0.25, 0.5, 0.75, 1.0]


def test_build_mesh_required_node_already_on_grid():
    assert build_mesh(4, [0.5]).nodes.tolist() == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert build_mesh(3, [1.0 / 3.0]).nodes.size == 4


def test_build_mesh_inserts_required_node():
    mesh = build_mesh(4, [0.3])
    assert mesh.nodes.size == 6
    assert mesh.find_node(0.3) == 2


def test_build_mesh_is_idempotent():
    mesh = build_mesh(10, [0.123, 0.5, 0.987])
    again = build_mesh(10, mesh.nodes)
    assert again.same_as(mesh)


@pytest.mark.parametrize('n_cells, required', [(0, []), (2.5, []), (4, [1.5]), (4, [-0.1])])
def test_build_mesh_rejects_bad_arguments(n_cells, required):
    with pytest.raises(DomainError):
        build_mesh(n_cells, required)


@pytest.mark.parametrize('nodes', [[0.1, 1.0], [0.0, 0.9], [0.0, 0.5, 0.5, 1.0], [0.0]])
def test_mesh_validation(nodes):
    with pytest.raises(DomainError):
        Mesh(nodes)


def test_evaluate_examples():
    unit = Mesh([0.0, 1.0])
    assert evaluate(PiecewiseLinear(unit, [0.0, 1.0]), 0.5) == pytest.approx(0.5)
    assert evaluate(PiecewiseLinear(unit, [2.0, 2.0]), 0.7) == pytest.approx(2.0)
    hat = PiecewiseLinear(Mesh([0.0, 0.5, 1.0]), [0.0, 1.0, 0.0])
    assert evaluate(hat, 0.25) == pytest.approx(0.5)
    with pytest.raises(DomainError):
        evaluate(hat, 1.5)


def test_evaluate_exact_at_nodes():
    mesh = build_mesh(7, [0.31])
    f = nodal(mesh, np.cos)
    assert np.array_equal(evaluate(f, mesh.nodes), f.values)


def test_slopes_telescope():
    rng = np.random.default_rng(3)
    mesh = build_mesh(25, rng.uniform(0.0, 1.0, 5))
    f = PiecewiseLinear(mesh, rng.standard_normal(mesh.nodes.size))
    assert f.slopes().integral() == pytest.approx(f.values[-1] - f.values[0], abs=1e-12)


def test_piecewise_constant_refinement():
    coarse = PiecewiseConstant(Mesh([0.0, 0.5, 1.0]), [1.0, 2.0])
    fine = coarse.on_mesh(build_mesh(4))
    assert fine.values.tolist() == [1.0, 1.0, 2.0, 2.0]
    with pytest.raises(PreconditionError):
        coarse.on_mesh(build_mesh(3))


def test_linear_product_integral():
    assert linear_product_integral(1.0, 1.0, 1.0, 1.0, 0.2) == pytest.approx(0.2)
    assert linear_product_integral(0.0, 1.0, 0.0, 1.0, 0.2) == pytest.approx(0.2 / 3.0)


def test_simpson_is_exact_for_cubics():
    weights = simpson_weights(8)
    s = np.linspace(0.0, 1.0, 9)
    assert weights.sum() == pytest.approx(1.0)
    assert weights @ s ** 3 == pytest.approx(0.25)
    with pytest.raises(PreconditionError):
        simpson_weights(3)


def test_union_mesh():
    merged = union_mesh(Mesh([0.0, 0.5, 1.0]), Mesh([0.0, 0.25, 0.5 + 1e-14, 1.0]))
    assert merged.nodes.tolist() == [0.0, 0.25, 0.5, 1.0]


# ---------------------------------------------------------------- sign changes

def test_sign_changes_examples():
    mesh = build_mesh(200)
    assert sign_changes(nodal(mesh, lambda x: np.sin(2 * np.pi * x))) == 1
    assert sign_changes(nodal(mesh, np.ones_like)) == 0
    assert sign_changes(nodal(mesh, lambda x: np.sin(3 * np.pi * x))) == 2


def test_sign_changes_ignores_small_values():
    f = PiecewiseLinear(build_mesh(4), [1.0, 1e-12, -1e-12, 1e-12, 1.0])
    assert sign_changes(f) == 0


def test_pseudo_zeros_examples():
    mesh = build_mesh(200)
    sine = nodal(mesh, lambda x: np.sin(2 * np.pi * x))
    assert pseudo_zeros(sine, 0.1) == 1
    assert pseudo_zeros(nodal(mesh, np.ones_like), 0.5) == 0
    assert pseudo_zeros(nodal(mesh, lambda x: np.abs(np.sin(2 * np.pi * x))), 0.1) == 1


def test_pseudo_zeros_needs_positive_eps():
    with pytest.raises(PreconditionError):
        pseudo_zeros(nodal(build_mesh(4), np.sin), 0.0)


def _random_functions(seed, count):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        n_nodes = int(rng.integers(3, 41))
        inner = np.sort(rng.uniform(0.0, 1.0, n_nodes - 2))
        nodes = np.concatenate([[0.0], inner, [1.0]])
        if np.any(np.diff(nodes) <= 0.0):
            continue
        yield PiecewiseLinear(Mesh(nodes), rng.standard_normal(n_nodes))


def test_greedy_scan_matches_exhaustive_count():
    for f in _random_functions(11, 200):
        for eps in (0.1, 0.5, 1.0):
            assert pseudo_zeros(f, eps) == pseudo_zeros_bruteforce(f, eps)


def test_pseudo_zeros_monotone_in_eps():
    for f in _random_functions(12, 50):
        counts = [pseudo_zeros(f, eps) for eps in (0.05, 0.2, 0.5, 1.0)]
        assert counts == sorted(counts)


def test_pseudo_zeros_dominate_sign_changes_at_small_eps():
    for f in _random_functions(13, 50):
        eps = 0.5 * np.min(np.abs(f.values))
        assert pseudo_zeros(f, eps) >= sign_changes(f)


def test_pseudo_zero_count_survives_perturbation_below_margin():
    rng = np.random.default_rng(14)
    checked = 0
    for f in _random_functions(15, 100):
        scan = pseudo_zero_scan(f, 0.3)
        if not np.isfinite(scan.margin) or scan.margin <= 0.0:
            continue
        delta = 0.49 * scan.margin
        g = PiecewiseLinear(f.mesh, f.values + rng.uniform(-delta, delta, f.values.size))
        assert pseudo_zeros(g, 0.3) >= scan.count
        checked += 1
    assert checked > 0


def test_scan_witnesses_are_high_points():
    mesh = build_mesh(300)
    f = nodal(mesh, lambda x: np.sin(3 * np.pi * x))
    scan = pseudo_zero_scan(f, 0.1)
    assert scan.count == 2
    assert len(scan.witnesses) == 3
    assert all(abs(f(x)) > 0.1 for x in scan.witnesses)
    assert len(scan.dips) == 2


# ---------------------------------------------------------------- zero components

def test_zero_components_two_term_sum():
    mesh = build_mesh(300)
    f = nodal(mesh, lambda x: np.sin(np.pi * x) + np.sin(2 * np.pi * x))
    components = zero_components(f)
    assert components.interior_count == 1
    assert components.locations[0] == pytest.approx(2.0 / 3.0, abs=1e-2)
    assert components.touches_left and components.touches_right


def test_zero_components_endpoints_only():
    f = nodal(build_mesh(100), lambda x: np.sin(np.pi * x))
    components = zero_components(f)
    assert components.interior_count == 0
    assert components.touches_left and components.touches_right


def test_zero_components_fat_zero_counts_once():
    f = nodal(build_mesh(100), lambda x: np.where((x > 0.39) & (x < 0.61), 0.0, 1.0 + x))
    components = zero_components(f)
    assert components.interior_count == 1
    assert components.locations[0] == pytest.approx(0.5)
    assert not components.touches_left and not components.touches_right


def test_vanishes_on_cell():
    mesh = build_mesh(100)
    assert not vanishes_on_cell(nodal(mesh, lambda x: np.sin(np.pi * x)))
    assert vanishes_on_cell(nodal(mesh, lambda x: np.where(x < 0.5, 0.0, x)))


def test_interlacing():
    assert interlaces([0.5], [0.33, 0.66])
    assert not interlaces([0.2], [0.33, 0.66])
    assert interlaces([], [0.5])


# ---------------------------------------------------------------- errors

def test_error_payloads_are_json_ready():
    error = ConvergenceError("no luck", residual=np.float64(1e-3), step=np.int64(4))
    payload = json.loads(json.dumps(error.to_dict()))
    assert payload['module'] == 'eigensolver'
    assert payload['details'] == {'residual': 1e-3, 'step': 4}


def test_config_error_message_names_line_and_field():
    error = ConfigError("bad value", line=3, field='q.atoms')
    assert str(error) == "line 3, field 'q.atoms': bad value"
    assert error.to_dict()['details'] == {'line': 3, 'field': 'q.atoms'}
