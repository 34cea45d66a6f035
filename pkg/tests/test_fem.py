"""P1 assembly, load vectors, the factorized solver and region inner products."""

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from bilevel_aero import BoundaryTag, Field, Region, generate_mesh
from bilevel_aero import fem
from bilevel_aero.verification import convergence_check


def _dense_element_oracle(mesh, k, robin_sign):
    """Independent assembly: gradients from the inverse Jacobian, one element at a time."""
    n = mesh.n_vertices
    A = np.zeros((n, n), complex)
    for tri in mesh.triangles:
        p = mesh.vertices[tri]
        J = np.array([p[1] - p[0], p[2] - p[0]]).T
        area = abs(np.linalg.det(J)) / 2
        grads = np.linalg.inv(J).T @ np.array([[-1, 1, 0], [-1, 0, 1]])
        K = area * grads.T @ grads
        M = area / 12 * (np.ones((3, 3)) + np.eye(3))
        A[np.ix_(tri, tri)] += -K + k**2 * M
    for (i, j), tag in zip(mesh.boundary_edges, mesh.boundary_tags):
        if tag == BoundaryTag.OUTER:
            L = np.linalg.norm(mesh.vertices[i] - mesh.vertices[j])
            A[np.ix_([i, j], [i, j])] += robin_sign * 1j * k * L / 6 * np.array([[2, 1], [1, 2]])
    return A


@pytest.mark.parametrize("sign", [1, -1])
def test_assembly_matches_dense_oracle(coarse_mesh, sign):
    A = fem.assemble_helmholtz(coarse_mesh, 2.5, sign).toarray()
    np.testing.assert_allclose(A, _dense_element_oracle(coarse_mesh, 2.5, sign), atol=1e-13)


def test_k_zero_gives_negative_stiffness(coarse_mesh):
    A = fem.assemble_helmholtz(coarse_mesh, 0.0, 1)
    assert abs(A + fem.stiffness_matrix(coarse_mesh)).max() == 0
    assert np.abs(A @ np.ones(coarse_mesh.n_vertices)).max() <= 1e-12


@pytest.mark.parametrize("k", [0.5, 1.0, 5.0])
def test_complex_symmetric_and_conjugate(mesh27, k):
    A = fem.assemble_helmholtz(mesh27, k, 1)
    assert abs(A - A.T).max() == 0
    assert abs(fem.assemble_helmholtz(mesh27, k, -1) - A.conj()).max() == 0


def test_mass_row_sums(geom, mesh27):
    for region, area in [(Region.STATE, geom.domain_area), (Region.SOURCE, 1.0),
                         (Region.MEASUREMENT, geom.measurement_area)]:
        rows = np.asarray(fem.mass_matrix(mesh27, region).sum(axis=1)).ravel()
        assert np.all(rows >= 0)
        assert rows.sum() == pytest.approx(area, rel=1e-10)


def test_boundary_mass_total_perimeter(mesh27):
    assert fem.boundary_mass(mesh27, BoundaryTag.OUTER).sum() == pytest.approx(8.0)
    assert fem.boundary_mass(mesh27, BoundaryTag.SCATTERER).sum() == pytest.approx(3 * 0.6)


def test_load_examples(geom, mesh27):
    n = mesh27.n_vertices
    assert np.all(fem.assemble_load(mesh27, Field.zeros(mesh27)) == 0)
    ones_state = Field(mesh27, np.ones(n), Region.STATE)
    assert fem.assemble_load(mesh27, ones_state).sum() == pytest.approx(geom.domain_area, abs=1e-10)
    ones_src = Field.interpolate(mesh27, lambda x, y: np.ones_like(x), Region.SOURCE)
    assert fem.assemble_load(mesh27, ones_src).sum() == pytest.approx(1.0, abs=1e-10)


def test_load_mesh_mismatch(coarse_mesh, mesh27):
    with pytest.raises(ValueError):
        fem.assemble_load(coarse_mesh, Field.zeros(mesh27))


def test_solve_identity_and_zero(rng):
    b = rng.standard_normal(7) + 1j * rng.standard_normal(7)
    np.testing.assert_array_equal(fem.solve(sp.identity(7, format="csr"), b), b)
    assert np.all(fem.solve(sp.identity(7, format="csr"), np.zeros(7)) == 0)


def test_solve_residual_contract(geom, rng):
    m = generate_mesh(geom, 0.27)
    A = fem.assemble_helmholtz(m, 5.0, 1)
    b = rng.standard_normal(m.n_vertices) + 1j * rng.standard_normal(m.n_vertices)
    x = fem.solve(A, b)
    assert np.linalg.norm(A @ x - b) / np.linalg.norm(b) <= 1e-9


def test_singular_matrix_rejected():
    A = sp.csr_matrix(np.array([[1.0, 2.0], [2.0, 4.0]]))
    with pytest.raises(fem.SolverError):
        fem.Factorization(A)


def test_solve_dimension_checked():
    with pytest.raises(ValueError):
        fem.Factorization(sp.identity(3)).solve(np.ones(4))


def test_inner_product_examples(geom, mesh27, rng):
    n = mesh27.n_vertices
    one = Field(mesh27, np.ones(n), Region.STATE)
    assert fem.inner_product(one, one, Region.MEASUREMENT) == pytest.approx(4 - 1.21 - 3 * 0.0225, abs=1e-10)
    assert fem.inner_product(one, Field(mesh27, 1j * np.ones(n)), Region.MEASUREMENT) == 0


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), region=st.sampled_from([Region.SOURCE, Region.MEASUREMENT, Region.STATE]))
def test_inner_product_positive_semidefinite(mesh27, seed, region):
    r = np.random.default_rng(seed)
    n = mesh27.n_vertices
    vals = r.standard_normal(n) + 1j * r.standard_normal(n)
    mask = mesh27.region_vertex_mask(region)
    f = Field(mesh27, vals, region)
    assert fem.inner_product(f, f, region) > 0
    zeroed = Field(mesh27, np.where(mask, 0, vals), region)
    assert fem.inner_product(zeroed, zeroed, region) == pytest.approx(0, abs=1e-14)


def test_inner_product_mesh_mismatch(coarse_mesh, mesh27):
    with pytest.raises(ValueError):
        fem.inner_product(Field.zeros(coarse_mesh), Field.zeros(mesh27), Region.STATE)


def test_second_order_convergence(geom):
    res = convergence_check(geom)
    assert res.passed, res.report()
    assert all(1.7 <= p <= 2.3 for p in res.details["orders"])
