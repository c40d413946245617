"""FEM core: element matrices against independent quadrature oracles,
constraint elimination, local assembly, and the patch test."""

import numpy as np
import pytest
import scipy.sparse as sp

from geneo_lab.fem import (
    BoundaryCondition,
    CoefficientError,
    CoefficientField,
    DofMap,
    MaterialError,
    MissingDirichletError,
    NotPositiveSemidefiniteError,
    StructuredMesh,
    assemble_darcy,
    assemble_elasticity,
    assemble_local,
    darcy_element_matrix,
    darcy_stiffness,
    elasticity_element_matrices,
    elasticity_stiffness,
    energy_norm,
)
from geneo_lab.linalg.sparse import is_structurally_symmetric

# ---------------------------------------------------------------------------
# independent quadrature oracles (own shape functions, 4x4 Gauss, Lame form)
# ---------------------------------------------------------------------------

_CORNERS = [(-1, -1), (1, -1), (1, 1), (-1, 1)]


def oracle_darcy_element(hx, hy, kappa=1.0, npts=4):
    pts, wts = np.polynomial.legendre.leggauss(npts)
    k = np.zeros((4, 4))
    for xi, wx in zip(pts, wts):
        for eta, wy in zip(pts, wts):
            grads = np.array(
                [
                    [cx * (1 + cy * eta) / 4 * (2 / hx), cy * (1 + cx * xi) / 4 * (2 / hy)]
                    for cx, cy in _CORNERS
                ]
            )
            k += wx * wy * kappa * (grads @ grads.T) * (hx * hy / 4)
    return k


def oracle_elasticity_element(hx, hy, young, nu, npts=4):
    lam = young * nu / ((1 + nu) * (1 - 2 * nu))
    mu = young / (2 * (1 + nu))
    d = np.array([[lam + 2 * mu, lam, 0.0], [lam, lam + 2 * mu, 0.0], [0.0, 0.0, mu]])
    pts, wts = np.polynomial.legendre.leggauss(npts)
    k = np.zeros((8, 8))
    for xi, wx in zip(pts, wts):
        for eta, wy in zip(pts, wts):
            b = np.zeros((3, 8))
            for i, (cx, cy) in enumerate(_CORNERS):
                dx = cx * (1 + cy * eta) / 4 * (2 / hx)
                dy = cy * (1 + cx * xi) / 4 * (2 / hy)
                b[0, 2 * i] = dx
                b[1, 2 * i + 1] = dy
                b[2, 2 * i] = dy
                b[2, 2 * i + 1] = dx
            k += wx * wy * (b.T @ d @ b) * (hx * hy / 4)
    return k


def oracle_assemble_darcy(mesh, field):
    """Element-loop Neumann assembly with the oracle element matrices."""
    a = np.zeros((mesh.num_nodes, mesh.num_nodes))
    conn = mesh.element_connectivity()
    for e in range(mesh.num_elements):
        ke = oracle_darcy_element(mesh.hx, mesh.hy, field.values[e])
        idx = conn[e]
        a[np.ix_(idx, idx)] += ke
    return a


class TestStructuredMesh:
    def test_counts(self):
        mesh = StructuredMesh(3, 5)
        assert mesh.num_nodes == 4 * 6
        assert mesh.num_elements == 15

    def test_element_corner_nodes_from_cell(self):
        mesh = StructuredMesh(4, 4)
        e = mesh.element_id(2, 3)
        n00 = mesh.node_id(2, 3)
        expected = [n00, n00 + 1, n00 + 6, n00 + 5]
        assert list(mesh.element_connectivity()[e]) == expected

    def test_coords(self):
        mesh = StructuredMesh(2, 2, lx=2.0, ly=4.0)
        np.testing.assert_allclose(mesh.node_coords()[mesh.node_id(1, 2)], [1.0, 4.0])

    def test_invalid(self):
        with pytest.raises(ValueError):
            StructuredMesh(0, 2)
        with pytest.raises(ValueError):
            StructuredMesh(2, 2, lx=-1.0)


class TestCoefficientField:
    def test_positive_required(self):
        mesh = StructuredMesh(2, 2)
        with pytest.raises(CoefficientError):
            CoefficientField.raster(mesh, np.zeros(4))

    def test_contrast(self):
        mesh = StructuredMesh(2, 2)
        field = CoefficientField.layers(mesh, 2, 100.0)
        assert field.contrast == pytest.approx(100.0)

    def test_layers_geometry(self):
        mesh = StructuredMesh(4, 4)
        field = CoefficientField.layers(mesh, 4, 10.0)
        values = field.values.reshape(4, 4)
        np.testing.assert_allclose(values[0], 1.0)
        np.testing.assert_allclose(values[1], 10.0)

    def test_rectangles(self):
        mesh = StructuredMesh(4, 4)
        field = CoefficientField.skyscrapers(mesh, [(0.0, 0.0, 0.5, 0.5)], 7.0)
        values = field.values.reshape(4, 4)
        assert values[0, 0] == 7.0
        assert values[3, 3] == 1.0

    def test_poisson_range(self):
        mesh = StructuredMesh(2, 2)
        with pytest.raises(MaterialError):
            CoefficientField("constant", np.ones(4), poisson=0.5)

    def test_raster_file_roundtrip(self, tmp_path):
        mesh = StructuredMesh(3, 2)
        values = np.arange(1.0, 7.0)
        path = tmp_path / "field.txt"
        path.write_text("3 2\n" + " ".join(str(v) for v in values) + "\n")
        field = CoefficientField.from_raster_file(mesh, path)
        np.testing.assert_allclose(field.values, values)

    def test_raster_file_mismatch(self, tmp_path):
        mesh = StructuredMesh(3, 2)
        path = tmp_path / "field.txt"
        path.write_text("2 2\n1 1 1 1\n")
        with pytest.raises(CoefficientError):
            CoefficientField.from_raster_file(mesh, path)


class TestDarcyAssembly:
    def test_neumann_center_stencil(self):
        # 2x2 square elements, kappa = 1: center node couples with weight
        # 8/3 to itself and -1/3 to each of its 8 neighbors
        mesh = StructuredMesh(2, 2)
        a = darcy_stiffness(mesh, CoefficientField.constant(mesh)).toarray()
        center = mesh.node_id(1, 1)
        assert a[center, center] == pytest.approx(8.0 / 3.0, rel=1e-14)
        others = np.delete(a[center], center)
        np.testing.assert_allclose(others, -1.0 / 3.0, rtol=1e-14)

    def test_element_matrix_matches_quadrature_oracle(self):
        for hx, hy in [(1.0, 1.0), (0.25, 0.5), (2.0, 0.125)]:
            np.testing.assert_allclose(
                darcy_element_matrix(hx, hy), oracle_darcy_element(hx, hy), rtol=1e-13
            )

    def test_full_assembly_matches_oracle(self):
        mesh = StructuredMesh(3, 4, lx=1.5, ly=0.7)
        field = CoefficientField.raster(mesh, np.linspace(0.5, 3.0, 12))
        a = darcy_stiffness(mesh, field).toarray()
        np.testing.assert_allclose(a, oracle_assemble_darcy(mesh, field), rtol=1e-12)

    def test_kappa_scaling_is_exact(self):
        mesh = StructuredMesh(3, 3)
        base = CoefficientField.raster(mesh, np.linspace(1.0, 2.0, 9))
        scaled = CoefficientField.raster(mesh, 3.0 * base.values)
        a0 = darcy_stiffness(mesh, base)
        a1 = darcy_stiffness(mesh, scaled)
        np.testing.assert_allclose(a1.toarray(), 3.0 * a0.toarray(), rtol=1e-15)

    def test_all_dirichlet_single_element(self):
        mesh = StructuredMesh(1, 1)
        bc = BoundaryCondition(
            dirichlet={side: 0.0 for side in ("left", "right", "bottom", "top")}
        )
        a, b = assemble_darcy(mesh, CoefficientField.constant(mesh), bc, f=1.0)
        np.testing.assert_array_equal(a.toarray(), np.eye(4))
        np.testing.assert_array_equal(b, np.zeros(4))

    def test_no_dirichlet_raises(self):
        mesh = StructuredMesh(2, 2)
        with pytest.raises(MissingDirichletError):
            assemble_darcy(mesh, CoefficientField.constant(mesh), BoundaryCondition())

    def test_exact_symmetry_and_spd(self):
        mesh = StructuredMesh(5, 4)
        field = CoefficientField.layers(mesh, 4, 1e5)
        bc = BoundaryCondition(dirichlet={"left": 1.0})
        a, _ = assemble_darcy(mesh, field, bc)
        at = a.T.tocsr()
        at.sort_indices()
        assert is_structurally_symmetric(a)
        np.testing.assert_array_equal(a.data, at.data)
        # Cholesky probe on free dofs
        np.linalg.cholesky(a.toarray())

    def test_patch_test_reproduces_linear_function(self):
        mesh = StructuredMesh(5, 7, lx=2.0, ly=1.0)
        linear = lambda x, y: 2.0 + 3.0 * x - 5.0 * y
        bc = BoundaryCondition(dirichlet={s: linear for s in ("left", "right", "bottom", "top")})
        a, b = assemble_darcy(mesh, CoefficientField.constant(mesh), bc, f=0.0)
        x = np.linalg.solve(a.toarray(), b)
        exact = np.array([linear(px, py) for px, py in mesh.node_coords()])
        assert np.linalg.norm(x - exact) <= 1e-10 * np.linalg.norm(exact)

    def test_dirichlet_value_enters_rhs(self):
        mesh = StructuredMesh(2, 2)
        bc = BoundaryCondition(dirichlet={"top": 1.0, "bottom": 0.0})
        a, b = assemble_darcy(mesh, CoefficientField.constant(mesh), bc, f=0.0)
        x = np.linalg.solve(a.toarray(), b)
        top = mesh.boundary_nodes("top")
        np.testing.assert_allclose(x[top], 1.0)


class TestElasticityAssembly:
    def test_rigid_translation_in_kernel(self):
        mesh = StructuredMesh(3, 3)
        field = CoefficientField.constant(mesh, value=7.0, nu=0.3)
        a = elasticity_stiffness(mesh, field)
        v = np.zeros(a.shape[0])
        v[0::2] = 1.0
        np.testing.assert_allclose(a @ v, 0.0, atol=1e-12)

    def test_rigid_rotation_in_kernel(self):
        mesh = StructuredMesh(4, 3, lx=2.0)
        field = CoefficientField.constant(mesh, value=2.0, nu=0.4)
        a = elasticity_stiffness(mesh, field)
        coords = mesh.node_coords()
        v = np.empty(a.shape[0])
        v[0::2] = -coords[:, 1]
        v[1::2] = coords[:, 0]
        np.testing.assert_allclose(a @ v, 0.0, atol=1e-12)

    def test_single_element_matches_quadrature_oracle(self):
        ke = elasticity_element_matrices(1.0, 1.0, np.array([1.0]), np.array([1e-12]))[0]
        oracle = oracle_elasticity_element(1.0, 1.0, 1.0, 1e-12)
        np.testing.assert_allclose(ke, oracle, rtol=1e-12, atol=1e-14)

    def test_general_material_matches_oracle(self):
        ke = elasticity_element_matrices(0.5, 0.25, np.array([3.0]), np.array([0.35]))[0]
        oracle = oracle_elasticity_element(0.5, 0.25, 3.0, 0.35)
        np.testing.assert_allclose(ke, oracle, rtol=1e-12)

    def test_bad_poisson_raises(self):
        with pytest.raises(MaterialError):
            elasticity_element_matrices(1.0, 1.0, np.array([1.0]), np.array([0.6]))
        with pytest.raises(MaterialError):
            elasticity_element_matrices(1.0, 1.0, np.array([1.0]), np.array([-0.1]))

    def test_assembled_spd_after_elimination(self):
        mesh = StructuredMesh(4, 2)
        field = CoefficientField.layers(mesh, 2, 100.0, nu=(0.3, 0.4))
        bc = BoundaryCondition(dirichlet={"left": (0.0, 0.0)})
        a, _ = assemble_elasticity(mesh, field, bc)
        np.linalg.cholesky(a.toarray())

    def test_traction_load_enters_rhs(self):
        mesh = StructuredMesh(2, 2)
        field = CoefficientField.constant(mesh)
        bc = BoundaryCondition(
            dirichlet={"left": (0.0, 0.0)}, neumann={"right": (0.0, -1.0)}
        )
        _, b = assemble_elasticity(mesh, field, bc)
        right = mesh.boundary_nodes("right")
        # total applied force equals traction times side length
        assert b[right * 2 + 1].sum() == pytest.approx(-1.0 * mesh.ly)


class TestAssembleLocal:
    def test_all_elements_all_dirichlet_equals_global(self):
        mesh = StructuredMesh(3, 3)
        field = CoefficientField.layers(mesh, 3, 10.0)
        bc = BoundaryCondition(
            dirichlet={side: 0.0 for side in ("left", "right", "bottom", "top")}
        )
        a_global, _ = assemble_darcy(mesh, field, bc)
        a_local, dofs = assemble_local(
            mesh, field, bc, np.arange(mesh.num_elements), DofMap(mesh, 1)
        )
        np.testing.assert_array_equal(dofs, np.arange(mesh.num_nodes))
        np.testing.assert_allclose(a_local.toarray(), a_global.toarray(), rtol=1e-15)

    def test_interior_subset_has_constant_kernel(self):
        mesh = StructuredMesh(5, 5)
        field = CoefficientField.constant(mesh)
        bc = BoundaryCondition(dirichlet={"left": 0.0})
        interior = [mesh.element_id(ex, ey) for ex in (2, 3) for ey in (2, 3)]
        a_local, dofs = assemble_local(mesh, field, bc, interior, DofMap(mesh, 1))
        np.testing.assert_allclose(a_local @ np.ones(dofs.size), 0.0, atol=1e-14)

    def test_two_element_strip_equals_summed_element_matrices(self):
        mesh = StructuredMesh(4, 1)
        kappas = np.array([1.0, 2.0, 5.0, 0.5])
        field = CoefficientField.raster(mesh, kappas)
        bc = BoundaryCondition(dirichlet={"right": 0.0})
        subset = [1, 2]
        a_local, dofs = assemble_local(mesh, field, bc, subset, DofMap(mesh, 1))
        ke = darcy_element_matrix(mesh.hx, mesh.hy)
        conn = mesh.element_connectivity()
        oracle = np.zeros((dofs.size, dofs.size))
        for e in subset:
            loc = np.searchsorted(dofs, conn[e])
            oracle[np.ix_(loc, loc)] += kappas[e] * ke
        np.testing.assert_allclose(a_local.toarray(), oracle, rtol=1e-14)

    def test_empty_subset_raises(self):
        mesh = StructuredMesh(2, 2)
        with pytest.raises(ValueError):
            assemble_local(
                mesh, CoefficientField.constant(mesh), BoundaryCondition(), [], DofMap(mesh, 1)
            )

    def test_galerkin_consistency_on_interior_dofs(self):
        # global matrix restricted to dofs interior to an element subset
        # equals the local assembly there
        mesh = StructuredMesh(6, 6)
        field = CoefficientField.layers(mesh, 3, 50.0)
        bc = BoundaryCondition(dirichlet={"bottom": 0.0})
        a_global, _ = assemble_darcy(mesh, field, bc)
        subset = [mesh.element_id(ex, ey) for ex in range(4) for ey in range(4)]
        a_local, dofs = assemble_local(mesh, field, bc, subset, DofMap(mesh, 1))
        conn = mesh.element_connectivity()
        outside = np.setdiff1d(np.arange(mesh.num_elements), subset)
        touched_outside = np.unique(conn[outside])
        interior = np.setdiff1d(dofs, touched_outside)
        gi = np.searchsorted(dofs, interior)
        np.testing.assert_allclose(
            a_local.toarray()[np.ix_(gi, gi)],
            a_global.toarray()[np.ix_(interior, interior)],
            rtol=1e-15,
        )


class TestEnergyNorm:
    def test_zero_vector(self):
        a = sp.identity(4, format="csr")
        assert energy_norm(a, np.zeros(4)) == 0.0

    def test_identity_gives_euclidean_norm(self, rng):
        v = rng.standard_normal(6)
        assert energy_norm(sp.identity(6, format="csr"), v) == pytest.approx(
            np.linalg.norm(v)
        )

    def test_matches_dense_triple_product(self, rng):
        from conftest import random_spd

        a = random_spd(5, rng)
        v = rng.standard_normal(5)
        expected = np.sqrt(v @ a @ v)
        assert energy_norm(sp.csr_matrix(a), v) == pytest.approx(expected, rel=1e-12)

    def test_indefinite_raises(self):
        a = sp.csr_matrix(np.diag([1.0, -5.0]))
        with pytest.raises(NotPositiveSemidefiniteError):
            energy_norm(a, np.array([0.0, 1.0]))
