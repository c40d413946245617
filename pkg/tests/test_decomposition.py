"""Overlapping decompositions: index maps, multiplicity counting, both
partitions of unity, and the geometry statistics feeding the bounds."""

import csv

import numpy as np
import pytest

from geneo_lab.decomposition import (
    DegenerateOverlapWarning,
    PartitionOfUnity,
    PouCoverageError,
    build_decomposition,
    coverage_constant,
    decomposition_from_boxes,
    detect_overlap_zone,
    dump_multiplicity_csv,
    dump_pou_csv,
    prolong,
    restrict,
    sarkis_pou,
    standard_pou,
)
from geneo_lab.fem import BoundaryCondition, DofMap, StructuredMesh


def pou_sum(decomp, pou):
    total = np.zeros(decomp.dofmap.ndof)
    for j in range(decomp.num_subdomains):
        total += decomp.prolong(j, pou.weights[j])
    return total


class TestBuildDecomposition:
    def test_single_subdomain_is_whole_domain(self):
        mesh = StructuredMesh(4, 4)
        decomp = build_decomposition(mesh, DofMap(mesh, 1), 1, 1, 1)
        sub = decomp.subdomains[0]
        assert sub.elements.size == mesh.num_elements
        assert sub.neighbors == ()
        assert decomp.overlap_zone_dofs(0).size == 0
        assert coverage_constant(decomp) == 1

    def test_four_by_four_two_by_two_enumeration(self):
        # 4x4 elements, 2x2 subdomains, one overlap layer: every subdomain
        # is 3x3 elements (16 nodes) and the center node belongs to all four
        mesh = StructuredMesh(4, 4)
        decomp = build_decomposition(mesh, DofMap(mesh, 1), 2, 2, 1)
        assert decomp.num_subdomains == 4
        for sub in decomp.subdomains:
            ex0, ex1, ey0, ey1 = sub.box
            assert (ex1 - ex0, ey1 - ey0) == (3, 3)
            assert sub.nodes.size == 16
        center = mesh.node_id(2, 2)
        assert decomp.dof_multiplicity[center] == 4
        # explicit enumeration of the owned partition over all 25 nodes
        sub0 = decomp.subdomains[0]
        expected_nodes = sorted(
            mesh.node_id(i, j) for i in range(4) for j in range(4)
        )
        assert sorted(sub0.nodes) == expected_nodes
        # owned element boxes partition the 16 elements
        owned = np.concatenate([s.owned_elements for s in decomp.subdomains])
        assert sorted(owned) == list(range(16))

    def test_partition_is_exact(self):
        mesh = StructuredMesh(10, 7)
        decomp = build_decomposition(mesh, DofMap(mesh, 1), 3, 2, 1)
        owned = np.concatenate([s.owned_elements for s in decomp.subdomains])
        assert owned.size == mesh.num_elements
        assert np.unique(owned).size == mesh.num_elements

    def test_neighbor_symmetry_matches_dof_intersection(self):
        mesh = StructuredMesh(9, 9)
        decomp = build_decomposition(mesh, DofMap(mesh, 1), 3, 3, 1)
        for si in decomp.subdomains:
            for sj in decomp.subdomains:
                if si.index == sj.index:
                    continue
                touching = bool(
                    np.intersect1d(si.dofs, sj.dofs, assume_unique=True).size
                )
                assert (sj.index in si.neighbors) == touching
                assert (si.index in sj.neighbors) == (sj.index in si.neighbors)

    def test_interior_overlap_width_is_two_layers(self):
        mesh = StructuredMesh(16, 16)
        for ell in (1, 2):
            decomp = build_decomposition(mesh, DofMap(mesh, 1), 4, 4, ell)
            for sub in decomp.subdomains:
                assert 0 < sub.overlap_width <= sub.diameter
            # interior subdomain (grid position 1,1 -> index 5)
            interior = decomp.subdomains[5]
            assert interior.overlap_width == pytest.approx(2 * ell * mesh.hx)

    def test_degenerate_overlap_warns(self):
        mesh = StructuredMesh(4, 4)
        with pytest.warns(DegenerateOverlapWarning):
            build_decomposition(mesh, DofMap(mesh, 1), 2, 1, 3)

    def test_invalid_arguments(self):
        mesh = StructuredMesh(4, 4)
        with pytest.raises(ValueError):
            build_decomposition(mesh, DofMap(mesh, 1), 5, 1, 1)
        with pytest.raises(ValueError):
            build_decomposition(mesh, DofMap(mesh, 1), 2, 2, 0)

    def test_vector_dofs_follow_nodes(self):
        mesh = StructuredMesh(4, 4)
        dofmap = DofMap(mesh, 2)
        decomp = build_decomposition(mesh, dofmap, 2, 2, 1)
        sub = decomp.subdomains[0]
        assert sub.dofs.size == 2 * sub.nodes.size
        # both components of a node always travel together
        assert np.all(np.diff(sub.dofs.reshape(-1, 2), axis=1) == 1)


class TestOverlapZone:
    def test_single_subdomain_empty(self):
        mesh = StructuredMesh(3, 3)
        decomp = build_decomposition(mesh, DofMap(mesh, 1), 1, 1, 1)
        assert detect_overlap_zone(decomp)[0].size == 0

    def test_two_side_by_side_strip(self):
        # 2 subdomains on a 4x1 mesh with one layer: the shared strip spans
        # element columns 1..2, i.e. node columns 1..3
        mesh = StructuredMesh(4, 1)
        decomp = build_decomposition(mesh, DofMap(mesh, 1), 2, 1, 1)
        zones = detect_overlap_zone(decomp)
        expected = sorted(
            mesh.node_id(i, j) for i in (1, 2, 3) for j in (0, 1)
        )
        assert sorted(zones[0]) == expected
        assert sorted(zones[1]) == expected

    def test_multiplicity_bounded_by_k0(self):
        mesh = StructuredMesh(12, 12)
        decomp = build_decomposition(mesh, DofMap(mesh, 1), 3, 3, 2)
        assert decomp.dof_multiplicity.max() == coverage_constant(decomp)

    def test_multiplicity_matches_recount_from_elements(self):
        mesh = StructuredMesh(8, 6)
        dofmap = DofMap(mesh, 1)
        decomp = build_decomposition(mesh, dofmap, 2, 3, 1)
        conn = mesh.element_connectivity()
        recount = np.zeros(dofmap.ndof, dtype=int)
        for sub in decomp.subdomains:
            recount[np.unique(conn[sub.elements])] += 1
        np.testing.assert_array_equal(decomp.dof_multiplicity, recount)


class TestCoverageConstant:
    def test_cross_point_of_two_by_two(self):
        mesh = StructuredMesh(8, 8)
        decomp = build_decomposition(mesh, DofMap(mesh, 1), 2, 2, 1)
        assert coverage_constant(decomp) == 4

    def test_strip_decomposition_pairwise(self):
        # strips wide enough that only neighboring pairs overlap
        mesh = StructuredMesh(32, 2)
        decomp = build_decomposition(mesh, DofMap(mesh, 1), 8, 1, 1)
        assert coverage_constant(decomp) == 2


class TestStandardPou:
    def test_trivial_weights(self):
        mesh = StructuredMesh(6, 6)
        decomp = build_decomposition(mesh, DofMap(mesh, 1), 2, 1, 1)
        pou = standard_pou(decomp)
        # interior-of-subdomain dof held by one subdomain only
        sub0 = decomp.subdomains[0]
        only_mine = decomp.dof_multiplicity[sub0.dofs] == 1
        np.testing.assert_allclose(pou.weights[0][only_mine], 1.0)
        # dof shared by two subdomains, interior to both overlaps
        mid = mesh.node_id(3, 3)
        locs = [np.searchsorted(s.dofs, mid) for s in decomp.subdomains]
        assert pou.weights[0][locs[0]] == pytest.approx(0.5)
        assert pou.weights[1][locs[1]] == pytest.approx(0.5)

    def test_artificial_boundary_forces_zero_then_renormalizes(self):
        mesh = StructuredMesh(6, 1)
        decomp = build_decomposition(mesh, DofMap(mesh, 1), 2, 1, 1)
        pou = standard_pou(decomp)
        # node column 4 is subdomain 0's artificial boundary, interior to 1
        node = mesh.node_id(4, 0)
        l0 = np.searchsorted(decomp.subdomains[0].dofs, node)
        l1 = np.searchsorted(decomp.subdomains[1].dofs, node)
        assert pou.weights[0][l0] == 0.0
        assert pou.weights[1][l1] == pytest.approx(1.0)

    def test_sum_identity_randomized(self, rng):
        for _ in range(8):
            nx = int(rng.integers(6, 16))
            ny = int(rng.integers(6, 16))
            px = int(rng.integers(1, 4))
            py = int(rng.integers(1, 4))
            ell = int(rng.integers(1, 3))
            mesh = StructuredMesh(nx, ny)
            ncomp = int(rng.integers(1, 3))
            dofmap = DofMap(mesh, ncomp)
            decomp = build_decomposition(mesh, dofmap, min(px, nx), min(py, ny), ell)
            side = ("left", "top", "bottom", "right")[int(rng.integers(0, 4))]
            bc = BoundaryCondition(
                dirichlet={side: 0.0 if ncomp == 1 else (0.0, 0.0)}
            )
            ddofs, _ = bc.constrained_dofs(mesh, dofmap)
            for builder in (standard_pou, sarkis_pou):
                pou = builder(decomp, ddofs)
                total = pou_sum(decomp, pou)
                free = np.ones(dofmap.ndof, dtype=bool)
                free[ddofs] = False
                np.testing.assert_allclose(total[free], 1.0, atol=1e-14)
                np.testing.assert_array_equal(total[~free], 0.0)
                for j, sub in enumerate(decomp.subdomains):
                    w = pou.weights[j]
                    assert np.all((w >= 0.0) & (w <= 1.0))
                    np.testing.assert_array_equal(w[sub.artificial_mask], 0.0)

    def test_dirichlet_dofs_zero_in_every_subdomain(self):
        mesh = StructuredMesh(8, 8)
        dofmap = DofMap(mesh, 1)
        decomp = build_decomposition(mesh, dofmap, 2, 2, 1)
        bc = BoundaryCondition(dirichlet={"top": 1.0})
        ddofs, _ = bc.constrained_dofs(mesh, dofmap)
        pou = standard_pou(decomp, ddofs)
        for j, sub in enumerate(decomp.subdomains):
            hit = np.isin(sub.dofs, ddofs)
            np.testing.assert_array_equal(pou.weights[j][hit], 0.0)


class TestSarkisPou:
    def test_single_subdomain_all_ones(self):
        mesh = StructuredMesh(4, 4)
        decomp = build_decomposition(mesh, DofMap(mesh, 1), 1, 1, 1)
        pou = sarkis_pou(decomp)
        np.testing.assert_allclose(pou.weights[0], 1.0)

    def test_strip_distance_weights(self):
        # hand-built 1D-like strip: grown boxes [0,4) and [1,5) share node
        # columns 1..4; the two interior shared dofs get (2/3, 1/3) and
        # (1/3, 2/3), the artificial-boundary dofs (0, 1) and (1, 0)
        mesh = StructuredMesh(5, 1)
        dofmap = DofMap(mesh, 1)
        decomp = decomposition_from_boxes(
            mesh,
            dofmap,
            [((0, 3, 0, 1), (0, 4, 0, 1)), ((3, 5, 0, 1), (1, 5, 0, 1))],
        )
        pou = sarkis_pou(decomp)

        def weight(j, i):
            node = mesh.node_id(i, 0)
            loc = np.searchsorted(decomp.subdomains[j].dofs, node)
            return pou.weights[j][loc]

        assert weight(0, 2) == pytest.approx(2.0 / 3.0)
        assert weight(1, 2) == pytest.approx(1.0 / 3.0)
        assert weight(0, 3) == pytest.approx(1.0 / 3.0)
        assert weight(1, 3) == pytest.approx(2.0 / 3.0)
        assert weight(0, 1) == pytest.approx(1.0)
        assert weight(1, 1) == pytest.approx(0.0)
        assert weight(0, 4) == pytest.approx(0.0)
        assert weight(1, 4) == pytest.approx(1.0)

    def test_weights_taper_toward_artificial_boundary(self):
        mesh = StructuredMesh(12, 12)
        decomp = build_decomposition(mesh, DofMap(mesh, 1), 2, 2, 2)
        pou = sarkis_pou(decomp)
        sub = decomp.subdomains[0]
        w = pou.weights[0]
        interior = mesh.node_id(1, 1)
        near_edge = mesh.node_id(7, 1)
        assert w[np.searchsorted(sub.dofs, interior)] > w[np.searchsorted(sub.dofs, near_edge)]


class TestRestrictProlong:
    def test_roundtrip_identity(self, rng):
        mesh = StructuredMesh(6, 6)
        decomp = build_decomposition(mesh, DofMap(mesh, 1), 2, 2, 1)
        v = rng.standard_normal(decomp.subdomains[1].size)
        np.testing.assert_array_equal(restrict(decomp, 1, prolong(decomp, 1, v)), v)

    def test_prolong_support(self):
        mesh = StructuredMesh(6, 6)
        decomp = build_decomposition(mesh, DofMap(mesh, 1), 2, 2, 1)
        out = prolong(decomp, 2, np.ones(decomp.subdomains[2].size))
        support = np.nonzero(out)[0]
        np.testing.assert_array_equal(support, decomp.subdomains[2].dofs)

    def test_pou_reconstruction_identity(self, rng):
        mesh = StructuredMesh(9, 9)
        dofmap = DofMap(mesh, 1)
        decomp = build_decomposition(mesh, dofmap, 3, 3, 1)
        pou = standard_pou(decomp)
        v = rng.standard_normal(dofmap.ndof)
        rebuilt = np.zeros_like(v)
        for j in range(decomp.num_subdomains):
            rebuilt += prolong(decomp, j, pou.weights[j] * restrict(decomp, j, v))
        np.testing.assert_allclose(rebuilt, v, atol=1e-13)

    def test_shape_errors(self):
        mesh = StructuredMesh(4, 4)
        decomp = build_decomposition(mesh, DofMap(mesh, 1), 2, 2, 1)
        with pytest.raises(ValueError):
            prolong(decomp, 0, np.ones(3))


class TestOrderingInvariance:
    def test_renumbering_permutes_weights(self):
        mesh = StructuredMesh(8, 8)
        dofmap = DofMap(mesh, 1)
        bx = [0, 4, 8]
        boxes = []
        for jy in range(2):
            for jx in range(2):
                owned = (bx[jx], bx[jx + 1], bx[jy], bx[jy + 1])
                grown = (
                    max(0, owned[0] - 1), min(8, owned[1] + 1),
                    max(0, owned[2] - 1), min(8, owned[3] + 1),
                )
                boxes.append((owned, grown))
        d1 = decomposition_from_boxes(mesh, dofmap, boxes)
        perm = [2, 0, 3, 1]
        d2 = decomposition_from_boxes(mesh, dofmap, [boxes[p] for p in perm])
        p1 = standard_pou(d1)
        p2 = standard_pou(d2)
        for new_idx, old_idx in enumerate(perm):
            np.testing.assert_array_equal(p2.weights[new_idx], p1.weights[old_idx])
        s1 = sarkis_pou(d1)
        s2 = sarkis_pou(d2)
        for new_idx, old_idx in enumerate(perm):
            np.testing.assert_array_equal(s2.weights[new_idx], s1.weights[old_idx])


class TestDumps:
    def test_csv_files(self, tmp_path):
        mesh = StructuredMesh(4, 4)
        dofmap = DofMap(mesh, 1)
        decomp = build_decomposition(mesh, dofmap, 2, 2, 1)
        pou = standard_pou(decomp)
        mpath = tmp_path / "mult.csv"
        ppath = tmp_path / "pou.csv"
        dump_multiplicity_csv(mpath, decomp)
        dump_pou_csv(ppath, decomp, pou)
        with open(mpath) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["dof", "x", "y", "multiplicity"]
        assert len(rows) == 1 + dofmap.ndof
        with open(ppath) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["dof", "x", "y", "subdomain", "mu"]
        total = sum(s.size for s in decomp.subdomains)
        assert len(rows) == 1 + total
