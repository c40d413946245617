"""Overlapping subdomain decompositions of a structured mesh.

A decomposition starts from a nonoverlapping px-by-py partition of the
element grid and grows each part by a number of element layers. It carries
the index maps realizing restriction/prolongation, per-dof multiplicities
(computed by scattering ones from every subdomain and summing), overlap
zones, neighbor lists, and the geometry statistics (subdomain diameter H and
overlap width delta) used for eigenvector selection and condition bounds.

Multiplicity counting is a local reduction here, but it is organized as the
same scatter/sum exchange a message-passing implementation would use.
"""

import csv
import warnings
from dataclasses import dataclass

import numpy as np


class PouCoverageError(RuntimeError):
    """A free dof ended up with zero total partition-of-unity weight."""


class DegenerateOverlapWarning(UserWarning):
    """Overlap grew a subdomain to the whole domain in a multi-domain split."""


@dataclass
class Subdomain:
    """One overlapping subdomain: element boxes are half-open (ex0, ex1, ey0, ey1)."""

    index: int
    owned_box: tuple
    box: tuple
    owned_elements: np.ndarray
    elements: np.ndarray
    nodes: np.ndarray
    dofs: np.ndarray
    artificial_mask: np.ndarray
    neighbors: tuple = ()
    diameter: float = 0.0
    overlap_width: float = 0.0

    @property
    def size(self):
        return self.dofs.size


def _box_elements(mesh, box):
    ex0, ex1, ey0, ey1 = box
    ex, ey = np.meshgrid(np.arange(ex0, ex1), np.arange(ey0, ey1))
    return (ey * mesh.nx + ex).ravel()


def _box_nodes(mesh, box):
    ex0, ex1, ey0, ey1 = box
    i, j = np.meshgrid(np.arange(ex0, ex1 + 1), np.arange(ey0, ey1 + 1))
    return (j * (mesh.nx + 1) + i).ravel()


class Decomposition:
    """Immutable overlapping decomposition; all queries are read-only."""

    def __init__(self, mesh, dofmap, subdomains, overlap_layers=None):
        self.mesh = mesh
        self.dofmap = dofmap
        self.subdomains = list(subdomains)
        self.overlap_layers = overlap_layers
        self.dof_multiplicity = np.zeros(dofmap.ndof, dtype=int)
        self.element_multiplicity = np.zeros(mesh.num_elements, dtype=int)
        for sub in self.subdomains:
            self.dof_multiplicity[sub.dofs] += 1
            self.element_multiplicity[sub.elements] += 1
        self._finalize_geometry()

    @property
    def num_subdomains(self):
        return len(self.subdomains)

    def _finalize_geometry(self):
        mesh, subs = self.mesh, self.subdomains
        hx, hy = mesh.hx, mesh.hy
        for sub in subs:
            nbrs = []
            for other in subs:
                if other.index == sub.index:
                    continue
                if np.intersect1d(sub.dofs, other.dofs, assume_unique=True).size:
                    nbrs.append(other.index)
            sub.neighbors = tuple(sorted(nbrs))
            ex0, ex1, ey0, ey1 = sub.box
            sub.diameter = float(np.hypot((ex1 - ex0) * hx, (ey1 - ey0) * hy))
            # narrowest overlap over the sides shared with an edge-adjacent
            # neighbor: the grown boxes' overlap extent across the shared seam
            ox0, ox1, oy0, oy1 = sub.owned_box
            widths = []
            for k in sub.neighbors:
                other = subs[k]
                kx0, kx1, ky0, ky1 = other.owned_box
                gx = min(ex1, other.box[1]) - max(ex0, other.box[0])
                gy = min(ey1, other.box[3]) - max(ey0, other.box[2])
                x_adjacent = (ox1 == kx0 or kx1 == ox0) and (
                    min(oy1, ky1) - max(oy0, ky0) > 0
                )
                y_adjacent = (oy1 == ky0 or ky1 == oy0) and (
                    min(ox1, kx1) - max(ox0, kx0) > 0
                )
                if x_adjacent and gx > 0:
                    widths.append(gx * hx)
                if y_adjacent and gy > 0:
                    widths.append(gy * hy)
            sub.overlap_width = float(min(widths)) if widths else sub.diameter

    def restrict(self, j, v):
        """Pick subdomain j's dofs out of a global vector."""
        return np.asarray(v)[self.subdomains[j].dofs]

    def prolong(self, j, v_local):
        """Scatter a local vector into a zero-extended global one."""
        v_local = np.asarray(v_local)
        sub = self.subdomains[j]
        if v_local.shape[0] != sub.dofs.size:
            raise ValueError(
                f"local vector has length {v_local.shape[0]}, "
                f"subdomain {j} has {sub.dofs.size} dofs"
            )
        out = np.zeros(self.dofmap.ndof, dtype=v_local.dtype)
        out[sub.dofs] = v_local
        return out

    def overlap_elements(self, j):
        """Elements of subdomain j shared with at least one other subdomain."""
        elems = self.subdomains[j].elements
        return elems[self.element_multiplicity[elems] > 1]

    def overlap_zone_dofs(self, j):
        dofs = self.subdomains[j].dofs
        return dofs[self.dof_multiplicity[dofs] > 1]


def build_decomposition(mesh, dofmap, px, py, overlap_layers=1):
    """px-by-py grid of subdomains grown by `overlap_layers` element layers.

    The nonoverlapping boxes partition the element grid exactly (balanced
    integer splits); growth is clipped at the domain boundary.
    """
    px, py, ell = int(px), int(py), int(overlap_layers)
    if px < 1 or py < 1 or px > mesh.nx or py > mesh.ny:
        raise ValueError(
            f"subdomain grid {px}x{py} does not fit the {mesh.nx}x{mesh.ny} element grid"
        )
    if ell < 1:
        raise ValueError("overlap_layers must be >= 1")
    bx = [(i * mesh.nx) // px for i in range(px + 1)]
    by = [(j * mesh.ny) // py for j in range(py + 1)]
    boxes = []
    for jy in range(py):
        for jx in range(px):
            owned = (bx[jx], bx[jx + 1], by[jy], by[jy + 1])
            grown = (
                max(0, owned[0] - ell),
                min(mesh.nx, owned[1] + ell),
                max(0, owned[2] - ell),
                min(mesh.ny, owned[3] + ell),
            )
            boxes.append((owned, grown))
    if px * py > 1 and any(g == (0, mesh.nx, 0, mesh.ny) for _, g in boxes):
        warnings.warn(
            "overlap layers grow at least one subdomain to the whole domain",
            DegenerateOverlapWarning,
        )
    return decomposition_from_boxes(mesh, dofmap, boxes, overlap_layers=ell)


def decomposition_from_boxes(mesh, dofmap, boxes, overlap_layers=None):
    """Decomposition from explicit (owned_box, grown_box) element boxes."""
    subs = []
    for j, (owned, grown) in enumerate(boxes):
        nodes = _box_nodes(mesh, grown)
        dofs = np.sort(dofmap.node_dofs(nodes).ravel())
        gi = nodes % (mesh.nx + 1)
        gj = nodes // (mesh.nx + 1)
        ex0, ex1, ey0, ey1 = grown
        art = (
            ((gi == ex0) & (ex0 > 0))
            | ((gi == ex1) & (ex1 < mesh.nx))
            | ((gj == ey0) & (ey0 > 0))
            | ((gj == ey1) & (ey1 < mesh.ny))
        )
        art_mask = np.repeat(art, dofmap.ndof_per_node)
        subs.append(
            Subdomain(
                index=j,
                owned_box=tuple(owned),
                box=tuple(grown),
                owned_elements=_box_elements(mesh, owned),
                elements=_box_elements(mesh, grown),
                nodes=nodes,
                dofs=dofs,
                artificial_mask=art_mask,
            )
        )
    return Decomposition(mesh, dofmap, subs, overlap_layers=overlap_layers)


def detect_overlap_zone(decomp):
    """Per-subdomain dof sets shared with other subdomains, found by adding
    a vector of ones from every subdomain and marking sums greater than one."""
    count = np.zeros(decomp.dofmap.ndof)
    for j in range(decomp.num_subdomains):
        count += decomp.prolong(j, np.ones(decomp.subdomains[j].size))
    return [sub.dofs[count[sub.dofs] > 1] for sub in decomp.subdomains]


def coverage_constant(decomp):
    """k0: the maximum number of subdomains covering any dof."""
    return int(decomp.dof_multiplicity.max())


@dataclass
class PartitionOfUnity:
    """Per-subdomain diagonal weights in [0, 1] that sum to one across
    subdomains at every free dof and vanish at Dirichlet and artificial
    ("processor") boundary dofs."""

    kind: str
    weights: list

    def diagonal(self, j):
        return self.weights[j]


def _normalize_weights(decomp, weights, dirichlet_dofs, kind):
    dirichlet = np.zeros(decomp.dofmap.ndof, dtype=bool)
    dirichlet[np.asarray(dirichlet_dofs, dtype=int)] = True
    for sub, w in zip(decomp.subdomains, weights):
        w[sub.artificial_mask] = 0.0
        w[dirichlet[sub.dofs]] = 0.0
    total = np.zeros(decomp.dofmap.ndof)
    for j, w in enumerate(weights):
        total += decomp.prolong(j, w)
    covered = decomp.dof_multiplicity > 0
    bad = covered & ~dirichlet & (total <= 0.0)
    if np.any(bad):
        raise PouCoverageError(
            f"{int(bad.sum())} free dofs have zero total weight (first: {int(np.nonzero(bad)[0][0])})"
        )
    for sub, w in zip(decomp.subdomains, weights):
        t = total[sub.dofs]
        nz = t > 0.0
        w[nz] /= t[nz]
    return PartitionOfUnity(kind, weights)


def standard_pou(decomp, dirichlet_dofs=()):
    """Multiplicity-based weights: 1/multiplicity, zeroed on Dirichlet and
    artificial boundaries, renormalized to sum one at each remaining dof."""
    weights = [
        1.0 / decomp.dof_multiplicity[sub.dofs].astype(float)
        for sub in decomp.subdomains
    ]
    return _normalize_weights(decomp, weights, dirichlet_dofs, "standard")


def sarkis_pou(decomp, dirichlet_dofs=()):
    """Distance-based weights: proportional to the discrete distance to the
    subdomain's artificial boundary (in element layers), normalized per dof.
    A subdomain without artificial boundary gets constant weight."""
    mesh = decomp.mesh
    k = decomp.dofmap.ndof_per_node
    weights = []
    for sub in decomp.subdomains:
        ex0, ex1, ey0, ey1 = sub.box
        gi = sub.nodes % (mesh.nx + 1)
        gj = sub.nodes // (mesh.nx + 1)
        d = np.full(sub.nodes.size, np.inf)
        if ex0 > 0:
            d = np.minimum(d, gi - ex0)
        if ex1 < mesh.nx:
            d = np.minimum(d, ex1 - gi)
        if ey0 > 0:
            d = np.minimum(d, gj - ey0)
        if ey1 < mesh.ny:
            d = np.minimum(d, ey1 - gj)
        d[np.isinf(d)] = 1.0
        weights.append(np.repeat(d.astype(float), k))
    return _normalize_weights(decomp, weights, dirichlet_dofs, "sarkis")


def restrict(decomp, j, v):
    return decomp.restrict(j, v)


def prolong(decomp, j, v_local):
    return decomp.prolong(j, v_local)


def dump_multiplicity_csv(path, decomp):
    coords = decomp.dofmap.dof_coords()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dof", "x", "y", "multiplicity"])
        for dof, mult in enumerate(decomp.dof_multiplicity):
            writer.writerow([dof, repr(float(coords[dof, 0])), repr(float(coords[dof, 1])), int(mult)])


def dump_pou_csv(path, decomp, pou):
    """Per-subdomain weight vectors for plotting, one row per (subdomain, dof)."""
    coords = decomp.dofmap.dof_coords()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dof", "x", "y", "subdomain", "mu"])
        for j, sub in enumerate(decomp.subdomains):
            for dof, mu in zip(sub.dofs, pou.weights[j]):
                writer.writerow([int(dof), repr(float(coords[dof, 0])), repr(float(coords[dof, 1])), j, repr(float(mu))])
