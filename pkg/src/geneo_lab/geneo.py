"""Spectral coarse space built from per-subdomain generalized eigenproblems.

For each subdomain j the pencil is A_j p = lambda (X_j A_j^o X_j) p, where A_j
is the Neumann operator on the overlapping subdomain (global Dirichlet
constraints only) and A_j^o is assembled on the subdomain's overlap elements
alone; X_j holds the partition-of-unity weights. The eigenvectors of the
smallest eigenvalues, weighted by X_j and l2-normalized, form the subdomain
basis; stitched together they span the coarse space, whose operator is
assembled blockwise by exchanging basis vectors between neighboring
subdomains (emulated here with per-message counters).
"""

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .fem import assemble_local
from .linalg.eigen import EigenPairs, PartialConvergenceError, fix_signs, shift_invert_lanczos
from .linalg.factorize import SingularMatrixError
from .linalg.sparse import as_csr, frobenius

log = logging.getLogger(__name__)


@dataclass
class SelectionRule:
    """How many eigenvectors to keep per subdomain: the spectral threshold
    lambda_{m+1} > tau * delta_j/H_j, or a fixed count."""

    mode: str = "threshold"
    tau: float = 1.0
    count: int | None = None
    max_evs: int = 48

    def __post_init__(self):
        if self.mode not in ("threshold", "fixed"):
            raise ValueError(f"unknown selection mode {self.mode!r}")
        if self.mode == "fixed" and (self.count is None or self.count < 0):
            raise ValueError("fixed selection needs a nonnegative count")
        if self.tau <= 0:
            raise ValueError("threshold scale must be positive")

    @classmethod
    def fixed(cls, count, max_evs=48):
        return cls(mode="fixed", count=count, max_evs=max_evs)

    @classmethod
    def threshold(cls, tau=1.0, max_evs=48):
        return cls(mode="threshold", tau=tau, max_evs=max_evs)


def select_mj(eigenvalues, overlap_width, diameter, threshold_scale=1.0):
    """Smallest m with lambda_{m+1} > tau * delta/H.

    Returns (m, saturated); saturated means no computed eigenvalue exceeded
    the threshold, in which case m equals the number of computed eigenvalues.
    """
    eigenvalues = np.asarray(eigenvalues, dtype=float)
    if eigenvalues.size == 0:
        raise ValueError("empty eigenvalue list")
    if overlap_width <= 0 or diameter <= 0 or threshold_scale <= 0:
        raise ValueError("overlap width, diameter and threshold scale must be positive")
    threshold = threshold_scale * overlap_width / diameter
    above = np.nonzero(eigenvalues > threshold)[0]
    if above.size == 0:
        return int(eigenvalues.size), True
    return int(above[0]), False


def assemble_geneo_pencil(decomp, mesh, field_, bc, dofmap, pou, j):
    """(A_j, B_j) over subdomain j's dofs; B_j = X_j A_j^o X_j with A_j^o
    assembled only on the overlap elements. Both symmetric PSD."""
    sub = decomp.subdomains[j]
    a_j, _ = assemble_local(mesh, field_, bc, sub.elements, dofmap, dofs=sub.dofs)
    overlap = decomp.overlap_elements(j)
    n = sub.dofs.size
    if overlap.size == 0:
        return a_j, sp.csr_matrix((n, n))
    a_o, _ = assemble_local(
        mesh, field_, bc, overlap, dofmap, dofs=sub.dofs, constrained_diag=0.0
    )
    x = sp.diags(pou.weights[j])
    b_j = as_csr(x @ a_o @ x)
    return a_j, b_j


def subdomain_eigenpairs(a, b, count, tol=1e-8, sigma=None, ncv=None, rng=None):
    """Up to `count` smallest finite pencil eigenpairs.

    Returns (pairs, exhausted); exhausted means the finite spectrum ran out
    before `count` pairs (e.g. the overlap is empty and B vanishes)."""
    n = a.shape[0]
    if frobenius(b) == 0.0:
        return EigenPairs(np.zeros(0), np.zeros((n, 0))), True
    count = min(int(count), n)
    try:
        pairs = shift_invert_lanczos(a, b, sigma=sigma, m=count, tol=tol, ncv=ncv, rng=rng)
        return pairs, False
    except PartialConvergenceError as err:
        if err.exhausted and err.pairs is not None:
            return err.pairs, True
        raise


@dataclass
class GeneoBasis:
    """Per-subdomain eigenvector bases: X_j-weighted, l2-normalized columns,
    with the ascending eigenvalues kept alongside (including the first
    unused one for bound checks)."""

    vectors: list
    eigenvalues: list
    counts: list
    next_eigenvalue: list
    saturated: list

    @property
    def dim(self):
        return int(sum(self.counts))

    def trimmed(self, count):
        """Basis restricted to at most `count` vectors per subdomain (the
        eigenpairs are nested, so this reuses the computed spectra)."""
        vectors, counts, nxt = [], [], []
        for j, full in enumerate(self.vectors):
            m = min(count, self.counts[j])
            vectors.append(full[:, :m])
            counts.append(m)
            vals = self.eigenvalues[j]
            if m < self.counts[j]:
                nxt.append(float(vals[m]))
            elif len(vals) > m:
                nxt.append(float(vals[m]))
            else:
                nxt.append(self.next_eigenvalue[j])
        return GeneoBasis(vectors, self.eigenvalues, counts, nxt, list(self.saturated))


def build_geneo_basis(decomp, pencils, pou, selection, tol=1e-8, seed=0, ncv=None, sigma=None):
    """Solve every subdomain pencil and keep the selected eigenvectors.

    `pencils` is the list of (A_j, B_j) pairs. Fixed-count selection requests
    one extra pair so lambda_{m_j+1} is always available; threshold selection
    grows the request until an eigenvalue clears the threshold or max_evs is
    hit (saturation).
    """
    seed_base = [int(s) for s in np.atleast_1d(seed)]
    vectors, eigenvalues, counts, nxt, saturated = [], [], [], [], []
    for j, (a_j, b_j) in enumerate(pencils):
        sub = decomp.subdomains[j]
        rng = np.random.default_rng([*seed_base, j])
        try:
            if selection.mode == "fixed":
                want = min(selection.count + 1, selection.max_evs + 1)
                pairs, exhausted = subdomain_eigenpairs(
                    a_j, b_j, want, tol=tol, sigma=sigma, ncv=ncv, rng=rng
                )
                m_j = min(selection.count, len(pairs))
                sat = False
            else:
                want = min(8, selection.max_evs + 1)
                while True:
                    pairs, exhausted = subdomain_eigenpairs(
                        a_j, b_j, want, tol=tol, sigma=sigma, ncv=ncv, rng=rng
                    )
                    threshold = selection.tau * sub.overlap_width / sub.diameter
                    if (
                        exhausted
                        or want >= selection.max_evs + 1
                        or (len(pairs) and pairs.values.max() > threshold)
                    ):
                        break
                    want = min(want * 2, selection.max_evs + 1)
                if len(pairs) == 0:
                    m_j, sat = 0, False
                else:
                    m_j, sat = select_mj(
                        pairs.values, sub.overlap_width, sub.diameter, selection.tau
                    )
        except PartialConvergenceError as err:
            raise PartialConvergenceError(
                f"subdomain {j}: {err}", err.num_converged, err.pairs, err.exhausted
            ) from err

        weighted = pou.weights[j][:, None] * pairs.vectors[:, :m_j]
        norms = np.linalg.norm(weighted, axis=0)
        if np.any(norms <= 1e-12):
            raise RuntimeError(
                f"subdomain {j}: partition-of-unity weighting annihilated a kept eigenvector"
            )
        weighted = weighted / norms
        vectors.append(fix_signs(weighted))
        eigenvalues.append(np.array(pairs.values))
        counts.append(int(m_j))
        if len(pairs) > m_j:
            nxt.append(float(pairs.values[m_j]))
        elif exhausted:
            nxt.append(np.inf)
        else:
            nxt.append(np.nan)
        saturated.append(bool(sat))
    return GeneoBasis(vectors, eigenvalues, counts, nxt, saturated)


@dataclass
class ExchangeStats:
    """Counters of the emulated neighbor exchange during coarse assembly."""

    messages: int = 0
    vectors: int = 0
    bytes: int = 0


def _stitch_restriction(decomp, local_basis):
    """Sparse R_H whose rows are the prolonged stitched basis vectors."""
    counts = [v.shape[1] for v in local_basis]
    offsets = np.concatenate([[0], np.cumsum(counts)]).astype(int)
    ndof = decomp.dofmap.ndof
    rows, cols, data = [], [], []
    for j, basis in enumerate(local_basis):
        dofs = decomp.subdomains[j].dofs
        for k in range(basis.shape[1]):
            rows.append(np.full(dofs.size, offsets[j] + k))
            cols.append(dofs)
            data.append(basis[:, k])
    if not rows:
        return sp.csr_matrix((0, ndof))
    return sp.csr_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(int(offsets[-1]), ndof),
    )


class CoarseSpace:
    """Stitched coarse basis with its dense Galerkin operator, factorized.

    The basis is stored both per subdomain (local columns) and as the sparse
    rows of the restriction operator R_H (each row a prolonged stitched
    vector). Blocks between non-neighboring subdomains are exactly zero.
    """

    def __init__(self, decomp, local_basis, matrix, stats=None, pruned=()):
        self.decomp = decomp
        self.local_basis = local_basis
        counts = [v.shape[1] for v in local_basis]
        self.offsets = np.concatenate([[0], np.cumsum(counts)]).astype(int)
        self.dim = int(self.offsets[-1])
        self.matrix = matrix
        self.stats = stats or ExchangeStats()
        self.pruned = tuple(pruned)
        self.restriction = self._build_restriction()
        if self.dim:
            try:
                self._cho = scipy.linalg.cho_factor(matrix)
            except np.linalg.LinAlgError as exc:
                raise SingularMatrixError(f"coarse matrix not positive definite: {exc}") from exc
        else:
            self._cho = None

    def _build_restriction(self):
        return _stitch_restriction(self.decomp, self.local_basis)

    def restrict(self, v):
        v = np.asarray(v)
        if v.shape[0] != self.restriction.shape[1]:
            raise ValueError(f"vector has length {v.shape[0]}, expected {self.restriction.shape[1]}")
        return self.restriction @ v

    def prolong(self, v_h):
        v_h = np.asarray(v_h)
        if v_h.shape[0] != self.dim:
            raise ValueError(f"coarse vector has length {v_h.shape[0]}, expected {self.dim}")
        return self.restriction.T @ v_h

    def apply_inverse(self, v_h):
        if self.dim == 0:
            return np.zeros(0)
        return scipy.linalg.cho_solve(self._cho, v_h)


def subdomain_rows(a, decomp):
    """Per-subdomain row slices of the global matrix (the locally gathered
    rows each owner uses during coarse assembly)."""
    a = as_csr(a)
    return [a[sub.dofs, :] for sub in decomp.subdomains]


def assemble_coarse(decomp, a_rows, basis, prune_rtol=1e-12):
    """Assemble the coarse operator blockwise via neighbor exchange.

    Owner i computes its row block from its own matrix rows and the basis
    vectors received from each neighbor (one message per ordered neighbor
    pair, all of a subdomain's vectors in one step). Equals the direct
    triple product R_H A R_H' up to roundoff. Coarse basis columns with a
    vanishing diagonal (annihilated by Dirichlet elimination) are pruned
    with a warning.
    """
    if len(a_rows) != decomp.num_subdomains or len(basis.vectors) != decomp.num_subdomains:
        raise ValueError("matrix rows / basis do not match the decomposition")
    counts = [v.shape[1] for v in basis.vectors]
    for j, v in enumerate(basis.vectors):
        if v.shape[0] != decomp.subdomains[j].size:
            raise ValueError(f"subdomain {j}: basis rows do not match its dof count")
    offsets = np.concatenate([[0], np.cumsum(counts)]).astype(int)
    dim = int(offsets[-1])
    a_h = np.zeros((dim, dim))
    stats = ExchangeStats()
    for i, sub in enumerate(decomp.subdomains):
        rows_i = a_rows[i]
        for j in (i, *sub.neighbors):
            other = decomp.subdomains[j]
            if j != i:
                stats.messages += 1
                stats.vectors += counts[j]
                stats.bytes += counts[j] * other.size * 8
            if counts[i] == 0 or counts[j] == 0:
                continue
            block = basis.vectors[i].T @ (rows_i[:, other.dofs] @ basis.vectors[j])
            a_h[offsets[i] : offsets[i] + counts[i], offsets[j] : offsets[j] + counts[j]] = block
    asym = np.abs(a_h - a_h.T).max() if dim else 0.0
    scale = np.abs(a_h).max() if dim else 0.0
    if asym > 1e-10 * max(scale, 1e-300):
        raise RuntimeError(f"coarse matrix asymmetry {asym:.3e} beyond roundoff")
    a_h = 0.5 * (a_h + a_h.T)

    pruned = ()
    local_basis = list(basis.vectors)
    if dim:
        diag = np.diag(a_h)
        dead = diag <= prune_rtol * max(diag.max(), 1e-300)
        if np.any(dead):
            pruned = tuple(np.nonzero(dead)[0])
            log.warning("pruning %d null coarse columns: %s", len(pruned), pruned)
            keep = ~dead
            a_h = a_h[keep][:, keep]
            local_basis = [
                v[:, keep[offsets[j] : offsets[j] + counts[j]]]
                for j, v in enumerate(basis.vectors)
            ]
    return CoarseSpace(decomp, local_basis, a_h, stats=stats, pruned=pruned)


def coarse_space_from_vectors(decomp, local_basis, a):
    """CoarseSpace from explicit per-subdomain vectors, with the operator
    taken as the direct Galerkin product against the given global matrix."""
    r_h = _stitch_restriction(decomp, local_basis)
    matrix = (r_h @ as_csr(a) @ r_h.T).toarray()
    matrix = 0.5 * (matrix + matrix.T)
    return CoarseSpace(decomp, local_basis, matrix)


def coarse_restrict(coarse, v_h):
    """(R_H v)_i = phi_i . v: inner products against every basis vector."""
    return coarse.restrict(v_h)


def coarse_prolong(coarse, v_coarse):
    """R_H' v_H = sum_i phi_i (v_H)_i."""
    return coarse.prolong(v_coarse)


def export_basis_csv(directory, decomp, basis):
    """One CSV per subdomain: columns dof, x, y, vector, value."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    coords = decomp.dofmap.dof_coords()
    paths = []
    for j, vectors in enumerate(basis.vectors):
        path = directory / f"basis_s{j:03d}.csv"
        dofs = decomp.subdomains[j].dofs
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["dof", "x", "y", "vector", "value"])
            for k in range(vectors.shape[1]):
                for dof, value in zip(dofs, vectors[:, k]):
                    writer.writerow(
                        [int(dof), repr(float(coords[dof, 0])), repr(float(coords[dof, 1])), k, repr(float(value))]
                    )
        paths.append(path)
    return paths
