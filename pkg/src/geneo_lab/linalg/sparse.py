"""CSR helpers and matrix-market I/O shared across the solver stack."""

import numpy as np
import scipy.io
import scipy.sparse as sp


class SymmetryError(ValueError):
    """Matrix is not symmetric within the requested tolerance."""


def as_csr(a):
    """Canonical float64 CSR: sorted column indices, duplicates summed."""
    a = sp.csr_matrix(a, dtype=float, copy=False)
    a.sum_duplicates()
    a.sort_indices()
    return a


def frobenius(a):
    if sp.issparse(a):
        return float(np.sqrt((a.data**2).sum()))
    return float(np.linalg.norm(a, "fro"))


def is_structurally_symmetric(a):
    a = as_csr(a)
    t = as_csr(a.T)
    return (
        np.array_equal(a.indptr, t.indptr)
        and np.array_equal(a.indices, t.indices)
    )


def check_symmetric(a, tol=1e-12):
    """Raise SymmetryError when max|A - A'| > tol * max|A|."""
    if sp.issparse(a):
        diff = abs(a - a.T)
        asym = diff.max() if diff.nnz else 0.0
        scale = abs(a).max() if a.nnz else 0.0
    else:
        a = np.asarray(a)
        asym = float(np.abs(a - a.T).max()) if a.size else 0.0
        scale = float(np.abs(a).max()) if a.size else 0.0
    if asym > tol * max(scale, 1e-300):
        raise SymmetryError(f"asymmetry {asym:.3e} exceeds {tol:.1e} * max|A| = {tol * scale:.3e}")


def mm_write(path, a, comment=""):
    """ASCII matrix-market coordinate export (1-based indices)."""
    scipy.io.mmwrite(str(path), sp.coo_matrix(a), comment=comment)


def mm_read(path):
    return as_csr(scipy.io.mmread(str(path)))
