"""Sparse direct factorization for subdomain and shifted-pencil solves.

Backed by SuperLU (scipy.sparse.linalg.splu) with its fill-reducing column
ordering. The handle is immutable after construction and safe to share
read-only across threads.
"""

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .sparse import as_csr


class SingularMatrixError(RuntimeError):
    """Factorization hit a zero pivot (matrix singular to working precision)."""

    def __init__(self, message, pivot_index=None):
        super().__init__(message)
        self.pivot_index = pivot_index


class Factorization:
    """Reusable direct solver handle for A - shift*S (S = identity by default)."""

    def __init__(self, lu, n, shift):
        self._lu = lu
        self.n = n
        self.shift = shift

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.n:
            raise ValueError(f"rhs has length {b.shape[0]}, expected {self.n}")
        return self._lu.solve(b)


def factorize(a, shift=0.0, shift_matrix=None, pivot_rtol=1e-14):
    """Factorize A - shift*I (or A - shift*B when shift_matrix is given).

    Raises SingularMatrixError on an exactly or numerically singular matrix,
    carrying the offending pivot index when it can be determined.
    """
    a = as_csr(a)
    n = a.shape[0]
    if shift != 0.0:
        s = as_csr(shift_matrix) if shift_matrix is not None else sp.identity(n, format="csr")
        m = (a - shift * s).tocsc()
    else:
        m = a.tocsc()
    try:
        lu = splu(m)
    except RuntimeError as exc:
        raise SingularMatrixError(f"sparse factorization failed: {exc}") from exc
    u = np.abs(lu.U.diagonal())
    worst = int(np.argmin(u))
    if u[worst] <= pivot_rtol * max(u.max(), 1e-300):
        raise SingularMatrixError(
            f"pivot {worst} is {u[worst]:.3e}, below {pivot_rtol:.1e} of the largest pivot",
            pivot_index=worst,
        )
    return Factorization(lu, n, shift)
