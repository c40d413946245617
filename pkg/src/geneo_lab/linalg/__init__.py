"""Sparse matrices, direct factorization, and generalized eigensolvers."""

from .eigen import (
    EigenPairs,
    InsufficientDataError,
    PartialConvergenceError,
    dense_generalized_eig,
    estimate_extreme_ritz,
    fix_signs,
    shift_invert_lanczos,
    shift_invert_map,
)
from .factorize import Factorization, SingularMatrixError, factorize
from .sparse import (
    SymmetryError,
    as_csr,
    check_symmetric,
    frobenius,
    is_structurally_symmetric,
    mm_read,
    mm_write,
)

__all__ = [
    "EigenPairs",
    "Factorization",
    "InsufficientDataError",
    "PartialConvergenceError",
    "SingularMatrixError",
    "SymmetryError",
    "as_csr",
    "check_symmetric",
    "dense_generalized_eig",
    "estimate_extreme_ritz",
    "factorize",
    "fix_signs",
    "frobenius",
    "is_structurally_symmetric",
    "mm_read",
    "mm_write",
    "shift_invert_lanczos",
    "shift_invert_map",
]
