"""Additive Schwarz preconditioning, PCG, and the coarse-only solve.

The one-level preconditioner sums zero-extended subdomain solves with the
global matrix restricted to each subdomain's dofs (Dirichlet local problems);
the two-level variant adds the coarse-space solve R_H' A_H^-1 R_H. PCG stops
on the preconditioned residual norm sqrt(r' M^-1 r) relative to its initial
value and reports a condition-number estimate computed from the CG
coefficients via the associated Lanczos tridiagonal.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .fem import energy_norm
from .linalg.eigen import estimate_extreme_ritz
from .linalg.factorize import factorize
from .linalg.sparse import as_csr

LEVELS = ("one_level", "two_level", "coarse_only")


class PreconditionerStateError(RuntimeError):
    """Preconditioner used before its factorizations exist."""


class NotSpdError(RuntimeError):
    """CG detected an indefinite operator or preconditioner."""


class InsufficientEigenpairsError(ValueError):
    """A bound check needs lambda_{m_j+1} values that were not computed."""


class SchwarzPreconditioner:
    """Additive Schwarz preconditioner; level is one of LEVELS.

    Local blocks are factorized once at construction and the object is
    immutable afterwards; applications are linear and symmetric.
    """

    def __init__(self, a, decomp=None, level="two_level", coarse=None, local_factors=None):
        if level not in LEVELS:
            raise ValueError(f"unknown level {level!r}, expected one of {LEVELS}")
        if level != "coarse_only" and decomp is None:
            raise PreconditionerStateError("subdomain solves need a decomposition")
        if level != "one_level" and coarse is None:
            raise PreconditionerStateError(f"{level} needs an assembled coarse space")
        self.a = as_csr(a)
        self.n = self.a.shape[0]
        self.level = level
        self.decomp = decomp
        self.coarse = coarse
        self.local_factors = []
        if level != "coarse_only":
            if local_factors is not None:
                if len(local_factors) != decomp.num_subdomains:
                    raise PreconditionerStateError("local factorization list does not match")
                self.local_factors = list(local_factors)
            else:
                self.local_factors = local_factorizations(self.a, decomp)

    def apply(self, r):
        """z = sum_j R_j' A_j^-1 R_j r (+ coarse term for two_level)."""
        r = np.asarray(r, dtype=float)
        if r.shape[0] != self.n:
            raise ValueError(f"residual has length {r.shape[0]}, expected {self.n}")
        z = np.zeros(self.n)
        if self.level != "coarse_only":
            for sub, fact in zip(self.decomp.subdomains, self.local_factors):
                z[sub.dofs] += fact.solve(r[sub.dofs])
        if self.level != "one_level" and self.coarse.dim > 0:
            z += self.coarse.prolong(self.coarse.apply_inverse(self.coarse.restrict(r)))
        return z


def local_factorizations(a, decomp):
    """Factorize every subdomain block A_j = R_j A R_j' of the global matrix."""
    a = as_csr(a)
    return [factorize(a[sub.dofs, :][:, sub.dofs]) for sub in decomp.subdomains]


def apply_preconditioner(preconditioner, r):
    return preconditioner.apply(r)


@dataclass
class SolveReport:
    """Iteration record of one PCG solve. `residuals` holds the relative
    preconditioned residual norms as used by the stopping test, recorded
    as-is; `kappa_is_lower_bound` flags estimates from fewer than 10
    iterations."""

    iterations: int
    converged: bool
    residuals: list
    kappa_est: float | None = None
    kappa_is_lower_bound: bool = True
    dim_coarse: int = 0
    timings: dict = field(default_factory=dict)
    coefficients: list = field(default_factory=list)


def pcg(a, b, preconditioner=None, tol=1e-5, max_iter=1000, x0=None):
    """Preconditioned conjugate gradients; returns (x, SolveReport)."""
    b = np.asarray(b, dtype=float)
    x = np.zeros(b.size) if x0 is None else np.array(x0, dtype=float)
    apply_m = (lambda v: v) if preconditioner is None else preconditioner.apply
    t0 = time.perf_counter()
    r = b - a @ x
    z = apply_m(r)
    rz = float(r @ z)
    if rz < 0.0:
        raise NotSpdError(f"preconditioner is not positive (r'M^-1r = {rz:.3e})")
    norm0 = np.sqrt(rz)
    coefficients = []
    if norm0 == 0.0:
        report = SolveReport(0, True, [0.0], timings={"cg_s": time.perf_counter() - t0})
        return x, report
    residuals = [1.0]
    p = z.copy()
    beta = 0.0
    converged = False
    iterations = 0
    for k in range(max_iter):
        ap = a @ p
        pap = float(p @ ap)
        if pap <= 0.0:
            raise NotSpdError(f"matrix is not positive definite (p'Ap = {pap:.3e})")
        alpha = rz / pap
        coefficients.append((alpha, beta))
        x += alpha * p
        r -= alpha * ap
        z = apply_m(r)
        rz_new = float(r @ z)
        if rz_new < 0.0:
            raise NotSpdError(f"preconditioner is not positive (r'M^-1r = {rz_new:.3e})")
        beta = rz_new / rz
        rz = rz_new
        iterations = k + 1
        rel = np.sqrt(rz) / norm0
        residuals.append(rel)
        if rel <= tol:
            converged = True
            break
        p = z + beta * p
    kappa = None
    if len(coefficients) >= 2:
        lo, hi = estimate_extreme_ritz(coefficients)
        kappa = hi / lo if lo > 0 else np.inf
    report = SolveReport(
        iterations,
        converged,
        residuals,
        kappa_est=kappa,
        kappa_is_lower_bound=iterations < 10,
        dim_coarse=getattr(getattr(preconditioner, "coarse", None), "dim", 0),
        timings={"cg_s": time.perf_counter() - t0},
        coefficients=coefficients,
    )
    return x, report


def coarse_solve(coarse, b):
    """x = R_H' A_H^-1 R_H b: the Galerkin solution in the coarse space
    (the a-orthogonal projection of the exact solution)."""
    b = np.asarray(b, dtype=float)
    if coarse.dim == 0:
        return np.zeros(b.size)
    return coarse.prolong(coarse.apply_inverse(coarse.restrict(b)))


@dataclass
class BoundReport:
    """Measured coarse-approximation error against its spectral bound."""

    error: float
    bound: float
    ratio: float
    violated: bool
    exact_energy: float
    relative_error: float


def check_error_bound(a, coarse, v, k0, next_eigenvalues):
    """Compare ||v - v_H||_a with k0 (1 + 1/min_j lambda_{m_j+1})^(1/2) |v|_a,
    where v_H is the coarse Galerkin projection of v."""
    lam = np.asarray(
        [np.inf if x is None else float(x) for x in next_eigenvalues], dtype=float
    )
    if lam.size == 0 or np.any(np.isnan(lam)):
        raise InsufficientEigenpairsError("lambda_{m_j+1} unavailable for some subdomain")
    lam_min = float(lam.min())
    if lam_min <= 0.0:
        raise InsufficientEigenpairsError(f"lambda_{{m_j+1}} must be positive, got {lam_min}")
    v = np.asarray(v, dtype=float)
    exact = energy_norm(a, v)
    bound = k0 * np.sqrt(1.0 + 1.0 / lam_min) * exact
    v_h = coarse_solve(coarse, a @ v)
    error = energy_norm(a, v - v_h)
    if bound > 0.0:
        ratio = error / bound
    else:
        ratio = 0.0 if error == 0.0 else np.inf
    return BoundReport(
        error=error,
        bound=bound,
        ratio=ratio,
        violated=ratio > 1.0,
        exact_energy=exact,
        relative_error=error / exact if exact > 0 else 0.0,
    )


def theoretical_condition_bound(k0, diameters, overlap_widths):
    """(1 + k0) [2 + k0 (2 k0 + 1) max_j (1 + H_j / delta_j)]."""
    h = np.atleast_1d(np.asarray(diameters, dtype=float))
    d = np.atleast_1d(np.asarray(overlap_widths, dtype=float))
    if h.size != d.size or h.size == 0:
        raise ValueError("need matching nonempty H and delta lists")
    if k0 < 1 or np.any(h <= 0) or np.any(d <= 0):
        raise ValueError("k0 >= 1 and positive H, delta required")
    worst = float(np.max(1.0 + h / d))
    return (1.0 + k0) * (2.0 + k0 * (2.0 * k0 + 1.0) * worst)
