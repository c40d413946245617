"""Solvers for the symmetric generalized eigenproblem A p = lambda B p with
positive semi-definite A and B.

The dense path reduces the pencil on the range of B (Schur complement of the
B-null block) and serves as the reference oracle; directions of null(B) that
carry energy in A are "infinite" eigenvalues and only counted. The iterative
path is a shift-and-invert Lanczos iteration on (A - sigma*B)^-1 B with full
reorthogonalization in the B-inner product; transformed eigenvalues nu map
back through lambda = sigma + 1/nu and the eigenvectors are unchanged.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .factorize import SingularMatrixError, factorize
from .sparse import as_csr, check_symmetric, frobenius


class PartialConvergenceError(RuntimeError):
    """Fewer eigenpairs converged than requested."""

    def __init__(self, message, num_converged, pairs=None, exhausted=False):
        super().__init__(message)
        self.num_converged = num_converged
        self.pairs = pairs
        self.exhausted = exhausted


class InsufficientDataError(ValueError):
    """Not enough recorded iterations for a spectral estimate."""


@dataclass
class EigenPairs:
    """Finite generalized eigenvalues in ascending order with B-orthonormal
    vectors as columns; num_infinite counts null(B) directions not in null(A)
    (only determined by the dense solver)."""

    values: np.ndarray
    vectors: np.ndarray
    num_infinite: int = 0

    def __len__(self):
        return self.values.size


def shift_invert_map(nu, sigma):
    """lambda = sigma + 1/nu, the inverse of nu = 1/(lambda - sigma)."""
    return sigma + 1.0 / nu


def fix_signs(vectors):
    """Flip column signs so each column's largest-magnitude entry is positive."""
    vectors = np.array(vectors, copy=True)
    for k in range(vectors.shape[1]):
        col = vectors[:, k]
        idx = int(np.argmax(np.abs(col)))
        if col[idx] < 0:
            vectors[:, k] = -col
    return vectors


def _sym(m):
    return 0.5 * (m + m.T)


def dense_generalized_eig(a, b, null_rtol=1e-12):
    """All finite eigenvalues of the symmetric PSD pencil (A, B), ascending.

    Works for singular B by eigendecomposing B, eliminating its null space
    through the Schur complement of the null block of A, and whitening the
    remaining generalized problem. Directions in null(B) with energy in A are
    reported via num_infinite; common-kernel directions (null of both) are
    excluded entirely.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape != b.shape:
        raise ValueError(f"need square matrices of equal size, got {a.shape} and {b.shape}")
    check_symmetric(a, 1e-12)
    check_symmetric(b, 1e-12)
    n = a.shape[0]
    wb, u = np.linalg.eigh(b)
    bscale = max(float(wb[-1]), 0.0) if n else 0.0
    null = wb <= null_rtol * max(bscale, 1e-300)
    un = u[:, null]
    ur = u[:, ~null]
    lr = wb[~null]
    r = ur.shape[1]

    num_infinite = 0
    apinv = None
    anr = None
    if un.shape[1]:
        ann = _sym(un.T @ a @ un)
        wa, qa = np.linalg.eigh(ann)
        ascale = max(float(np.abs(a).max()), 1e-300)
        pos = wa > null_rtol * ascale
        num_infinite = int(pos.sum())
        if num_infinite:
            apinv = (qa[:, pos] / wa[pos]) @ qa[:, pos].T

    if r == 0:
        return EigenPairs(np.zeros(0), np.zeros((n, 0)), num_infinite)

    arr = _sym(ur.T @ a @ ur)
    corr = None
    if un.shape[1]:
        anr = un.T @ a @ ur
        if apinv is not None:
            arr = _sym(arr - anr.T @ (apinv @ anr))
            corr = -apinv @ anr
    d = 1.0 / np.sqrt(lr)
    vals, z = np.linalg.eigh(_sym(d[:, None] * arr * d[None, :]))
    y = d[:, None] * z
    x = ur @ y
    if corr is not None:
        x = x + un @ (corr @ y)
    return EigenPairs(vals, fix_signs(x), num_infinite)


def _residual_ok(a, b, lam, x, bx, tol, norm_a, norm_b):
    resid = np.linalg.norm(a @ x - lam * bx)
    return resid <= tol * (norm_a + abs(lam) * norm_b)


def shift_invert_lanczos(a, b, sigma=None, m=1, tol=1e-8, ncv=None, max_restarts=12, rng=None):
    """The m finite eigenvalues of the pencil (A, B) closest to sigma.

    sigma defaults to 1e-8 * ||A||_F / ||B||_F (retried once at 10x when the
    shifted matrix comes out singular). Each returned pair satisfies
    ||A p - lambda B p|| <= tol * (||A||_F + |lambda| ||B||_F) and the vectors
    are B-orthonormal. Restarts deflate converged pairs, which also resolves
    eigenvalue multiplicities; a final confirmation sweep guards against a
    missed pair closer to sigma. Raises PartialConvergenceError (carrying the
    converged pairs and count) when fewer than m pairs can be delivered.
    """
    a = as_csr(a)
    b = as_csr(b)
    if a.shape != b.shape or a.shape[0] != a.shape[1]:
        raise ValueError(f"need square matrices of equal size, got {a.shape} and {b.shape}")
    if m < 1:
        raise ValueError("m must be >= 1")
    check_symmetric(a, 1e-12)
    check_symmetric(b, 1e-12)
    n = a.shape[0]
    norm_a = frobenius(a)
    norm_b = frobenius(b)
    if norm_b == 0.0:
        raise PartialConvergenceError(
            "B is zero: the pencil has no finite eigenvalues",
            0,
            EigenPairs(np.zeros(0), np.zeros((n, 0))),
            exhausted=True,
        )

    auto_sigma = sigma is None
    if auto_sigma:
        sigma = 1e-8 * norm_a / norm_b if norm_a > 0 else 1e-8
    try:
        fact = factorize(a, shift=sigma, shift_matrix=b)
    except SingularMatrixError:
        if not auto_sigma:
            raise
        sigma *= 10.0
        fact = factorize(a, shift=sigma, shift_matrix=b)

    if ncv is None:
        ncv = 3 * m + 10
    ncv = max(min(ncv, n), min(n, m + 2))
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)

    conv_vals = []
    conv_vecs = []
    conv_bvecs = []
    empty_starts = 0
    confirmed = False

    for _ in range(max_restarts):
        if len(conv_vals) >= m and confirmed:
            break
        xmat = np.array(conv_vecs).T if conv_vecs else None
        bxmat = np.array(conv_bvecs).T if conv_bvecs else None

        v0 = fact.solve(b @ rng.standard_normal(n))
        bn_before = np.sqrt(max(float(v0 @ (b @ v0)), 0.0))
        if xmat is not None:
            v0 -= xmat @ (bxmat.T @ v0)
        bn = np.sqrt(max(float(v0 @ (b @ v0)), 0.0))
        # nothing left outside the converged space: the finite spectrum
        # (rank of B) is exhausted
        if bn_before == 0.0 or bn <= 1e-12 * bn_before:
            empty_starts += 1
            if empty_starts >= 2:
                break
            continue
        empty_starts = 0

        v = np.zeros((ncv + 1, n))
        bv = np.zeros((ncv + 1, n))
        v[0] = v0 / bn
        bv[0] = b @ v[0]
        alphas = []
        betas = []
        k_used = 0
        for k in range(ncv):
            w = fact.solve(bv[k])
            # scale of this step's vector, for the invariance (breakdown) test
            wnorm0 = np.sqrt(max(float(w @ (b @ w)), 0.0))
            alpha = float(w @ bv[k])
            alphas.append(alpha)
            w -= alpha * v[k]
            if k > 0:
                w -= betas[-1] * v[k - 1]
            for _pass in range(2):
                if xmat is not None:
                    w -= xmat @ (bxmat.T @ w)
                w -= v[: k + 1].T @ (bv[: k + 1] @ w)
            bw = b @ w
            beta = np.sqrt(max(float(w @ bw), 0.0))
            k_used = k + 1
            if beta <= 1e-13 * max(wnorm0, 1e-300):
                break
            betas.append(beta)
            v[k + 1] = w / beta
            bv[k + 1] = bw / beta

        theta, s = scipy.linalg.eigh_tridiagonal(
            np.array(alphas[:k_used]), np.array(betas[: k_used - 1])
        )
        theta_max = max(float(np.abs(theta).max()), 1e-300)
        added_relevant = False
        for idx in np.argsort(-np.abs(theta)):
            th = float(theta[idx])
            if abs(th) <= 1e-12 * theta_max:
                continue
            lam = shift_invert_map(th, sigma)
            x = v[:k_used].T @ s[:, idx]
            # purification: one extra operator application removes the
            # null(B) roundoff the B-inner-product recurrence cannot see
            x = fact.solve(b @ x) / th
            bx = b @ x
            bn2 = float(x @ bx)
            if bn2 <= 0.0:
                continue
            x /= np.sqrt(bn2)
            bx /= np.sqrt(bn2)
            if not _residual_ok(a, b, lam, x, bx, tol, norm_a, norm_b):
                continue
            conv_vals.append(lam)
            conv_vecs.append(x)
            conv_bvecs.append(bx)
            rank = sorted(abs(np.array(conv_vals) - sigma)).index(abs(lam - sigma))
            if rank < m:
                added_relevant = True
        if len(conv_vals) >= m:
            # one clean sweep with everything deflated confirms nothing
            # closer to sigma was missed (degenerate eigenvalues appear here)
            confirmed = not added_relevant

    if len(conv_vals) < m:
        order = np.argsort(conv_vals)
        pairs = EigenPairs(
            np.array(conv_vals)[order],
            fix_signs(np.array(conv_vecs).T[:, order]) if conv_vecs else np.zeros((n, 0)),
        )
        raise PartialConvergenceError(
            f"only {len(conv_vals)} of {m} eigenpairs converged",
            len(conv_vals),
            pairs,
            exhausted=empty_starts >= 2,
        )

    vals = np.array(conv_vals)
    keep = np.argsort(np.abs(vals - sigma))[:m]
    keep = keep[np.argsort(vals[keep])]
    vals = vals[keep]
    vecs = np.array(conv_vecs).T[:, keep]
    # tighten B-orthonormality drift left by purification (triangular, so
    # vectors only pick up tiny components of earlier ones)
    gram = vecs.T @ (b @ vecs)
    if np.abs(gram - np.eye(m)).max() > 1e-14:
        chol = np.linalg.cholesky(0.5 * (gram + gram.T))
        vecs = np.linalg.solve(chol, vecs.T).T
    return EigenPairs(vals, fix_signs(vecs))


def estimate_extreme_ritz(coefficients):
    """Extreme eigenvalue estimates of the (preconditioned) operator from CG
    coefficients.

    `coefficients` holds one (alpha_k, beta_k) pair per CG iteration, where
    alpha_k is the step length and beta_k the direction-update ratio computed
    at the start of iteration k (beta_0 is ignored). The pairs define the
    Lanczos tridiagonal of the operator; its extreme eigenvalues are returned
    as (lambda_min, lambda_max).
    """
    pairs = [(float(al), float(be)) for al, be in coefficients]
    if len(pairs) < 2:
        raise InsufficientDataError(f"need >= 2 recorded CG iterations, got {len(pairs)}")
    alphas = np.array([p[0] for p in pairs])
    betas = np.array([p[1] for p in pairs])
    if np.any(alphas <= 0) or np.any(betas[1:] < 0):
        raise ValueError("CG coefficients must satisfy alpha > 0 and beta >= 0")
    k = len(pairs)
    d = np.empty(k)
    e = np.empty(k - 1)
    d[0] = 1.0 / alphas[0]
    for i in range(1, k):
        d[i] = 1.0 / alphas[i] + betas[i] / alphas[i - 1]
        e[i - 1] = np.sqrt(betas[i]) / alphas[i - 1]
    w = scipy.linalg.eigh_tridiagonal(d, e, eigvals_only=True)
    return float(w[0]), float(w[-1])
