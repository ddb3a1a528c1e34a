"""Dense linear algebra for small SPD matrices.

Everything here assumes desk-scale dimensions (d <= 10 or so); no packed
storage, no sparsity. Covariances are kept full-symmetric and factorized on
demand.
"""

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .errors import NotPositiveDefinite

# Absolute pivot threshold below which a Cholesky factorization is rejected.
PIVOT_TOL = 1e-12


def sym(m):
    """Symmetrize (M + M^T)/2; suppresses drift in long covariance recursions."""
    return 0.5 * (m + m.T)


def cholesky(m):
    """Lower-triangular L with L @ L.T == m.

    Raises NotPositiveDefinite when the factorization fails or any pivot
    falls at or below PIVOT_TOL.
    """
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NotPositiveDefinite(f"expected a square matrix, got shape {a.shape}")
    try:
        lower = np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite("Cholesky factorization failed") from None
    pivots = np.diagonal(lower) ** 2
    if np.any(pivots < PIVOT_TOL):
        j = int(np.argmin(pivots))
        raise NotPositiveDefinite(f"pivot {pivots[j]:.3e} at column {j} below tolerance")
    return lower


def spd_solve(m, rhs):
    """Solve m @ x = rhs for SPD m via Cholesky."""
    lower = cholesky(m)
    return cho_solve((lower, True), np.asarray(rhs, dtype=float), check_finite=False)


def spd_inverse(m):
    """Inverse of an SPD matrix via Cholesky."""
    lower = cholesky(m)
    inv = cho_solve((lower, True), np.eye(lower.shape[0]), check_finite=False)
    return sym(inv)


def spd_logdet(m):
    """log det of an SPD matrix via Cholesky."""
    lower = cholesky(m)
    return 2.0 * float(np.sum(np.log(np.diagonal(lower))))


def spd_sqrt_solve(m, rhs):
    """Solve L @ x = rhs with L the lower Cholesky factor of m."""
    lower = cholesky(m)
    return solve_triangular(lower, np.asarray(rhs, dtype=float), lower=True, check_finite=False)


def is_symmetric(m, tol=1e-10):
    m = np.asarray(m)
    return bool(np.max(np.abs(m - m.T)) <= tol * max(1.0, np.max(np.abs(m))))


def check_spd(m, name="matrix", sym_tol=1e-10):
    """Validate symmetry and positive definiteness; returns the input."""
    if not is_symmetric(m, sym_tol):
        raise NotPositiveDefinite(f"{name} is not symmetric")
    cholesky(m)
    return m
