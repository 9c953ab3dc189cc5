"""Dense symmetric-positive-definite kernels shared by the solvers and the oracle."""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.linalg.lapack import dpocon

from .errors import COND_LIMIT, NotPositiveDefinite, SingularSystem

__all__ = ["spd_solve", "spd_logdet", "mahalanobis_rows"]


def _factor(s: np.ndarray):
    try:
        c, low = cho_factor(s, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"Cholesky factorization failed: {exc}") from exc
    anorm = np.abs(s).sum(axis=0).max()  # 1-norm
    rcond, info = dpocon(c, anorm, uplo=b"L")
    if info != 0 or not np.isfinite(rcond) or rcond < 1.0 / COND_LIMIT:
        est = np.inf if rcond == 0.0 else 1.0 / rcond
        raise SingularSystem(
            f"system matrix is numerically singular (condition estimate {est:.3e})"
        )
    return c, low


def spd_solve(s: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve ``s @ x = rhs`` for symmetric positive definite ``s``.

    Raises
    ------
    SingularSystem
        If the factorization fails or the condition estimate exceeds
        ``COND_LIMIT``.
    """
    c = _factor(s)
    return cho_solve(c, rhs, check_finite=False)


def spd_logdet(s: np.ndarray) -> float:
    """Log-determinant of a symmetric positive definite matrix via Cholesky."""
    c = _factor(s)
    return 2.0 * float(np.sum(np.log(np.diag(c[0]))))


def mahalanobis_rows(x: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Quadratic form ``x_i b^{-1} x_i^T`` for every row of ``x`` at once.

    Raises
    ------
    NotPositiveDefinite
        If ``b`` is not symmetric positive definite.
    """
    if b.ndim != 2 or b.shape[0] != b.shape[1]:
        raise NotPositiveDefinite(f"b must be square, got shape {b.shape}")
    if not np.array_equal(b, b.T):
        raise NotPositiveDefinite("b is not symmetric")
    try:
        chol = np.linalg.cholesky(b)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"factorization of b failed: {exc}") from exc
    z = solve_triangular(chol, x.T, lower=True, check_finite=False)
    return np.einsum("ij,ij->j", z, z)
