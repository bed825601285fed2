"""Dense symmetric linear algebra for small (d <= ~16) matrices.

Everything the second-order proposal needs: Cholesky factorization with a
tolerance-controlled positive-definiteness test, SPD inversion,
log-determinant, and multivariate Gaussian sampling / log-density.  The
Cholesky pivot test doubles as the positive-definiteness check that triggers
the second-order -> first-order proposal fallback, so its tolerance semantics
matter; that is why this is hand-rolled rather than delegated to LAPACK,
which offers no tolerance control.

All functions are pure and operate on plain float ndarrays.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "NotPositiveDefinite",
    "symmetrize",
    "cholesky",
    "inverse_spd",
    "log_det_spd",
    "mvn_sample",
    "mvn_logpdf",
]

# Pivots below PIVOT_RTOL * max|diag| count as non-positive: distinguishes
# genuine indefiniteness from accumulated roundoff in Hessian estimates.
PIVOT_RTOL = 1e-12

LOG_2PI = math.log(2.0 * math.pi)


class NotPositiveDefinite(ValueError):
    """Raised when a matrix fails the Cholesky positivity test."""


def symmetrize(m) -> np.ndarray:
    """Return (M + M^T)/2 as a float array."""
    m = np.asarray(m, dtype=float)
    return 0.5 * (m + m.T)


def cholesky(m) -> np.ndarray:
    """Lower-triangular L with L L^T = (M + M^T)/2.

    Raises
    ------
    NotPositiveDefinite
        If any pivot is <= 1e-12 * max|diag|.  Callers use this as the
        "not positive definite" signal for the proposal fallback.
    """
    a = symmetrize(m)
    if not np.all(np.isfinite(a)):
        raise NotPositiveDefinite("matrix has non-finite entries")
    d = a.shape[0]
    tol = PIVOT_RTOL * max(np.max(np.abs(np.diag(a))), 1.0e-300)
    lower = np.zeros_like(a)
    for j in range(d):
        pivot = a[j, j] - np.dot(lower[j, :j], lower[j, :j])
        if pivot <= tol:
            raise NotPositiveDefinite(f"pivot {pivot:.3e} at index {j}")
        ljj = math.sqrt(pivot)
        lower[j, j] = ljj
        for i in range(j + 1, d):
            lower[i, j] = (a[i, j] - np.dot(lower[i, :j], lower[j, :j])) / ljj
    return lower


def _solve_lower(lower: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve L x = b by forward substitution (b may be a matrix)."""
    d = lower.shape[0]
    x = np.array(b, dtype=float, copy=True)
    for i in range(d):
        x[i] -= lower[i, :i] @ x[:i]
        x[i] /= lower[i, i]
    return x


def _solve_upper(upper_t: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve L^T x = b by back substitution, given lower L."""
    d = upper_t.shape[0]
    x = np.array(b, dtype=float, copy=True)
    for i in range(d - 1, -1, -1):
        x[i] -= upper_t[i + 1 :, i] @ x[i + 1 :]
        x[i] /= upper_t[i, i]
    return x


def solve_spd(m, b) -> np.ndarray:
    """Solve M x = b for symmetric positive definite M."""
    lower = cholesky(m)
    return _solve_upper(lower, _solve_lower(lower, np.asarray(b, dtype=float)))


def inverse_spd(m) -> np.ndarray:
    """Inverse of a symmetric positive definite matrix, symmetrized."""
    d = np.asarray(m).shape[0]
    return symmetrize(solve_spd(m, np.eye(d)))


def log_det_spd(m) -> float:
    """log det M = 2 sum(log diag(chol(M))) for SPD M."""
    return 2.0 * float(np.sum(np.log(np.diag(cholesky(m)))))


def mvn_sample(mean, cov_chol, noise) -> np.ndarray:
    """mean + L @ noise; deterministic given the caller-supplied noise.

    The standard-normal draws are an explicit input so common-random-number
    schemes control them.
    """
    mean = np.asarray(mean, dtype=float)
    noise = np.asarray(noise, dtype=float)
    if noise.shape != mean.shape:
        raise ValueError(f"noise shape {noise.shape} != mean shape {mean.shape}")
    return mean + cov_chol @ noise


def mvn_logpdf(x, mean, cov) -> float:
    """Gaussian log-density with a full SPD covariance matrix."""
    x = np.asarray(x, dtype=float)
    mean = np.asarray(mean, dtype=float)
    lower = cholesky(cov)
    half = _solve_lower(lower, x - mean)
    log_det = 2.0 * float(np.sum(np.log(np.diag(lower))))
    d = x.shape[0]
    return -0.5 * (d * LOG_2PI + log_det + float(half @ half))
