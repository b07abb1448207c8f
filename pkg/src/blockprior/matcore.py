"""Dense symmetric-matrix helpers used throughout the package.

Matrices are plain ``numpy`` float arrays.  :func:`sym` is the single entry
point that validates and symmetrizes user input: the lower triangle is taken
as authoritative and mirrored, so every downstream routine can rely on exact
symmetry.
"""

import numpy as np
from scipy.linalg import solve_triangular

from .errors import InvalidMatrix, NotPositiveDefinite

DEFAULT_REL_TOL = 1e-10


def sym(m, name="matrix"):
    """Return a finite, exactly symmetric float copy of ``m``.

    Raises
    ------
    InvalidMatrix
        If ``m`` is not a non-empty square 2-D array of finite numbers.
    """
    try:
        arr = np.array(m, dtype=float)
    except (TypeError, ValueError) as exc:
        raise InvalidMatrix(f"{name}: not a numeric matrix ({exc})") from None
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
        raise InvalidMatrix(f"{name}: expected a non-empty square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidMatrix(f"{name}: non-finite entries")
    lower = np.tril(arr)
    return lower + np.tril(arr, -1).T


def _check_finite(m):
    m = np.asarray(m, dtype=float)
    if not np.all(np.isfinite(m)):
        raise InvalidMatrix("non-finite entries")
    return m


def eigen_extrema(m):
    """Smallest and largest eigenvalue of a symmetric matrix."""
    w = np.linalg.eigvalsh(_check_finite(m))
    return float(w[0]), float(w[-1])


def is_psd(m, rel_tol=DEFAULT_REL_TOL):
    """True iff ``lambda_min >= -rel_tol * max(1, |lambda_max|)``."""
    lo, hi = eigen_extrema(m)
    return lo >= -rel_tol * max(1.0, abs(hi))


def whitening_factor(sigma, rel_tol=DEFAULT_REL_TOL):
    """Inverse of the lower Cholesky factor of ``sigma``.

    The result ``W`` is lower triangular and satisfies ``W @ sigma @ W.T == I``.

    Raises
    ------
    NotPositiveDefinite
        If ``lambda_min <= rel_tol * lambda_max``.
    """
    sigma = _check_finite(sigma)
    lo, hi = eigen_extrema(sigma)
    if not lo > rel_tol * max(hi, 0.0) or hi <= 0.0:
        raise NotPositiveDefinite(lo)
    chol = np.linalg.cholesky(sigma)
    return solve_triangular(chol, np.eye(len(sigma)), lower=True)


def trace_product(a, b):
    """``Tr[a @ b]`` without forming the product."""
    return float(np.einsum("ij,ji->", a, b))
