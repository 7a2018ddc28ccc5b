"""Dense linear algebra for small matrices: ridge solves and eigenvalue moduli.

Everything here operates on plain float64 ndarrays a few tens of entries
wide, so robustness and explicit failure win over speed. All functions are
pure and safe to call from multiple threads.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

__all__ = ["SolveError", "ridge_solve", "eigen_magnitudes", "spectral_radius"]

# Reciprocal-condition cutoff beyond which an unregularised normal matrix is
# treated as numerically singular.
_MAX_CONDITION = 1e12


class SolveError(RuntimeError):
    """A linear solve could not be completed reliably."""


def _as_2d(a, name: str) -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be non-empty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def ridge_solve(design: np.ndarray, targets: np.ndarray, ridge_lambda: float) -> np.ndarray:
    """Solve the Tikhonov-regularised least squares problem.

    Returns the ``(n_features, n_targets)`` matrix ``w`` minimising
    ``||design @ w - targets||^2 + ridge_lambda * ||w||^2`` by solving the
    normal equations ``(design.T @ design + ridge_lambda * I) w = design.T @ targets``
    with a Cholesky factorisation (the regularised normal matrix is
    symmetric positive definite for ``ridge_lambda > 0``).

    Parameters
    ----------
    design : ndarray, shape (n_rows, n_features)
    targets : ndarray, shape (n_rows, n_targets)
    ridge_lambda : float
        Nonnegative regularisation strength. With ``ridge_lambda == 0`` the
        normal matrix must be numerically invertible.

    Raises
    ------
    SolveError
        If the normal matrix is singular or ill-conditioned at
        ``ridge_lambda == 0``, or the factorisation fails.
    """
    s = _as_2d(design, "design")
    y = _as_2d(targets, "targets")
    if s.shape[0] != y.shape[0]:
        raise ValueError(
            f"design has {s.shape[0]} rows but targets has {y.shape[0]}"
        )
    lam = float(ridge_lambda)
    if not np.isfinite(lam) or lam < 0:
        raise ValueError(f"ridge_lambda must be a nonnegative real, got {ridge_lambda!r}")

    gram = s.T @ s
    gram[np.diag_indices_from(gram)] += lam
    rhs = s.T @ y

    if lam == 0.0:
        cond = np.linalg.cond(gram)
        if not np.isfinite(cond) or cond > _MAX_CONDITION:
            raise SolveError(
                "normal matrix is singular or ill-conditioned "
                f"(condition estimate {cond:.3e}) and ridge_lambda is 0"
            )
    try:
        factor = scipy.linalg.cho_factor(gram, lower=True, check_finite=False)
        w = scipy.linalg.cho_solve(factor, rhs, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise SolveError(f"Cholesky factorisation of the normal matrix failed: {exc}") from exc
    if not np.all(np.isfinite(w)):
        raise SolveError("solve produced non-finite weights")
    return w


def eigen_magnitudes(matrix: np.ndarray) -> np.ndarray:
    """Moduli of all eigenvalues of a general square real matrix.

    Complex conjugate pairs contribute their common modulus twice. The
    ordering of the returned values is unspecified.
    """
    a = _as_2d(matrix, "matrix")
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"matrix must be square, got shape {a.shape}")
    return np.abs(np.linalg.eigvals(a))


def spectral_radius(matrix: np.ndarray) -> float:
    """Largest eigenvalue modulus of a square matrix (0 for the zero matrix)."""
    return float(eigen_magnitudes(matrix).max())
