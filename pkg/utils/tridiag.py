"""
Tridiagonal solves.

Systems are written row-wise as

    lower[j] u[j-1] + diag[j] u[j] + upper[j] u[j+1] = rhs[j],  j = 0..n-1

with ``lower[0]`` and ``upper[-1]`` ignored.
"""
import numpy as np
import scipy.linalg

from models.errors import LinearSolveFailure

RESIDUAL_TOL = 1e-8


def solve(lower: np.ndarray, diag: np.ndarray, upper: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve a tridiagonal system with LAPACK's banded solver.

    The solution is accepted only if its residual is below RESIDUAL_TOL
    relative to the size of the terms.
    """
    n = diag.shape[0]
    if not (lower.shape[0] == n and upper.shape[0] == n and rhs.shape[0] == n):
        raise LinearSolveFailure("lengths must be equal")
    if not (np.all(np.isfinite(diag)) and np.all(np.isfinite(rhs))):
        raise LinearSolveFailure("non-finite coefficients")

    ab = np.zeros((3, n))
    ab[0, 1:] = upper[:-1]
    ab[1, :] = diag
    ab[2, :-1] = lower[1:]
    try:
        u = scipy.linalg.solve_banded((1, 1), ab, rhs, check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise LinearSolveFailure(str(e)) from e
    if not np.all(np.isfinite(u)):
        raise LinearSolveFailure("solution is not finite")
    residual = float(np.max(np.abs(matvec(lower, diag, upper, u) - rhs)))
    scale = float(np.max(np.abs(rhs))) + float(np.max(np.abs(diag * u)))
    if residual > RESIDUAL_TOL * scale:
        raise LinearSolveFailure(f"residual {residual:.3e} exceeds {RESIDUAL_TOL:g} x {scale:.3e}")
    return u


def matvec(lower: np.ndarray, diag: np.ndarray, upper: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Apply the tridiagonal operator to ``u``."""
    out = diag * u
    out[1:] += lower[1:] * u[:-1]
    out[:-1] += upper[:-1] * u[1:]
    return out
