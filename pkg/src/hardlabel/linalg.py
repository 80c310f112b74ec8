"""Dense float64 solves and the thresholded vector comparison."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

RANK_TOLERANCE = 1e-10


class DegenerateSystemError(np.linalg.LinAlgError):
    """The coefficient matrix is (numerically) rank deficient."""


def solve(coefficients, rhs, rank_tol: float = RANK_TOLERANCE) -> tuple[np.ndarray, float]:
    """Solve ``coefficients @ w = rhs`` for ``w``.

    Square systems go through LU with partial pivoting, tall ones through a
    column-pivoted QR least-squares solve.  Returns the solution and the
    infinity norm of the residual.

    Raises :class:`DegenerateSystemError` when the smallest pivot is below
    ``rank_tol`` times the largest.
    """
    a = np.asarray(coefficients, dtype=np.float64)
    b = np.asarray(rhs, dtype=np.float64)
    if a.ndim != 2 or b.shape != (a.shape[0],):
        raise ValueError(f"incompatible system shapes {a.shape} and {b.shape}")
    m, n = a.shape
    if m < n:
        raise ValueError(f"underdetermined system ({m} equations, {n} unknowns)")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("system entries must be finite")
    if m == n:
        with warnings.catch_warnings():
            # exact singularity is reported below as DegenerateSystemError
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu, piv = scipy.linalg.lu_factor(a, check_finite=False)
        pivots = np.abs(np.diag(lu))
        if pivots.max(initial=0.0) == 0.0 or pivots.min() < rank_tol * pivots.max():
            raise DegenerateSystemError("singular square system")
        w = scipy.linalg.lu_solve((lu, piv), b, check_finite=False)
    else:
        q, r, perm = scipy.linalg.qr(a, mode="economic", pivoting=True, check_finite=False)
        diag = np.abs(np.diag(r))
        if diag[0] == 0.0 or diag[-1] < rank_tol * diag[0]:
            raise DegenerateSystemError(f"rank deficient {m}x{n} system")
        z = scipy.linalg.solve_triangular(r, q.T @ b, check_finite=False)
        w = np.empty(n)
        w[perm] = z
    residual = float(np.max(np.abs(a @ w - b))) if m else 0.0
    return w, residual


@dataclass(frozen=True)
class CompareConfig:
    """``phi``: per-coordinate threshold; ``d_phi``: tolerated mismatching coordinates."""

    phi: float = 1e-6
    d_phi: int = 0

    def __post_init__(self):
        if not self.phi > 0:
            raise ValueError("phi must be positive")
        if self.d_phi < 0:
            raise ValueError("d_phi must be non-negative")


def mismatch_count(a, b, phi: float) -> int:
    """Coordinates where ``|a_j - b_j| >= phi``; NaN entries always mismatch."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch {a.shape} vs {b.shape}")
    return int(np.count_nonzero(~(np.abs(a - b) < phi)))


def vectors_equal(a, b, cfg: CompareConfig) -> tuple[bool, int]:
    """Thresholded equality: at most ``cfg.d_phi`` coordinates differ by ``phi`` or more."""
    mismatches = mismatch_count(a, b, cfg.phi)
    return mismatches <= cfg.d_phi, mismatches


def mismatch_matrix(rows_a, rows_b, phi: float) -> np.ndarray:
    """Pairwise mismatch counts between the rows of two matrices."""
    a = np.asarray(rows_a, dtype=np.float64)
    b = np.asarray(rows_b, dtype=np.float64)
    return np.count_nonzero(~(np.abs(a[:, None, :] - b[None, :, :]) < phi), axis=2)
