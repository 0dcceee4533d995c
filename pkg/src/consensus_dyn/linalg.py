"""Dense symmetric-matrix kernels.

Square roots, norms and PSD projection for the small covariance matrices the
particle systems produce, plus the two spectral perturbation inequalities the
verification suite monitors.  All operations symmetrize their input on entry
(0.5*(A + A^T) is bit-exact symmetric), so callers may pass any square array.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotPSDError

__all__ = [
    "CheckReport",
    "PSD_TOL",
    "matrix_norms",
    "powers_stormer_check",
    "psd_project",
    "spd_sqrt",
    "sqrt_perturbation_check",
    "symmetrize",
]

# Relative (to trace) tolerance below which a negative eigenvalue still
# counts as PSD round-off rather than genuine indefiniteness.
PSD_TOL = 1e-10

# Multiplicative slack for inequality checks: shields exact-equality cases
# (rank-one saturation) from last-ulp noise without masking real violations.
_CHECK_SLACK = 1e-12


@dataclass(frozen=True)
class CheckReport:
    """Outcome of a single two-sided inequality check."""

    lhs: float
    rhs: float
    passed: bool

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs


def symmetrize(a) -> np.ndarray:
    """Return 0.5*(A + A^T) as float64; result is bit-exactly symmetric."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix entries must be finite")
    return 0.5 * (a + a.T)


def psd_project(c) -> np.ndarray:
    """Nearest PSD matrix in Frobenius norm.

    Symmetrizes, then clamps negative eigenvalues at zero.  Input that is
    already PSD is returned unchanged (bitwise) after symmetrization.
    """
    c = symmetrize(c)
    w, v = np.linalg.eigh(c)
    if w.size == 0 or w[0] >= 0.0:
        return c
    w = np.maximum(w, 0.0)
    return symmetrize((v * w) @ v.T)


def spd_sqrt(c) -> np.ndarray:
    """Symmetric PSD square root S with S @ S ~= C.

    Accepts nearly-PSD input: eigenvalues down to -PSD_TOL * trace(C) are
    treated as zero, with the smallest normal float as an absolute floor so
    a numerically zero matrix (trace ~ 0, subnormal negative eigenvalue)
    still passes.  Anything below that raises NotPSDError.
    """
    c = symmetrize(c)
    w, v = np.linalg.eigh(c)
    lam_min = float(w[0])
    tol = max(PSD_TOL * float(np.trace(c)), float(np.finfo(np.float64).tiny))
    if lam_min < -tol:
        raise NotPSDError(
            f"matrix is not PSD within tolerance (min eigenvalue {lam_min:.6e})",
            min_eigenvalue=lam_min,
        )
    s = np.sqrt(np.maximum(w, 0.0))
    return symmetrize((v * s) @ v.T)


def matrix_norms(c, p: int) -> tuple[float, float, float]:
    """(Frobenius, spectral, Schatten-p) norms of a symmetric matrix.

    For symmetric input the singular values are the absolute eigenvalues,
    so one eigendecomposition serves the spectral and Schatten norms.
    """
    c = symmetrize(c)
    if not isinstance(p, (int, np.integer)) or isinstance(p, bool) or p < 1:
        raise ValueError(f"p must be a positive integer, got {p!r}")
    sigma = np.abs(np.linalg.eigvalsh(c))
    frobenius = float(np.sqrt(np.sum(c * c)))
    spectral = float(sigma.max())
    schatten = float(np.sum(sigma ** p) ** (1.0 / p))
    return frobenius, spectral, schatten


def sqrt_perturbation_check(a, b) -> CheckReport:
    """Check ||sqrt(A) - sqrt(B)||_2 <= 2 * sqrt(||B^-1||_2) * ||A - B||_2.

    A must be nearly PSD (spd_sqrt tolerance), B strictly positive definite.
    """
    a = symmetrize(a)
    b = symmetrize(b)
    wb = np.linalg.eigvalsh(b)
    if wb.size == 0 or wb[0] <= 0.0:
        raise ValueError("B must be strictly positive definite")
    sqrt_a = spd_sqrt(a)
    sqrt_b = spd_sqrt(b)
    lhs = matrix_norms(sqrt_a - sqrt_b, 1)[1]
    rhs = 2.0 * float(np.sqrt(1.0 / wb[0])) * matrix_norms(a - b, 1)[1]
    return CheckReport(lhs, rhs, lhs <= rhs * (1.0 + _CHECK_SLACK) + _CHECK_SLACK)


def powers_stormer_check(a, b) -> CheckReport:
    """Check ||sqrt(A) - sqrt(B)||_F^2 <= Schatten-1 norm of (A - B).

    Both arguments must be nearly PSD.  Reported lhs/rhs are the square-rooted
    forms, i.e. lhs = ||sqrt(A) - sqrt(B)||_F and rhs = |A - B|_1^(1/2).
    """
    sqrt_a = spd_sqrt(a)
    sqrt_b = spd_sqrt(b)
    lhs = matrix_norms(sqrt_a - sqrt_b, 1)[0]
    diff = symmetrize(a) - symmetrize(b)
    rhs = float(np.sqrt(matrix_norms(diff, 1)[2]))
    return CheckReport(lhs, rhs, lhs <= rhs * (1.0 + _CHECK_SLACK) + _CHECK_SLACK)
