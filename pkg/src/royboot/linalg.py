"""Dense symmetric linear-algebra kernels.

Matrices are plain float64 ``numpy`` arrays.  Symmetry is an explicit
convention: public entry points validate (or enforce by averaging with the
transpose) before doing numerical work, and every factorization routine
reports degeneracy through :class:`~royboot.errors.NotPositiveDefiniteError`
rather than returning garbage.

Index convention: 0-based everywhere inside the library; serialized formats
and CLI output use 1-based coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import solve_triangular

from .errors import EigenConvergenceError, NotPositiveDefiniteError

__all__ = [
    "symmetrize",
    "check_symmetric",
    "EigenPair",
    "sym_eigen",
    "cholesky",
    "whiten_pencil",
    "submatrix",
]

# A Cholesky pivot at or below PIVOT_RTOL * max(diag) signals a genuinely
# degenerate configuration (e.g. sample covariance with n < s) the caller
# must handle, not round-off.
PIVOT_RTOL = 1e-12


def symmetrize(a: NDArray) -> NDArray[np.float64]:
    """Return the symmetric part (A + A^T)/2 as a float64 array.

    Raises ``ValueError`` for non-square or non-finite input.
    """
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if m.shape[0] < 1:
        raise ValueError("matrix dimension must be at least 1")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix entries must be finite")
    return 0.5 * (m + m.T)


def check_symmetric(a: NDArray, rtol: float = 1e-12) -> NDArray[np.float64]:
    """Validate that ``a`` is square, finite, and symmetric to ``rtol``.

    Returns an exactly-symmetric float64 copy ((A + A^T)/2 removes the
    sub-tolerance asymmetry so downstream code can rely on exact equality).
    """
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix entries must be finite")
    scale = float(np.max(np.abs(m))) if m.size else 0.0
    if scale > 0 and float(np.max(np.abs(m - m.T))) > rtol * scale:
        raise ValueError("matrix is not symmetric within tolerance")
    return 0.5 * (m + m.T)


@dataclass(frozen=True)
class EigenPair:
    """Full spectral decomposition: eigenvalues descending, orthonormal columns."""

    values: NDArray[np.float64]
    vectors: NDArray[np.float64]

    def reconstruct(self) -> NDArray[np.float64]:
        return (self.vectors * self.values) @ self.vectors.T

    def validate(self, a: NDArray, ortho_tol: float = 1e-10,
                 recon_rtol: float = 1e-8) -> None:
        """Check orthonormality and reconstruction against the source matrix."""
        d = self.vectors.shape[0]
        gram_err = float(np.linalg.norm(self.vectors.T @ self.vectors - np.eye(d)))
        if gram_err > ortho_tol:
            raise AssertionError(f"eigenvector columns not orthonormal: {gram_err:g}")
        norm_a = float(np.linalg.norm(a))
        recon_err = float(np.linalg.norm(self.reconstruct() - a))
        if recon_err > recon_rtol * max(norm_a, 1e-300):
            raise AssertionError(f"reconstruction error {recon_err:g} vs ||A||={norm_a:g}")


def sym_eigen(a: NDArray) -> EigenPair:
    """Spectral decomposition of a symmetric matrix, eigenvalues descending.

    Deterministic for identical input bits.  Raises
    :class:`EigenConvergenceError` if the underlying solver fails.
    """
    m = check_symmetric(a)
    try:
        values, vectors = np.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK edge case
        raise EigenConvergenceError(
            f"eigendecomposition did not converge: {exc}",
            residual=float(np.linalg.norm(m)),
        ) from exc
    return EigenPair(values=values[::-1].copy(), vectors=vectors[:, ::-1].copy())


def cholesky(a: NDArray) -> NDArray[np.float64]:
    """Lower-triangular L with L L^T = A for symmetric positive definite A.

    Raises :class:`NotPositiveDefiniteError` carrying the 0-based index of the
    failing pivot.  Pivots at or below ``PIVOT_RTOL * max(diag A)`` are treated
    as failures even when the factorization formally completes.
    """
    m = check_symmetric(a)
    tol = PIVOT_RTOL * max(float(np.max(np.diag(m))), 0.0)
    try:
        low = np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        low = None
    if low is not None:
        piv = np.square(np.diag(low))
        bad = np.nonzero(piv <= tol)[0]
        if bad.size == 0:
            return low
        k = int(bad[0])
        raise NotPositiveDefiniteError(
            f"pivot {k} is {piv[k]:.3e} <= tolerance {tol:.3e}", pivot_index=k)
    # Factorization failed outright: locate the first non-positive pivot with
    # a plain outer-product elimination (small d, informative error).
    w = m.copy()
    d = w.shape[0]
    for k in range(d):
        piv = w[k, k]
        if not piv > tol:
            raise NotPositiveDefiniteError(
                f"pivot {k} is {piv:.3e} <= tolerance {tol:.3e}", pivot_index=k)
        w[k:, k] /= np.sqrt(piv)
        w[k + 1:, k + 1:] -= np.outer(w[k + 1:, k], w[k + 1:, k])
    raise NotPositiveDefiniteError("factorization failed", pivot_index=d - 1)


def whiten_pencil(a: NDArray, denom: NDArray) -> NDArray[np.float64]:
    """Return W = L^{-1} A L^{-T} where ``denom`` = L L^T.

    The spectrum of W equals the generalized eigenvalues of the pencil
    (A, denom).  Propagates :class:`NotPositiveDefiniteError` from the
    factorization of ``denom``.
    """
    num = check_symmetric(a)
    low = cholesky(denom)
    if num.shape != low.shape:
        raise ValueError("matrix dimensions differ")
    half = solve_triangular(low, num, lower=True)        # L^{-1} A
    w = solve_triangular(low, half.T, lower=True)        # L^{-1} A^T L^{-T}
    return 0.5 * (w + w.T)


def submatrix(a: NDArray, support: Sequence[int]) -> NDArray[np.float64]:
    """Principal submatrix of the rows/columns in ``support`` (0-based)."""
    m = np.asarray(a, dtype=np.float64)
    idx = np.asarray(list(support), dtype=np.intp)
    if idx.size == 0:
        raise ValueError("support must be nonempty")
    if np.any(idx < 0) or np.any(idx >= m.shape[0]):
        raise IndexError(f"support {support!r} out of range for dim {m.shape[0]}")
    return m[np.ix_(idx, idx)]
