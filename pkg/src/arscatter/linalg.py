"""Complex Hermitian linear algebra used by the estimators and error metric.

Only the handful of primitives the package needs: Cholesky factorization,
Hermitian eigendecomposition, the SPD matrix logarithm and the
affine-invariant distance.  Everything is a pure function of its inputs.
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionMismatch, NoConvergence, NotPositiveDefinite

# Default tolerances; every operation accepts an override.
HERMITIAN_RTOL = 1e-12
EIG_FLOOR_RTOL = 1e-14


def check_hermitian(h: np.ndarray, rtol: float = HERMITIAN_RTOL) -> np.ndarray:
    """Validate that ``h`` is square and equals its conjugate transpose.

    Returns the array as complex ndarray.  Raises DimensionMismatch for a
    non-square input and NotPositiveDefinite is *not* checked here.
    """
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {h.shape}")
    scale = max(np.abs(h).max(), 1.0)
    if np.abs(h - h.conj().T).max() > rtol * scale:
        raise DimensionMismatch("matrix is not Hermitian within tolerance")
    return h


def cholesky(h: np.ndarray, rtol: float = HERMITIAN_RTOL) -> np.ndarray:
    """Lower-triangular L with L @ L.conj().T == h, positive real diagonal."""
    h = check_hermitian(h, rtol)
    try:
        return np.linalg.cholesky(h)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc


def hermitian_eig(h: np.ndarray, rtol: float = HERMITIAN_RTOL):
    """Eigendecomposition of a Hermitian matrix.

    Returns (eigenvalues ascending, unitary eigenvector matrix) so that
    ``V @ diag(w) @ V.conj().T`` reconstructs ``h``.
    """
    h = check_hermitian(h, rtol)
    try:
        w, v = np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from exc
    return w, v


def spd_logm(h: np.ndarray, floor_rtol: float = EIG_FLOOR_RTOL) -> np.ndarray:
    """Matrix logarithm of a Hermitian positive-definite matrix.

    Eigenvalues below ``floor_rtol * max(eigenvalue)`` raise
    NotPositiveDefinite instead of being clamped, so estimator failures
    surface rather than being silently absorbed.
    """
    w, v = hermitian_eig(h)
    if w[0] <= floor_rtol * w[-1] or w[-1] <= 0:
        raise NotPositiveDefinite(f"eigenvalue {w[0]:.3e} below PD floor")
    return (v * np.log(w)) @ v.conj().T


def spd_affine_distance(a: np.ndarray, b: np.ndarray,
                        floor_rtol: float = EIG_FLOOR_RTOL) -> float:
    """Affine-invariant distance between two HPD matrices.

    Frobenius norm of log(a^{-1/2} b a^{-1/2}), computed through the
    eigenvalues of the whitened matrix (same spectrum, cheaper).
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shape mismatch {a.shape} vs {b.shape}")
    la = cholesky(a)
    # whiten: m = L^{-1} b L^{-*} is Hermitian with the needed spectrum
    tmp = solve_triangular(la, b, lower=True)
    m = solve_triangular(la, tmp.conj().T, lower=True).conj().T
    w, _ = hermitian_eig(m, rtol=1e-8)
    if w[0] <= floor_rtol * w[-1] or w[-1] <= 0:
        raise NotPositiveDefinite("second operand not positive definite")
    return float(np.sqrt(np.sum(np.log(w) ** 2)))


def trace_normalize(h: np.ndarray, target: float | None = None) -> np.ndarray:
    """Scale ``h`` so its trace equals ``target`` (defaults to the dimension)."""
    h = np.asarray(h, dtype=complex)
    if target is None:
        target = h.shape[0]
    tr = np.trace(h).real
    if tr <= 0:
        raise NotPositiveDefinite(f"trace {tr:.3e} is not positive")
    return h * (target / tr)
