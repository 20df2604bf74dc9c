"""Reflection-coefficient parameterization of stationary autoregressive models.

A complex AR(M) vector is described by a power P0 > 0 and reflection
coefficients mu_1..mu_M in the open unit disk.  The Levinson recursion maps
autocovariance sequences to (P0, mu) and back; the Toeplitz scatter matrix of
the length-d vector is reconstructed from the autocovariance, extended beyond
lag M by the order-M AR recursion (maximum-entropy extension).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateCovariance, DimensionMismatch
from .linalg import cholesky

# Estimation paths clamp reflection magnitudes to this cap (phase preserved)
# so Levinson powers stay positive.
DISK_CLAMP = 1.0 - 1e-9


def clamp_reflection(mu, cap: float = DISK_CLAMP) -> np.ndarray:
    """Clamp reflection coefficients with |mu| >= cap back onto the disk."""
    mu = np.atleast_1d(np.asarray(mu, dtype=complex))
    r = np.abs(mu)
    over = r >= cap
    if np.any(over):
        mu = mu.copy()
        mu[over] *= cap / r[over]
    return mu


@dataclass
class ReflectionParams:
    """Power P0 and reflection coefficients mu_1..mu_M in the open unit disk."""

    p0: float
    mu: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))

    def __post_init__(self):
        self.p0 = float(self.p0)
        self.mu = np.atleast_1d(np.asarray(self.mu, dtype=complex))
        if self.p0 <= 0:
            raise DegenerateCovariance(f"p0 must be positive, got {self.p0}")
        if self.mu.size and np.abs(self.mu).max() >= 1:
            raise DegenerateCovariance("reflection coefficients must lie in the open unit disk")

    @property
    def order(self) -> int:
        return len(self.mu)


@dataclass
class ARCoefficients:
    """AR polynomial coefficients a_1..a_M and innovation power P_M."""

    a: np.ndarray
    pm: float

    def __post_init__(self):
        self.a = np.atleast_1d(np.asarray(self.a, dtype=complex))
        self.pm = float(self.pm)
        if self.pm <= 0:
            raise DegenerateCovariance(f"innovation power must be positive, got {self.pm}")

    @property
    def order(self) -> int:
        return len(self.a)


def levinson(gamma, order: int) -> tuple[ReflectionParams, ARCoefficients]:
    """Levinson recursion: autocovariance gamma(0..K) -> (P0, mu), (a, P_M).

    Raises DegenerateCovariance when a prediction power P_m drops to zero or a
    reflection coefficient leaves the closed unit disk, which happens exactly
    when a leading Toeplitz block of gamma is not positive definite.
    """
    gamma = np.atleast_1d(np.asarray(gamma, dtype=complex))
    if order >= len(gamma):
        raise DimensionMismatch(f"order {order} needs at least {order + 1} lags, got {len(gamma)}")
    p0 = gamma[0].real
    if p0 <= 0 or abs(gamma[0].imag) > 1e-12 * max(p0, 1.0):
        raise DegenerateCovariance("gamma(0) must be real positive")
    p = p0
    mu = np.zeros(order, dtype=complex)
    a = np.zeros(0, dtype=complex)
    for m in range(order):
        acc = np.dot(a, gamma[m:0:-1]) if m else 0.0
        mu_next = -(gamma[m + 1] + acc) / p
        if abs(mu_next) >= 1:
            raise DegenerateCovariance(f"|mu_{m + 1}| = {abs(mu_next):.6g} >= 1")
        mu[m] = mu_next
        a = np.concatenate([a + mu_next * a[::-1].conj(), [mu_next]])
        p *= 1 - abs(mu_next) ** 2
        if p <= 0:
            raise DegenerateCovariance(f"prediction power P_{m + 1} <= 0")
    return ReflectionParams(p0, mu), ARCoefficients(a, p)


def reflection_to_ar(params: ReflectionParams) -> ARCoefficients:
    """Expand reflection coefficients into order-M AR coefficients."""
    a = np.zeros(0, dtype=complex)
    p = params.p0
    for mu_m in params.mu:
        a = np.concatenate([a + mu_m * a[::-1].conj(), [mu_m]])
        p *= 1 - abs(mu_m) ** 2
    if len(a) == 0:
        return ARCoefficients(np.zeros(0, dtype=complex), p)
    return ARCoefficients(a, p)


def reflection_to_autocov(params: ReflectionParams, max_lag: int) -> np.ndarray:
    """Autocovariance gamma(0..max_lag) of the AR model, run in reverse Levinson.

    Lags beyond the model order follow the AR recursion
    gamma(t) = -sum_k a_k gamma(t-k).
    """
    if max_lag < 0:
        raise DimensionMismatch("max_lag must be >= 0")
    order = params.order
    gamma = np.zeros(max_lag + 1, dtype=complex)
    gamma[0] = params.p0
    a = np.zeros(0, dtype=complex)
    p = params.p0
    for m in range(min(order, max_lag)):
        mu_m = params.mu[m]
        acc = np.dot(a, gamma[m:0:-1]) if m else 0.0
        gamma[m + 1] = -mu_m * p - acc
        a = np.concatenate([a + mu_m * a[::-1].conj(), [mu_m]])
        p *= 1 - abs(mu_m) ** 2
    if order and max_lag > order:
        for t in range(order + 1, max_lag + 1):
            gamma[t] = -np.dot(a, gamma[t - 1:t - 1 - order:-1])
    return gamma


def reflection_to_scatter(params: ReflectionParams, dim: int,
                          normalize_trace: bool = True) -> np.ndarray:
    """Hermitian Toeplitz scatter matrix of the length-``dim`` AR vector.

    Entry (j, k) is gamma(j - k) for j >= k and the conjugate above the
    diagonal.  With ``normalize_trace`` the matrix is scaled to trace == dim,
    which is equivalent to forcing P0 == 1.
    """
    if params.order > dim - 1:
        raise DimensionMismatch(f"model order {params.order} exceeds dim-1 = {dim - 1}")
    gamma = reflection_to_autocov(params, dim - 1)
    full = np.concatenate([gamma[:0:-1].conj(), gamma])
    idx = np.subtract.outer(np.arange(dim), np.arange(dim)) + dim - 1
    scatter = full[idx]
    if normalize_trace:
        scatter = scatter * (dim / np.trace(scatter).real)
    # contract check: valid params always yield PD, a failed factorization
    # signals a degenerate input that slipped past the invariants
    try:
        cholesky(scatter)
    except Exception as exc:
        raise DegenerateCovariance(f"scatter matrix not positive definite: {exc}") from exc
    return scatter


def ar_spectrum(coeffs: ARCoefficients, freqs) -> np.ndarray:
    """AR power spectral density S(f) = P_M / |1 + sum_k a_k e^{-2i pi k f}|^2.

    ``freqs`` are normalized frequencies in [-0.5, 0.5).
    """
    freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
    if coeffs.order == 0:
        return np.full(freqs.shape, coeffs.pm)
    k = np.arange(1, coeffs.order + 1)
    poly = 1 + np.exp(-2j * np.pi * np.outer(freqs, k)) @ coeffs.a
    return coeffs.pm / np.abs(poly) ** 2


def ar_peak_frequency(params: ReflectionParams, n_grid: int = 1024) -> float:
    """Normalized frequency at which the AR spectrum peaks (grid argmax)."""
    freqs = np.arange(n_grid) / n_grid - 0.5
    spec = ar_spectrum(reflection_to_ar(params), freqs)
    return float(freqs[np.argmax(spec)])


def rotate_reflection(params: ReflectionParams, shift: float) -> ReflectionParams:
    """Shift the model spectrum by ``shift`` in normalized frequency.

    Modulation y_n -> y_n e^{2i pi shift n} multiplies mu_k by e^{2i pi k shift}.
    """
    k = np.arange(1, params.order + 1)
    return ReflectionParams(params.p0, params.mu * np.exp(2j * np.pi * shift * k))


def scatter_to_reflection(scatter: np.ndarray, order: int) -> ReflectionParams:
    """Project an arbitrary HPD matrix onto the AR family by diagonal averaging.

    Averages each diagonal into an autocovariance estimate, then runs the
    Levinson recursion (coefficients clamped onto the disk).  Used to render
    spectra for estimators that return an unstructured scatter matrix.
    """
    scatter = np.asarray(scatter, dtype=complex)
    d = scatter.shape[0]
    gamma = np.array([np.mean(np.diagonal(scatter, offset=-t)) for t in range(d)])
    p0 = gamma[0].real
    if p0 <= 0:
        raise DegenerateCovariance("diagonal average gamma(0) not positive")
    p = p0
    mu = np.zeros(order, dtype=complex)
    a = np.zeros(0, dtype=complex)
    for m in range(order):
        acc = np.dot(a, gamma[m:0:-1]) if m else 0.0
        mu_next = clamp_reflection(-(gamma[m + 1] + acc) / p)[0]
        mu[m] = mu_next
        a = np.concatenate([a + mu_next * a[::-1].conj(), [mu_next]])
        p *= 1 - abs(mu_next) ** 2
    return ReflectionParams(p0, mu)
