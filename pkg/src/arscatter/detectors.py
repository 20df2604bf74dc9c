"""Detection statistics and Monte-Carlo threshold calibration.

GLRT/ANMF with a steering-frequency search, the geometric detector on
reflection coefficients, an OS-CFAR baseline on Doppler filter-bank outputs,
and the empirical-quantile calibration machinery shared by all of them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ar import ReflectionParams, clamp_reflection
from .errors import (InsufficientTrials, SingularScatter, WindowTooLarge)
from .estimators import IDEAL, EstimatorKind, estimate_scatter, per_cell_burg
from .geometry import poincare_distance_grid
from .linalg import trace_normalize

DEFAULT_GRID_FACTOR = 8  # frequency grid density: 8 d points


@dataclass
class FrequencyGrid:
    """Equispaced normalized frequencies in [-0.5, 0.5)."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)

    @property
    def n_points(self) -> int:
        return len(self.values)

    @classmethod
    def regular(cls, n_points: int) -> "FrequencyGrid":
        return cls(np.arange(n_points) / n_points - 0.5)

    @classmethod
    def for_dim(cls, d: int, factor: int = DEFAULT_GRID_FACTOR) -> "FrequencyGrid":
        return cls.regular(factor * d)


@dataclass
class DetectorReport:
    """Outcome of one detection test."""

    statistic: float
    threshold: float
    detected: bool
    est_freq: float | None = None


def steering_vector(f: float, d: int) -> np.ndarray:
    return np.exp(2j * np.pi * f * np.arange(d))


def glrt_statistic(z: np.ndarray, sigma: np.ndarray,
                   grid: FrequencyGrid) -> tuple[float, float]:
    """GLRT/ANMF statistic max_theta |p^* S^{-1} z|^2 / ((z^* S^{-1} z)(p^* S^{-1} p)).

    Returns (statistic in [0, 1], argmax frequency).  The grid must resolve
    the steering mainlobe: at least d points.
    """
    z = np.asarray(z, dtype=complex)
    d = len(z)
    if grid.n_points < d:
        raise ValueError(f"frequency grid too coarse: {grid.n_points} < d = {d}")
    try:
        inv = np.linalg.inv(sigma)
    except np.linalg.LinAlgError as exc:
        raise SingularScatter(str(exc)) from exc
    steer = np.exp(2j * np.pi * np.outer(np.arange(d), grid.values))
    u = inv @ z
    num = np.abs(steer.conj().T @ u) ** 2
    denom_z = (z.conj() @ u).real
    if denom_z <= 0:
        raise SingularScatter("z^* S^{-1} z is not positive")
    denom_p = np.einsum("dg,de,eg->g", steer.conj(), inv, steer).real
    stats = num / (denom_z * denom_p)
    best = int(np.argmax(stats))
    return float(stats[best]), float(grid.values[best])


def glrt(z: np.ndarray, sigma: np.ndarray, grid: FrequencyGrid,
         threshold: float) -> DetectorReport:
    stat, freq = glrt_statistic(z, sigma, grid)
    return DetectorReport(stat, threshold, stat > threshold, freq)


def _cut_reflection(z: np.ndarray, order: int | None = None) -> np.ndarray:
    """Reflection estimate of the cell under test: single-segment Gaussian
    Burg at order d-1 (default), magnitudes clamped onto the disk."""
    z = np.asarray(z, dtype=complex)
    order = len(z) - 1 if order is None else order
    mu_z, _ = per_cell_burg(z[None, :], order)
    return clamp_reflection(mu_z[0])


def _ar_statistic_from_mu(mu_z: np.ndarray, ambient: ReflectionParams) -> float:
    order = len(mu_z)
    amb = clamp_reflection(ambient.mu[:order])
    if len(amb) < order:
        amb = np.concatenate([amb, np.zeros(order - len(amb), dtype=complex)])
    dist = poincare_distance_grid(mu_z, amb)
    weights = np.arange(order, 0, -1)
    return float((weights * dist ** 2).sum())


def ar_statistic(z: np.ndarray, ambient: ReflectionParams,
                 order: int | None = None) -> float:
    """Geometric detector: sum_k (M-k+1) d_P(mu_k(z), mu_k_ambient)^2.

    The cell under test is fit by single-segment Gaussian Burg at order
    M = d-1 (magnitudes clamped onto the disk); hyperbolic distances to the
    ambient coefficients are weighted by M-k+1.
    """
    return _ar_statistic_from_mu(_cut_reflection(z, order), ambient)


def ar_detector(z: np.ndarray, ambient: ReflectionParams, threshold: float,
                order: int | None = None) -> DetectorReport:
    stat = ar_statistic(z, ambient, order)
    return DetectorReport(stat, threshold, stat > threshold, None)


# ---------------------------------------------------------------------------
# OS-CFAR on Doppler filter-bank outputs
# ---------------------------------------------------------------------------

def doppler_map(cells: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Hamming-windowed d-point Doppler filter bank per range cell.

    Returns (magnitudes (N, d), bin frequencies in [-0.5, 0.5))."""
    cells = np.asarray(cells, dtype=complex)
    if cells.ndim == 1:
        cells = cells[None, :]
    d = cells.shape[1]
    windowed = cells * np.hamming(d)
    spectrum = np.fft.fftshift(np.fft.fft(windowed, axis=1), axes=1)
    freqs = np.fft.fftshift(np.fft.fftfreq(d))
    return np.abs(spectrum), freqs


def _os_threshold(column: np.ndarray, i: int, window: int, k: int, guard: int):
    """k-th smallest of the window reference cells around i (guards excluded)."""
    n = len(column)
    half = window // 2
    lo = max(0, i - half - guard)
    hi = min(n, i + half + guard + 1)
    idx = [j for j in range(lo, hi) if abs(j - i) > guard]
    ref = column[idx]
    # truncated edge windows keep the same quantile position
    k_eff = max(1, min(len(ref), round(k * len(ref) / window)))
    return np.partition(ref, k_eff - 1)[k_eff - 1]


def os_cfar(mag_map: np.ndarray, window: int = 16, k: int = 12,
            scale: float = 1.0, guard: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Order-statistic CFAR along range, per Doppler bin.

    A cell-Doppler bin is detected when its magnitude exceeds ``scale`` times
    the k-th order statistic (1-based, ascending) of the ``window`` reference
    cells at the same Doppler, excluding the cell under test and ``guard``
    cells each side.  Returns (detections bool map, threshold map).
    """
    mag_map = np.asarray(mag_map, dtype=float)
    if mag_map.ndim == 1:
        mag_map = mag_map[:, None]
    n_cells, _ = mag_map.shape
    if window % 2:
        raise WindowTooLarge("reference window must be even")
    if k > window or k < 1:
        raise WindowTooLarge(f"order index k={k} outside 1..{window}")
    if window + 2 * guard + 1 > n_cells:
        raise WindowTooLarge(f"window {window} (+guards) exceeds {n_cells} cells")
    thresholds = np.empty_like(mag_map)
    for b in range(mag_map.shape[1]):
        col = mag_map[:, b]
        for i in range(n_cells):
            thresholds[i, b] = scale * _os_threshold(col, i, window, k, guard)
    return mag_map > thresholds, thresholds


def os_cfar_statistic(cut: np.ndarray, reference: np.ndarray,
                      window: int = 16, k: int = 12) -> float:
    """Scale-free OS-CFAR test statistic for one cell under test.

    max over Doppler bins of |CUT bin| / (k-th order statistic of the
    reference cells' magnitudes in that bin); calibrating a threshold on this
    ratio is equivalent to calibrating the CFAR scale factor.
    """
    ref_mag, _ = doppler_map(reference)
    cut_mag, _ = doppler_map(cut)
    n_ref = ref_mag.shape[0]
    if window > n_ref:
        raise WindowTooLarge(f"window {window} exceeds {n_ref} reference cells")
    take = ref_mag[:window] if n_ref >= window else ref_mag
    k_eff = max(1, min(len(take), round(k * len(take) / window)))
    os_stat = np.partition(take, k_eff - 1, axis=0)[k_eff - 1]
    return float((cut_mag[0] / np.maximum(os_stat, 1e-300)).max())


# ---------------------------------------------------------------------------
# Threshold calibration
# ---------------------------------------------------------------------------

def empirical_quantile_higher(sample: np.ndarray, level: float) -> float:
    """Smallest sample value whose empirical CDF reaches ``level``."""
    ordered = np.sort(np.asarray(sample, dtype=float))
    idx = max(int(math.ceil(level * len(ordered))) - 1, 0)
    return float(ordered[idx])


def calibrate_threshold(sampler, pfa: float, n_trials: int | None = None) -> float:
    """Threshold at the empirical (1 - pfa) quantile of the null statistic.

    ``sampler`` is either an array of pre-computed null statistics or a
    callable ``sampler(n_trials) -> array``.  Uses the higher-interpolation
    quantile (conservative for the false-alarm rate).  Requires at least
    10/pfa trials.
    """
    if callable(sampler):
        if n_trials is None:
            raise InsufficientTrials("n_trials required with a callable sampler")
        stats = np.asarray(sampler(n_trials), dtype=float)
    else:
        stats = np.asarray(sampler, dtype=float)
    if len(stats) < 10 / pfa:
        raise InsufficientTrials(
            f"{len(stats)} trials < 10/pfa = {10 / pfa:.0f} needed for pfa={pfa}")
    return empirical_quantile_higher(stats, 1 - pfa)


def empirical_pfa(stats: np.ndarray, threshold: float) -> tuple[float, float]:
    """Realized false-alarm rate and its binomial standard error."""
    stats = np.asarray(stats, dtype=float)
    p = float(np.mean(stats > threshold))
    se = math.sqrt(max(p * (1 - p), 1e-300) / len(stats))
    return p, se


# ---------------------------------------------------------------------------
# Scenario-level statistic sampling and detection probability
# ---------------------------------------------------------------------------

GLRT = "glrt"
AR = "ar"
OS_CFAR = "os-cfar"
ALL_DETECTORS = (GLRT, AR, OS_CFAR)


def trial_statistic(cfg, estimator: EstimatorKind, detector: str, trial: int,
                    alpha: float | None = None, f_d: float | None = None,
                    grid: FrequencyGrid | None = None) -> float:
    """One Monte-Carlo trial: burst, estimate, cell under test, statistic.

    ``estimator`` may be the 'ideal' pseudo-kind using the true scatter.
    The AR detector requires an estimator that yields reflection parameters.
    """
    from .simulation import build_burst, draw_test_cell  # local to avoid cycles

    burst, truth = build_burst(cfg, trial)
    z = draw_test_cell(cfg, trial, alpha=alpha, f_d=f_d)
    if detector == OS_CFAR:
        return os_cfar_statistic(z, burst.cells)
    if estimator.name == IDEAL:
        if detector != GLRT:
            raise ValueError("the ideal benchmark is defined for the GLRT detector")
        return glrt_statistic(z, trace_normalize(truth), grid or FrequencyGrid.for_dim(cfg.d))[0]
    est = estimate_scatter(estimator, burst.cells)
    if detector == GLRT:
        return glrt_statistic(z, est.scatter, grid or FrequencyGrid.for_dim(cfg.d))[0]
    if detector == AR:
        if est.params is None:
            raise ValueError(f"AR detector needs reflection parameters; "
                             f"{estimator.name} does not provide them")
        return ar_statistic(z, est.params)
    raise ValueError(f"unknown detector {detector!r}")


def trial_statistics_multi(cfg, pairs, trial: int,
                           alpha: float | None = None, f_d: float | None = None,
                           grid: FrequencyGrid | None = None) -> dict:
    """All (estimator, detector) statistics for one shared trial.

    The burst, test cell, scatter estimates and the test cell's reflection
    fit are computed once per trial, so comparisons are paired and cheap.
    """
    from .simulation import build_burst, draw_test_cell

    burst, truth = build_burst(cfg, trial)
    z = draw_test_cell(cfg, trial, alpha=alpha, f_d=f_d)
    grid = grid or FrequencyGrid.for_dim(cfg.d)
    estimates: dict = {}
    mu_cut = None
    out = {}
    for kind, det in pairs:
        key = (kind.name, det)
        if det == OS_CFAR:
            out[key] = os_cfar_statistic(z, burst.cells)
            continue
        if kind.name == IDEAL:
            if det != GLRT:
                raise ValueError("the ideal benchmark is defined for the GLRT detector")
            out[key] = glrt_statistic(z, trace_normalize(truth), grid)[0]
            continue
        if kind.name not in estimates:
            estimates[kind.name] = estimate_scatter(kind, burst.cells)
        est = estimates[kind.name]
        if det == GLRT:
            out[key] = glrt_statistic(z, est.scatter, grid)[0]
        elif det == AR:
            if est.params is None:
                raise ValueError(f"AR detector needs reflection parameters; "
                                 f"{kind.name} does not provide them")
            if mu_cut is None:
                mu_cut = _cut_reflection(z)
            out[key] = _ar_statistic_from_mu(mu_cut, est.params)
        else:
            raise ValueError(f"unknown detector {det!r}")
    return out


def null_statistics(cfg, estimator: EstimatorKind, detector: str,
                    n_trials: int, trial_offset: int = 0) -> np.ndarray:
    """No-target statistic sample used for calibration and PFA estimation."""
    return np.array([
        trial_statistic(cfg, estimator, detector, trial_offset + t, alpha=0.0)
        for t in range(n_trials)
    ])


_IDEAL_STREAM = 0x1DEA


def ideal_glrt_null_statistics(cfg, n_trials: int, chunk: int = 4096,
                               grid: FrequencyGrid | None = None,
                               stream: int = _IDEAL_STREAM) -> np.ndarray:
    """Vectorized no-target GLRT statistics with the scatter matrix known.

    The known-covariance benchmark needs no secondary data, so trials are
    generated in fixed-size chunks (one RNG stream per chunk; chunk size is a
    constant of the sampler, keeping the output independent of scheduling).
    """
    from .ar import reflection_to_scatter
    from .linalg import cholesky as chol_fn
    from .simulation import make_rng, sample_texture

    d = cfg.d
    grid = grid or FrequencyGrid.for_dim(d)
    law = cfg.resolved_texture()
    noise_amp = math.sqrt(cfg.noise_power() / 2)
    scatter = reflection_to_scatter(cfg.clutter, d, normalize_trace=False)
    chol = chol_fn(scatter)
    sigma = trace_normalize(scatter)
    inv = np.linalg.inv(sigma)
    steer = np.exp(2j * np.pi * np.outer(np.arange(d), grid.values))
    den_p = np.einsum("dg,de,eg->g", steer.conj(), inv, steer).real
    stats = np.empty(n_trials)
    done = 0
    for c in range(math.ceil(n_trials / chunk)):
        n = min(chunk, n_trials - done)
        rng = make_rng(cfg.seed, stream, c)
        tau = sample_texture(law, rng, size=n)
        g = (rng.standard_normal((n, d)) + 1j * rng.standard_normal((n, d))) / np.sqrt(2)
        z = tau[:, None] * (g @ chol.T)
        if noise_amp:
            z = z + noise_amp * (rng.standard_normal((n, d))
                                 + 1j * rng.standard_normal((n, d)))
        v = z @ inv.T
        num = np.abs(v @ steer.conj()) ** 2
        den_z = np.einsum("ij,ij->i", z.conj(), v).real
        stats[done:done + n] = (num / (den_z[:, None] * den_p)).max(axis=1)
        done += n
    return stats


def detection_probability(cfg, estimator: EstimatorKind, detector: str,
                          threshold: float, alpha: float, f_d: float,
                          n_trials: int, trial_offset: int = 0) -> tuple[float, float]:
    """Fraction of trials whose statistic exceeds the threshold, with the
    binomial standard error."""
    stats = np.array([
        trial_statistic(cfg, estimator, detector, trial_offset + t,
                        alpha=alpha, f_d=f_d)
        for t in range(n_trials)
    ])
    pd = float(np.mean(stats > threshold))
    se = math.sqrt(max(pd * (1 - pd), 1e-300) / n_trials)
    return pd, se
