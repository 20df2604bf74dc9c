"""Scatter and reflection-coefficient estimators.

The family covers the multisegment Burg estimators (Gaussian and texture-
invariant Normalized variants), per-cell Burg estimates aggregated by
Euclidean/hyperbolic means and medians, the contamination-robust 2-step
median procedures, and the Tyler fixed-point estimator with its 2-step
variant.  All estimators except the Gaussian Burg are exactly invariant to
independent positive per-cell scalings of the data.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator

from .ar import (ARCoefficients, ReflectionParams, clamp_reflection,
                 reflection_to_ar, reflection_to_scatter)
from .errors import (DegenerateCovariance, DomainError, NoConvergence,
                     RankDeficient, ZeroEnergy)
from .geometry import (euclidean_median_batch, poincare_distance_grid,
                       poincare_mean_batch, poincare_median_batch)
from .linalg import trace_normalize

# ---------------------------------------------------------------------------
# Bias function of the raw normalized-energy minimizer and its inverse
# ---------------------------------------------------------------------------

_B1_SERIES_CUTOFF = 0.1


def _b1_scalar(x: float) -> float:
    if x < _B1_SERIES_CUTOFF:
        # closed form cancels catastrophically near 0; series is exact there
        s = 0.0
        xk = x
        x2 = x * x
        for k in range(1, 13):
            s += (2 * k / (2 * k + 1)) * xk
            xk *= x2
        return (1 - x2) * s
    return (1 - x * x) / x * ((math.log1p(-x) - math.log1p(x)) / (2 * x) + 1 / (1 - x * x))


def bias_b1(x):
    """Asymptotic magnitude bias of the raw normalized Burg estimate.

    B1(x) = ((1-x^2)/x) ((log(1-x) - log(1+x))/(2x) + 1/(1-x^2)) on (0, 1),
    strictly increasing with B1(x) < x, slope 2/3 at 0+ and limit 1 at 1-.
    """
    arr = np.asarray(x, dtype=float)
    if np.any(arr <= 0) or np.any(arr >= 1):
        raise DomainError("bias_b1 is defined on the open interval (0, 1)")
    if arr.ndim == 0:
        return _b1_scalar(float(arr))
    out = np.empty_like(arr)
    small = arr < _B1_SERIES_CUTOFF
    xs = arr[small]
    s = np.zeros_like(xs)
    for k in range(1, 13):
        s += (2 * k / (2 * k + 1)) * xs ** (2 * k - 1)
    out[small] = (1 - xs ** 2) * s
    xl = arr[~small]
    out[~small] = (1 - xl ** 2) / xl * ((np.log1p(-xl) - np.log1p(xl)) / (2 * xl)
                                        + 1 / (1 - xl ** 2))
    return out


class _B1Inverse:
    """Grid-precomputed inverse of B1, refined by bisection to 1e-10."""

    def __init__(self, n_grid: int = 4096):
        x = np.linspace(1e-9, 1 - 1e-9, n_grid)
        y = np.array([_b1_scalar(v) for v in x])
        self._interp = PchipInterpolator(y, x)
        self._y_lo, self._y_hi = y[0], y[-1]

    def __call__(self, y: float) -> float:
        if y <= 0 or y >= 1:
            raise DomainError("bias_b1_inverse is defined on the open interval (0, 1)")
        if y <= self._y_lo:
            return y * 1.5  # linear branch below the grid: B1(x) ~ (2/3) x
        if y >= self._y_hi:
            return 1 - 1e-9
        x0 = float(self._interp(y))
        lo = max(x0 - 1e-3, 1e-12)
        hi = min(x0 + 1e-3, 1 - 1e-12)
        if _b1_scalar(lo) > y:
            lo = 1e-12
        if _b1_scalar(hi) < y:
            hi = 1 - 1e-12
        for _ in range(52):
            mid = 0.5 * (lo + hi)
            if _b1_scalar(mid) < y:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-14:
                break
        return 0.5 * (lo + hi)


_b1_inverse = None


def bias_b1_inverse(y: float) -> float:
    """Inverse of bias_b1 on (0, 1), accurate to better than 1e-10."""
    global _b1_inverse
    if _b1_inverse is None:
        _b1_inverse = _B1Inverse()
    return _b1_inverse(float(y))


# ---------------------------------------------------------------------------
# Burg-Levinson driver and the per-order reflection estimation rules
# ---------------------------------------------------------------------------

def _as_cells(data) -> np.ndarray:
    cells = np.asarray(getattr(data, "cells", data), dtype=complex)
    if cells.ndim == 1:
        cells = cells[None, :]
    if cells.ndim != 2:
        raise DegenerateCovariance(f"expected (N, d) samples, got shape {cells.shape}")
    return cells


def gaussian_burg_mu(fwd: np.ndarray, bwd: np.ndarray) -> complex:
    """Multisegment Gaussian Burg rule: -2 sum(f conj(b)) / sum(|f|^2 + |b|^2).

    ``fwd``/``bwd`` hold the aligned forward errors f_m(n) and delayed
    backward errors b_m(n-1) over all cells and admissible times.
    """
    den = float((np.abs(fwd) ** 2 + np.abs(bwd) ** 2).sum())
    if den == 0:
        raise ZeroEnergy("all prediction errors vanish")
    mu = -2 * (fwd * bwd.conj()).sum() / den
    return complex(clamp_reflection(mu)[0])


def raw_normalized_burg_mu(fwd: np.ndarray, bwd: np.ndarray) -> complex:
    """Texture-free energy minimizer: mean of -2 f conj(b) / (|f|^2 + |b|^2).

    Each summand is scale invariant and has modulus <= 1, so |result| <= 1.
    Terms with zero energy are skipped; ZeroEnergy if all are.
    """
    den = np.abs(fwd) ** 2 + np.abs(bwd) ** 2
    ok = den > 0
    n_ok = int(ok.sum())
    if n_ok == 0:
        raise ZeroEnergy("all prediction errors vanish")
    return complex(-2 * (bwd[ok].conj() * fwd[ok] / den[ok]).sum() / n_ok)


def normalized_burg_mu(fwd: np.ndarray, bwd: np.ndarray) -> complex:
    """Bias-corrected normalized Burg rule: B1^{-1}(|raw|) raw/|raw|."""
    raw = raw_normalized_burg_mu(fwd, bwd)
    r = abs(raw)
    if r == 0:
        return 0j
    r = min(r, 1 - 1e-9)
    return bias_b1_inverse(r) * raw / abs(raw)


def burg_levinson_driver(data, order: int, mu_rule):
    """Generalized Burg-Levinson driver.

    Runs the order recursion once, calling ``mu_rule(fwd, bwd)`` on the
    current error lattice to estimate each reflection coefficient, then
    updating powers, AR coefficients and the forward/backward errors.
    Returns (ReflectionParams, ARCoefficients).
    """
    cells = _as_cells(data)
    n_cells, d = cells.shape
    if not 0 <= order <= d - 1:
        raise DegenerateCovariance(f"order {order} not in [0, {d - 1}]")
    energy = (np.abs(cells) ** 2).sum(axis=1)
    if np.any(energy == 0):
        raise DegenerateCovariance("burst contains an all-zero range cell")
    p0 = float(energy.sum() / (n_cells * d))
    fwd = cells.copy()
    bwd = cells.copy()
    mu = np.zeros(order, dtype=complex)
    for m in range(order):
        f_m = fwd[:, m + 1:]
        b_m = bwd[:, m:-1]
        mu_m = clamp_reflection(mu_rule(f_m, b_m))[0]
        mu[m] = mu_m
        fwd = np.concatenate([fwd[:, :m + 1], f_m + mu_m * b_m], axis=1)
        bwd = np.concatenate([bwd[:, :m + 1], b_m + np.conj(mu_m) * f_m], axis=1)
    params = ReflectionParams(p0, mu)
    return params, reflection_to_ar(params)


def estimate_gaussian_burg(data, order: int) -> ReflectionParams:
    """Multisegment Gaussian Burg estimate (texture sensitive)."""
    params, _ = burg_levinson_driver(data, order, gaussian_burg_mu)
    return params


def estimate_normalized_burg(data, order: int, return_raw: bool = False):
    """Multisegment Normalized Burg estimate with bias correction.

    With ``return_raw`` also returns the raw (uncorrected) per-order
    estimates; the lattice still propagates the corrected values.
    """
    if not return_raw:
        params, _ = burg_levinson_driver(data, order, normalized_burg_mu)
        return params
    raws: list[complex] = []

    def recording_rule(fwd, bwd):
        raw = raw_normalized_burg_mu(fwd, bwd)
        raws.append(raw)
        r = abs(raw)
        if r == 0:
            return 0j
        return bias_b1_inverse(min(r, 1 - 1e-9)) * raw / r

    params, _ = burg_levinson_driver(data, order, recording_rule)
    return params, np.asarray(raws, dtype=complex)


def per_cell_burg(data, order: int):
    """Single-segment Gaussian Burg estimates per range cell, vectorized.

    Each cell's lattice is driven by its own estimates only.  Returns
    (mu array (N, order), valid mask (N,)); cells whose error energy dies at
    some order are marked invalid and excluded from aggregation.
    """
    cells = _as_cells(data)
    n_cells, d = cells.shape
    if order > d - 1:
        raise DegenerateCovariance(f"order {order} exceeds d-1 = {d - 1}")
    fwd = cells.copy()
    bwd = cells.copy()
    mus = np.zeros((n_cells, order), dtype=complex)
    valid = (np.abs(cells) ** 2).sum(axis=1) > 0
    for m in range(order):
        f_m = fwd[:, m + 1:]
        b_m = bwd[:, m:-1]
        den = (np.abs(f_m) ** 2 + np.abs(b_m) ** 2).sum(axis=1)
        alive = den > 0
        valid &= alive
        safe = np.where(alive, den, 1.0)
        mu_m = np.where(alive, -2 * (f_m * b_m.conj()).sum(axis=1) / safe, 0.0)
        mu_m = clamp_reflection(mu_m)
        mus[:, m] = mu_m
        fwd = np.concatenate([fwd[:, :m + 1], f_m + mu_m[:, None] * b_m], axis=1)
        bwd = np.concatenate([bwd[:, :m + 1], b_m + mu_m.conj()[:, None] * f_m], axis=1)
    if not valid.any():
        raise ZeroEnergy("every range cell has degenerate prediction errors")
    return mus, valid


def _burst_power(cells: np.ndarray) -> float:
    return float((np.abs(cells) ** 2).mean())


def aggregate_burg(cell_mus: np.ndarray, kind: str, metric: str, p0: float,
                   tol: float = 1e-8, max_iter: int = 500) -> ReflectionParams:
    """Aggregate per-cell reflection estimates order by order.

    ``kind`` is 'mean' or 'median', ``metric`` 'euclidean' or 'poincare'.
    Aggregation is unweighted and applied to each reflection order
    independently.
    """
    pts = np.asarray(cell_mus, dtype=complex).T  # (order, n_cells)
    if pts.size == 0:
        return ReflectionParams(p0, np.zeros(0, dtype=complex))
    if metric == "poincare":
        pts = clamp_reflection(pts)
    if kind == "mean" and metric == "euclidean":
        mu = pts.mean(axis=1)
    elif kind == "mean" and metric == "poincare":
        mu, _, conv, _ = poincare_mean_batch(pts, tol=tol, max_iter=max_iter)
        if not conv.all():
            raise NoConvergence("Poincare mean did not converge at order "
                                f"{int(np.flatnonzero(~conv)[0]) + 1}")
    elif kind == "median" and metric == "euclidean":
        mu, _, conv, _ = euclidean_median_batch(pts, tol=tol, max_iter=max_iter)
        if not conv.all():
            raise NoConvergence("euclidean median did not converge at order "
                                f"{int(np.flatnonzero(~conv)[0]) + 1}")
    elif kind == "median" and metric == "poincare":
        mu, _, conv, _ = poincare_median_batch(pts, tol=tol, max_iter=max_iter)
        if not conv.all():
            raise NoConvergence("Poincare median did not converge at order "
                                f"{int(np.flatnonzero(~conv)[0]) + 1}")
    else:
        raise ValueError(f"unknown aggregation kind={kind!r} metric={metric!r}")
    return ReflectionParams(p0, clamp_reflection(mu))


def estimate_mean_burg(data, order: int, metric: str) -> ReflectionParams:
    cells = _as_cells(data)
    mus, valid = per_cell_burg(cells, order)
    return aggregate_burg(mus[valid], "mean", metric, _burst_power(cells))


def estimate_median_burg(data, order: int, metric: str,
                         tol: float = 1e-8, max_iter: int = 500) -> ReflectionParams:
    cells = _as_cells(data)
    mus, valid = per_cell_burg(cells, order)
    return aggregate_burg(mus[valid], "median", metric, _burst_power(cells),
                          tol=tol, max_iter=max_iter)


def two_step_median_burg(data, order: int, metric: str,
                         tol: float = 1e-8, max_iter: int = 500) -> ReflectionParams:
    """2-step median: median, keep the ceil(N/2) closest cells per order, re-median.

    Per-cell estimates come from single-segment Gaussian Burg; the distance
    ranking and both medians use the chosen metric, independently per order.
    """
    cells = _as_cells(data)
    if cells.shape[0] < 4:
        raise DegenerateCovariance("2-step median needs at least 4 range cells")
    mus, valid = per_cell_burg(cells, order)
    pts = mus[valid].T  # (order, n_valid)
    n_valid = pts.shape[1]
    # the first pass only ranks cells by distance, so a loose tolerance is fine
    tol0 = max(tol, 1e-4)
    if metric == "poincare":
        pts = clamp_reflection(pts)
        med0, _, conv, _ = poincare_median_batch(pts, tol=tol0, max_iter=max_iter)
        dist = poincare_distance_grid(pts, med0[:, None])
    else:
        med0, _, conv, _ = euclidean_median_batch(pts, tol=tol0, max_iter=max_iter)
        dist = np.abs(pts - med0[:, None])
    if not conv.all():
        raise NoConvergence("first-pass median did not converge")
    keep = math.ceil(n_valid / 2)
    nearest = np.argsort(dist, axis=1, kind="stable")[:, :keep]
    kept = np.take_along_axis(pts, nearest, axis=1)
    if metric == "poincare":
        mu, _, conv, _ = poincare_median_batch(kept, tol=tol, max_iter=max_iter)
    else:
        mu, _, conv, _ = euclidean_median_batch(kept, tol=tol, max_iter=max_iter)
    if not conv.all():
        raise NoConvergence("second-pass median did not converge")
    # power from the mean-square rule on the cells kept at order 1; power
    # does not affect trace-normalized consumers
    first_kept = np.flatnonzero(valid)[nearest[0]] if order else np.arange(cells.shape[0])
    p0 = _burst_power(cells[first_kept])
    return ReflectionParams(p0, clamp_reflection(mu))


# ---------------------------------------------------------------------------
# Tyler fixed point
# ---------------------------------------------------------------------------

def tyler_fixed_point(data, tol: float = 1e-6, max_iter: int = 200) -> np.ndarray:
    """Tyler's M-estimator: the fixed point of
    S = (d/N) sum_i x_i x_i^* / (x_i^* S^{-1} x_i), trace-normalized to d.

    Iterates from the identity until the relative Frobenius update falls
    below ``tol``.  Requires N >= d and no all-zero cell.
    """
    cells = _as_cells(data)
    n_cells, d = cells.shape
    if n_cells < d:
        raise RankDeficient(f"Tyler fixed point needs N >= d, got N={n_cells}, d={d}")
    norms = (np.abs(cells) ** 2).sum(axis=1)
    if np.any(norms == 0):
        raise ZeroEnergy("burst contains an all-zero range cell")
    scatter = np.eye(d, dtype=complex)
    for _ in range(max_iter):
        inv = np.linalg.inv(scatter)
        quad = np.einsum("ij,jk,ik->i", cells.conj(), inv, cells).real
        if np.any(quad <= 0):
            raise RankDeficient("nonpositive quadratic form; sample is rank deficient")
        weighted = cells / quad[:, None]
        update = (d / n_cells) * (weighted.T @ cells.conj())
        update *= d / np.trace(update).real
        resid = np.linalg.norm(update - scatter) / np.linalg.norm(scatter)
        scatter = update
        if resid <= tol:
            return scatter
    raise NoConvergence(f"Tyler fixed point: residual {resid:.3e} > tol after {max_iter} iterations")


def two_step_fixed_point(data, tol: float = 1e-6, max_iter: int = 200) -> np.ndarray:
    """2-step Tyler: select the ceil(N/2) cells most likely under the first fit.

    Cells are ranked by the angular log-likelihood -d log(x~^* S^{-1} x~) of
    the normalized samples x~ = x/|x| (scale invariant), and the fixed point
    is recomputed on the kept half.
    """
    cells = _as_cells(data)
    n_cells, d = cells.shape
    keep = math.ceil(n_cells / 2)
    if keep < d:
        raise RankDeficient(f"second pass needs ceil(N/2) >= d, got {keep} < {d}")
    first = tyler_fixed_point(cells, tol=tol, max_iter=max_iter)
    unit = cells / np.sqrt((np.abs(cells) ** 2).sum(axis=1))[:, None]
    inv = np.linalg.inv(first)
    quad = np.einsum("ij,jk,ik->i", unit.conj(), inv, unit).real
    loglik = -d * np.log(quad)
    kept = np.argsort(-loglik, kind="stable")[:keep]
    return tyler_fixed_point(cells[kept], tol=tol, max_iter=max_iter)


# ---------------------------------------------------------------------------
# Estimator catalog
# ---------------------------------------------------------------------------

GAUSSIAN_BURG = "gaussian-burg"
NORMALIZED_BURG = "normalized-burg"
EUCLIDEAN_MEAN_BURG = "euclidean-mean-burg"
POINCARE_MEAN_BURG = "poincare-mean-burg"
EUCLIDEAN_MEDIAN_BURG = "euclidean-median-burg"
POINCARE_MEDIAN_BURG = "poincare-median-burg"
TWO_STEP_EUCLIDEAN_MEDIAN = "2step-euclidean-median-burg"
TWO_STEP_POINCARE_MEDIAN = "2step-poincare-median-burg"
FIXED_POINT = "fixed-point"
TWO_STEP_FIXED_POINT = "2step-fixed-point"
IDEAL = "ideal"

ALL_ESTIMATORS = (
    GAUSSIAN_BURG, NORMALIZED_BURG, EUCLIDEAN_MEAN_BURG, POINCARE_MEAN_BURG,
    EUCLIDEAN_MEDIAN_BURG, POINCARE_MEDIAN_BURG, TWO_STEP_EUCLIDEAN_MEDIAN,
    TWO_STEP_POINCARE_MEDIAN, FIXED_POINT, TWO_STEP_FIXED_POINT,
)

_ALIASES = {
    "gaussian": GAUSSIAN_BURG,
    "normalized": NORMALIZED_BURG,
    "euclidean-mean": EUCLIDEAN_MEAN_BURG,
    "poincare-mean": POINCARE_MEAN_BURG,
    "euclidean-median": EUCLIDEAN_MEDIAN_BURG,
    "poincare-median": POINCARE_MEDIAN_BURG,
    "2step-euclidean-median": TWO_STEP_EUCLIDEAN_MEDIAN,
    "2step-poincare-median": TWO_STEP_POINCARE_MEDIAN,
    "fp": FIXED_POINT,
    "2step-fp": TWO_STEP_FIXED_POINT,
}


@dataclass(frozen=True)
class EstimatorKind:
    """An estimator tag plus its options (AR order, iteration tolerances)."""

    name: str
    order: int | None = None      # None -> maximal order d-1
    tol: float = 1e-6
    max_iter: int = 500

    def resolved_order(self, d: int) -> int:
        order = d - 1 if self.order is None else self.order
        if order > d - 1:
            raise DegenerateCovariance(f"order {order} exceeds d-1 = {d - 1}")
        return order


def parse_estimator(name: str, **options) -> EstimatorKind:
    key = name.strip().lower()
    key = _ALIASES.get(key, key)
    if key not in ALL_ESTIMATORS and key != IDEAL:
        raise ValueError(f"unknown estimator {name!r}; known: {', '.join(ALL_ESTIMATORS)}")
    return EstimatorKind(key, **options)


@dataclass
class ScatterEstimate:
    """Scatter matrix (trace d) plus reflection parameters when available."""

    scatter: np.ndarray
    params: ReflectionParams | None
    kind: EstimatorKind


def estimate_scatter(kind: EstimatorKind | str, data) -> ScatterEstimate:
    """Run one estimator on a burst and return a trace-d scatter matrix.

    Detectors consume the scatter; the AR geometric detector additionally
    needs ``params``, which the fixed-point family does not provide.
    """
    if isinstance(kind, str):
        kind = parse_estimator(kind)
    cells = _as_cells(data)
    d = cells.shape[1]
    order = kind.resolved_order(d)
    name = kind.name
    params = None
    if name == GAUSSIAN_BURG:
        params = estimate_gaussian_burg(cells, order)
    elif name == NORMALIZED_BURG:
        params = estimate_normalized_burg(cells, order)
    elif name == EUCLIDEAN_MEAN_BURG:
        params = estimate_mean_burg(cells, order, "euclidean")
    elif name == POINCARE_MEAN_BURG:
        params = estimate_mean_burg(cells, order, "poincare")
    elif name == EUCLIDEAN_MEDIAN_BURG:
        params = estimate_median_burg(cells, order, "euclidean",
                                      tol=kind.tol, max_iter=kind.max_iter)
    elif name == POINCARE_MEDIAN_BURG:
        params = estimate_median_burg(cells, order, "poincare",
                                      tol=kind.tol, max_iter=kind.max_iter)
    elif name == TWO_STEP_EUCLIDEAN_MEDIAN:
        params = two_step_median_burg(cells, order, "euclidean",
                                      tol=kind.tol, max_iter=kind.max_iter)
    elif name == TWO_STEP_POINCARE_MEDIAN:
        params = two_step_median_burg(cells, order, "poincare",
                                      tol=kind.tol, max_iter=kind.max_iter)
    elif name == FIXED_POINT:
        scatter = tyler_fixed_point(cells, tol=kind.tol, max_iter=kind.max_iter)
        return ScatterEstimate(trace_normalize(scatter), None, kind)
    elif name == TWO_STEP_FIXED_POINT:
        scatter = two_step_fixed_point(cells, tol=kind.tol, max_iter=kind.max_iter)
        return ScatterEstimate(trace_normalize(scatter), None, kind)
    else:
        raise ValueError(f"estimator {name!r} cannot run on data alone")
    scatter = reflection_to_scatter(params, d, normalize_trace=True)
    return ScatterEstimate(scatter, params, kind)
