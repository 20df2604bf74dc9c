"""Metric geometry on the Poincare unit disk and the complex plane.

Distances, Frechet means and medians.  The batch variants advance many
independent point sets at once (one per row) and are the work-horses of the
aggregation estimators; the scalar functions wrap them.

The hyperbolic metric is ds^2 = |dz|^2 / (1 - |z|^2)^2, whose distance is
d(a, b) = artanh |(a - b) / (1 - a conj(b))|.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoConvergence

COINCIDENCE_EPS = 1e-12


@dataclass
class AggregationResult:
    """Outcome of an iterative aggregation (mean or median)."""

    value: complex
    iterations: int
    converged: bool
    final_step: float


def _check_disk(z: np.ndarray):
    if np.abs(z).max(initial=0.0) >= 1:
        raise ValueError("points must lie in the open unit disk")


def poincare_distance(a: complex, b: complex) -> float:
    """Hyperbolic distance artanh |(a-b)/(1 - a conj(b))| between disk points."""
    a, b = complex(a), complex(b)
    if abs(a) >= 1 or abs(b) >= 1:
        raise ValueError("points must lie in the open unit disk")
    delta = abs((a - b) / (1 - a * np.conj(b)))
    return float(np.arctanh(min(delta, 1.0 - 1e-16)))


def poincare_distance_grid(points: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Distances from each point (broadcast) to each entry of ``z``."""
    delta = np.abs((points - z) / (1 - points * np.conj(z)))
    return np.arctanh(np.minimum(delta, 1 - 1e-16))


def _mobius_to0(c, pts):
    return (pts - c) / (1 - np.conj(c) * pts)


def _mobius_from0(c, u):
    return (u + c) / (1 + np.conj(c) * u)


def _exp0(v):
    r = np.abs(v)
    safe = np.where(r > 0, r, 1.0)
    return np.where(r > 0, np.tanh(r) * v / safe, 0.0)


def poincare_mean_batch(pts: np.ndarray, tol: float = 1e-9, max_iter: int = 200):
    """Karcher mean per row of ``pts`` (shape (M, N)).

    Fixed-point iteration: center the current iterate by a Mobius translation,
    average the log-mapped points, step back through the exp map.  The unit
    step oscillates in a 2-cycle when points hug the boundary (hyperbolic
    diameters of several units), so the step is halved whenever the tangent
    gradient norm fails to decrease.
    Returns (values, iterations, converged mask, final tangent norms).
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=complex))
    c = pts.mean(axis=1)
    # Euclidean mean lies in the disk (convexity) so the start is always valid
    n_rows = len(c)
    iters = np.zeros(n_rows, dtype=int)
    steps = np.full(n_rows, np.inf)
    alpha = np.ones(n_rows)
    prev = np.full(n_rows, np.inf)
    active = np.ones(n_rows, dtype=bool)
    for _ in range(max_iter):
        u = _mobius_to0(c[:, None], pts)
        r = np.abs(u)
        scale = np.where(r > 0, np.arctanh(np.minimum(r, 1 - 1e-16)) / np.where(r > 0, r, 1), 1.0)
        g = (scale * u).mean(axis=1)
        gn = np.abs(g)
        steps[active] = gn[active]
        newly_done = active & (gn <= tol)
        active &= ~newly_done
        if not active.any():
            break
        alpha = np.where(active & (gn > prev), alpha * 0.5, alpha)
        prev = np.where(active, gn, prev)
        iters[active] += 1
        step = np.where(active, alpha * g, 0.0)
        c = _mobius_from0(c, _exp0(step))
    return c, iters, steps <= tol, steps


def _subgradient_certificate(pts: np.ndarray, candidates: np.ndarray,
                             rows: np.ndarray, eps: float, hyperbolic: bool):
    """Check the median optimality condition at ``candidates[rows]``.

    A point p with multiplicity m is a Frechet median iff the sum of unit
    (tangent) directions toward the remaining points has norm <= m.
    Returns a boolean mask over ``rows``.
    """
    sub = pts[rows]
    cand = candidates[rows, None]
    if hyperbolic:
        v = _mobius_to0(cand, sub)
    else:
        v = sub - cand
    r = np.abs(v)
    coincide = r <= eps
    unit = np.where(coincide, 0.0, v / np.where(r > 0, r, 1.0))
    g = np.abs(unit.sum(axis=1))
    return g <= coincide.sum(axis=1)


def poincare_median_batch(pts: np.ndarray, tol: float = 1e-8, max_iter: int = 500,
                          eps: float = COINCIDENCE_EPS):
    """Frechet median per row of ``pts`` (shape (M, N)).

    Weiszfeld-type Riemannian subgradient iteration: the descent direction is
    the sum of unit tangents toward the points, scaled by 1/sum(1/d_i), with
    Vardi-Zhang handling of iterates on data points.  When the nearest data
    point dominates the Weiszfeld weight the plain step degenerates to a slow
    crawl, so the exact optimality certificate is evaluated at that point
    (and the iterate snaps there if it passes); otherwise an accelerated step
    without the singular weight is tried and kept when it reaches a lower
    objective than the plain step.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=complex))
    # the Euclidean median is a cheap, robust warm start well inside the disk
    c, _, _, _ = euclidean_median_batch(pts, tol=1e-3, max_iter=60)
    c = np.where(np.abs(c) < 1, c, pts.mean(axis=1))
    n_rows = pts.shape[0]
    rows = np.arange(n_rows)
    iters = np.zeros(n_rows, dtype=int)
    grad = np.full(n_rows, np.inf)
    converged = np.zeros(n_rows, dtype=bool)
    active = np.ones(n_rows, dtype=bool)
    for _ in range(max_iter):
        u = _mobius_to0(c[:, None], pts)
        r = np.abs(u)
        coincide = r <= eps
        m = coincide.sum(axis=1)
        unit = np.where(coincide, 0.0, u / np.where(r > 0, r, 1.0))
        g = unit.sum(axis=1)
        gn = np.abs(g)
        dist = np.arctanh(np.minimum(r, 1 - 1e-16))
        w = np.where(coincide, 0.0, 1.0 / np.where(dist > 0, dist, 1.0)).sum(axis=1)
        done = np.where(m > 0, gn <= m, gn <= tol)
        grad[active] = gn[active]
        converged |= active & done
        active &= ~done
        dist_pos = np.where(coincide, np.inf, dist)
        nearest = np.argmin(dist_pos, axis=1)
        dmin = dist_pos[rows, nearest]
        w_near = 1.0 / np.maximum(dmin, 1e-300)
        crawl = active & (m == 0) & np.isfinite(dmin) & (w_near >= 0.6 * w)
        snap_rows = np.flatnonzero(crawl)
        if snap_rows.size:
            cand = pts[rows, nearest]
            ok = _subgradient_certificate(pts, cand, snap_rows, eps, hyperbolic=True)
            hit = snap_rows[ok]
            if hit.size:
                c[hit] = cand[hit]
                grad[hit] = 0.0
                converged[hit] = True
                active[hit] = False
                crawl[hit] = False
        if not active.any():
            break
        iters[active] += 1
        damp = np.where(m > 0, np.clip(1 - m / np.maximum(gn, 1e-300), 0, 1), 1.0)
        step = damp * g / np.maximum(w, 1e-300)
        try_rows = np.flatnonzero(crawl)
        if try_rows.size:
            # candidate without the singular weight, capped at dmin/2; taken
            # only when it beats the plain Weiszfeld step's objective
            def _obj_at(centers, rr):
                dd = np.arctanh(np.minimum(
                    np.abs(_mobius_to0(centers[:, None], pts[rr])), 1 - 1e-16))
                return dd.sum(axis=1)
            fast = g[try_rows] / np.maximum(w[try_rows] - w_near[try_rows], 1e-300)
            cap = 0.5 * dmin[try_rows]
            fast *= np.minimum(1.0, cap / np.maximum(np.abs(fast), 1e-300))
            obj_fast = _obj_at(_mobius_from0(c[try_rows], _exp0(fast)), try_rows)
            obj_plain = _obj_at(_mobius_from0(c[try_rows], _exp0(step[try_rows])),
                                try_rows)
            better = obj_fast < obj_plain
            idx = try_rows[better]
            step[idx] = fast[better]
        step = np.where(active, step, 0.0)
        c = _mobius_from0(c, _exp0(step))
    final = np.where(converged, np.minimum(grad, tol), grad)
    return c, iters, converged, final


def euclidean_median_batch(pts: np.ndarray, tol: float = 1e-10, max_iter: int = 500,
                           eps: float = COINCIDENCE_EPS):
    """Geometric median per row of ``pts`` by the Weiszfeld iteration.

    Vardi-Zhang handling of data points: a data point of multiplicity m is
    optimal iff the unit-direction sum R of the others satisfies |R| <= m,
    and steps taken from a data point are damped by (1 - m/|R|).  As in the
    hyperbolic case the optimality certificate is also evaluated at the
    nearest data point whenever the iterate crawls toward one.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=complex))
    c = pts.mean(axis=1)
    n_rows = len(c)
    rows = np.arange(n_rows)
    spread = np.abs(pts - c[:, None]).max(axis=1)
    scale = np.where(spread > 0, spread, 1.0)
    iters = np.zeros(n_rows, dtype=int)
    resid = np.full(n_rows, np.inf)
    converged = np.zeros(n_rows, dtype=bool)
    active = np.ones(n_rows, dtype=bool)
    for _ in range(max_iter):
        diff = pts - c[:, None]
        d = np.abs(diff)
        coincide = d <= eps * scale[:, None]
        m = coincide.sum(axis=1)
        w = np.where(coincide, 0.0, 1.0 / np.where(d > 0, d, 1.0))
        direction = (w * diff).sum(axis=1)          # sum of unit vectors
        weight = w.sum(axis=1)
        gn = np.abs(direction)
        done = np.where(m > 0, gn <= m, gn <= tol * np.maximum(weight, 1.0 / scale))
        resid[active] = gn[active]
        converged |= active & done
        active &= ~done
        d_pos = np.where(coincide, np.inf, d)
        nearest = np.argmin(d_pos, axis=1)
        dmin = d_pos[rows, nearest]
        w_near = 1.0 / np.maximum(dmin, 1e-300)
        crawl = active & (m == 0) & np.isfinite(dmin) & (w_near >= 0.6 * weight)
        snap_rows = np.flatnonzero(crawl)
        if snap_rows.size:
            cand = pts[rows, nearest]
            ok = _subgradient_certificate(pts, cand, snap_rows,
                                          eps * scale[snap_rows, None], hyperbolic=False)
            hit = snap_rows[ok]
            if hit.size:
                c[hit] = cand[hit]
                resid[hit] = 0.0
                converged[hit] = True
                active[hit] = False
                crawl[hit] = False
        if not active.any():
            break
        iters[active] += 1
        damp = np.where(m > 0, 1.0 - np.minimum(m / np.maximum(gn, 1e-300), 1.0), 1.0)
        step = damp * direction / np.maximum(weight, 1e-300)
        try_rows = np.flatnonzero(crawl)
        if try_rows.size:
            fast = direction[try_rows] / np.maximum(weight[try_rows] - w_near[try_rows],
                                                    1e-300)
            cap = 0.5 * dmin[try_rows]
            fast *= np.minimum(1.0, cap / np.maximum(np.abs(fast), 1e-300))
            obj_fast = np.abs(pts[try_rows] - (c[try_rows] + fast)[:, None]).sum(axis=1)
            obj_plain = np.abs(pts[try_rows]
                               - (c[try_rows] + step[try_rows])[:, None]).sum(axis=1)
            better = obj_fast < obj_plain
            idx = try_rows[better]
            step[idx] = fast[better]
        c = np.where(active, c + step, c)
    final = np.where(converged, np.minimum(resid, tol), resid)
    return c, iters, converged, final


def _scalar(result, tol) -> AggregationResult:
    c, iters, conv, step = result
    return AggregationResult(complex(c[0]), int(iters[0]), bool(conv[0]), float(step[0]))


def poincare_mean(points, tol: float = 1e-9, max_iter: int = 200) -> AggregationResult:
    """Frechet mean of disk points under the hyperbolic metric."""
    pts = np.asarray(list(points), dtype=complex)
    if pts.size == 0:
        raise ValueError("need at least one point")
    _check_disk(pts)
    return _scalar(poincare_mean_batch(pts[None, :], tol, max_iter), tol)


def poincare_median(points, tol: float = 1e-8, max_iter: int = 1000) -> AggregationResult:
    """Frechet median of disk points under the hyperbolic metric."""
    pts = np.asarray(list(points), dtype=complex)
    if pts.size == 0:
        raise ValueError("need at least one point")
    _check_disk(pts)
    return _scalar(poincare_median_batch(pts[None, :], tol, max_iter), tol)


def euclidean_median(points, tol: float = 1e-10, max_iter: int = 500) -> AggregationResult:
    """Geometric median of complex points (Weiszfeld with Vardi-Zhang fix)."""
    pts = np.asarray(list(points), dtype=complex)
    if pts.size == 0:
        raise ValueError("need at least one point")
    return _scalar(euclidean_median_batch(pts[None, :], tol, max_iter), tol)


def require_converged(result: AggregationResult, what: str) -> AggregationResult:
    if not result.converged:
        raise NoConvergence(f"{what} did not converge "
                            f"(iterations={result.iterations}, residual={result.final_step:.3e})")
    return result
