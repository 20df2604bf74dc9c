"""Experiment drivers: Monte-Carlo estimation error, detection curves,
false-alarm stability and sliding-window spectra.

Every driver consumes an ExperimentSpec and emits a ResultTable whose
metadata echoes the fully resolved configuration; identical spec + seed give
bit-identical tables regardless of the thread count (per-trial RNG streams,
fixed-order reduction).
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import __version__
from .ar import (ReflectionParams, ar_spectrum, reflection_to_ar,
                 reflection_to_scatter, scatter_to_reflection)
from .detectors import (AR, GLRT, calibrate_threshold, empirical_pfa,
                        trial_statistics_multi)
from .errors import ArScatterError, ConfigError
from .estimators import (FIXED_POINT, IDEAL, TWO_STEP_FIXED_POINT,
                         EstimatorKind, estimate_scatter, parse_estimator)
from .linalg import spd_affine_distance, trace_normalize
from .simulation import ScenarioConfig, Scene, build_burst, build_drift_scene, \
    build_transition_scene


@dataclass
class ExperimentSpec:
    """A scenario, the estimators to run on it, and the experiment knobs."""

    scenario: ScenarioConfig
    estimators: list[EstimatorKind]
    metric: str = "rme"                  # rme | detection | pfa | spectra
    n_mc: int = 500
    threads: int = 1
    sweep_param: str | None = None       # nu | d | n_outliers | n_cells | cnr_db
    sweep_values: list = field(default_factory=list)

    def __post_init__(self):
        if self.n_mc < 1:
            raise ConfigError("n_mc must be >= 1")


@dataclass
class ResultTable:
    """Row/column labelled values with Monte-Carlo standard errors."""

    rows: list
    cols: list
    values: np.ndarray
    stderr: np.ndarray
    meta: dict = field(default_factory=dict)

    def to_csv(self, path, row_name: str = "row", col_name: str = "col",
               value_name: str = "value"):
        with open(path, "w") as fh:
            fh.write(f"{row_name},{col_name},{value_name},stderr\n")
            for i, r in enumerate(self.rows):
                for j, c in enumerate(self.cols):
                    fh.write(f"{r},{c},{self.values[i, j]:.10g},{self.stderr[i, j]:.4g}\n")

    def meta_path(self, path) -> str:
        return str(path) + ".meta.json"

    def write(self, path, **csv_kwargs):
        self.to_csv(path, **csv_kwargs)
        with open(self.meta_path(path), "w") as fh:
            json.dump(self.meta, fh, indent=2, default=str)

    def cell(self, row, col) -> float:
        return float(self.values[self.rows.index(row), self.cols.index(col)])


def _apply_sweep(cfg: ScenarioConfig, param: str, value) -> ScenarioConfig:
    if param == "nu":
        return replace(cfg, texture=replace(cfg.texture, nu=float(value)))
    if param == "d":
        return replace(cfg, d=int(value))
    if param == "n_outliers":
        return replace(cfg, n_outliers=int(value))
    if param == "n_cells":
        return replace(cfg, n_cells=int(value))
    if param == "cnr_db":
        return replace(cfg, cnr_db=float(value))
    raise ConfigError(f"unknown sweep parameter {param!r}")


def _map_trials(fn, n_trials: int, threads: int) -> list:
    """Evaluate fn(trial) for each trial; results in trial order regardless
    of the executor schedule."""
    if threads <= 1:
        return [fn(t) for t in range(n_trials)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n_trials)))


def _meta(spec: ExperimentSpec, cfg: ScenarioConfig, **extra) -> dict:
    meta = {
        "version": __version__,
        "seed": cfg.seed,
        "n_mc": spec.n_mc,
        "metric": spec.metric,
        "estimators": [k.name for k in spec.estimators],
        "scenario": cfg.to_dict(),
        "resolved_texture_sigma": cfg.resolved_texture().sigma,
        "noise_power": cfg.noise_power(),
    }
    meta.update(extra)
    return meta


# ---------------------------------------------------------------------------
# Riemannian mean error
# ---------------------------------------------------------------------------

def run_rme(spec: ExperimentSpec) -> ResultTable:
    """Mean affine-invariant distance between estimates and the true scatter.

    Both matrices are trace-normalized to d before comparison.  Estimator
    failures are counted per cell (reported in metadata), never silently
    dropped; a cell with no successful trial reports NaN.
    """
    sweep = spec.sweep_values or [None]
    names = [k.name for k in spec.estimators]
    values = np.full((len(sweep), len(names)), np.nan)
    stderr = np.full_like(values, np.nan)
    failures = {}
    for i, sval in enumerate(sweep):
        cfg = spec.scenario if sval is None else _apply_sweep(spec.scenario,
                                                              spec.sweep_param, sval)
        truth = trace_normalize(
            reflection_to_scatter(cfg.clutter, cfg.d, normalize_trace=True))

        def one_trial(trial, cfg=cfg, truth=truth):
            burst, burst_truth = build_burst(cfg, trial)
            out = {}
            for kind in spec.estimators:
                try:
                    if kind.name == IDEAL:
                        scatter = trace_normalize(burst_truth)
                    else:
                        scatter = estimate_scatter(kind, burst.cells).scatter
                    out[kind.name] = spd_affine_distance(scatter, truth)
                except ArScatterError as exc:
                    out[kind.name] = exc
            return out

        results = _map_trials(one_trial, spec.n_mc, spec.threads)
        for j, name in enumerate(names):
            dists = [r[name] for r in results if not isinstance(r[name], Exception)]
            n_fail = spec.n_mc - len(dists)
            if n_fail:
                failures[f"{sval}/{name}"] = n_fail
            if dists:
                arr = np.asarray(dists)
                values[i, j] = arr.mean()
                stderr[i, j] = arr.std(ddof=1) / math.sqrt(len(arr)) if len(arr) > 1 else 0.0
    rows = [str(s) for s in sweep] if spec.sweep_values else ["-"]
    meta = _meta(spec, spec.scenario, sweep_param=spec.sweep_param,
                 sweep_values=list(spec.sweep_values), failures=failures)
    return ResultTable(rows, names, values, stderr, meta)


# ---------------------------------------------------------------------------
# Detection probability curves
# ---------------------------------------------------------------------------

def calibrate_all(cfg: ScenarioConfig, estimators: list[EstimatorKind],
                  detectors: list[str], pfa: float, n_trials: int,
                  threads: int = 1, trial_offset: int = 0) -> dict:
    """Thresholds per (estimator, detector) from shared null trials.

    All statistics for one trial reuse the same burst and test cell, so the
    comparison between estimators is paired.
    """
    pairs = [(k, det) for k in estimators for det in detectors
             if not (det == AR and k.name in (FIXED_POINT, TWO_STEP_FIXED_POINT, IDEAL))]
    if n_trials < 10 / pfa:
        from .errors import InsufficientTrials
        raise InsufficientTrials(f"{n_trials} trials < 10/pfa = {10 / pfa:.0f}")

    def one_trial(trial):
        return trial_statistics_multi(cfg, pairs, trial_offset + trial, alpha=0.0)

    results = _map_trials(one_trial, n_trials, threads)
    return {
        key: calibrate_threshold(np.array([r[key] for r in results]), pfa)
        for key in results[0]
    }


def run_detection(spec: ExperimentSpec, detector: str = GLRT,
                  sweep: str = "freq", sweep_values=None,
                  thresholds: dict | None = None, pfa: float = 1e-3,
                  n_calibration: int | None = None) -> ResultTable:
    """Detection probability vs target frequency or SCR (dB).

    Thresholds are calibrated on the scenario's no-target, no-contamination
    null unless supplied.  For ``sweep='freq'`` the target power comes from
    the scenario; for ``sweep='scr'`` the frequency does.
    """
    cfg = spec.scenario
    if sweep_values is None:
        raise ConfigError("sweep_values required")
    if thresholds is None:
        clean = replace(cfg, n_outliers=0, outlier=None)
        n_cal = n_calibration or max(spec.n_mc, int(10 / pfa))
        thresholds = calibrate_all(clean, spec.estimators, [detector], pfa,
                                   n_cal, spec.threads)
    names = [k.name for k in spec.estimators]
    pairs = [(k, detector) for k in spec.estimators if (k.name, detector) in thresholds]
    values = np.full((len(sweep_values), len(names)), np.nan)
    stderr = np.full_like(values, np.nan)
    offset = 1_000_000  # detection trials on streams disjoint from calibration
    for i, sval in enumerate(sweep_values):
        if sweep == "freq":
            alpha, f_d = cfg.target_power, float(sval)
        elif sweep == "scr":
            alpha = math.sqrt(cfg.clutter_power()) * 10 ** (float(sval) / 20)
            f_d = cfg.target_freq
        else:
            raise ConfigError(f"unknown sweep kind {sweep!r}")

        def one_trial(trial, alpha=alpha, f_d=f_d, base=offset + i * spec.n_mc):
            return trial_statistics_multi(cfg, pairs, base + trial,
                                          alpha=alpha, f_d=f_d)

        results = _map_trials(one_trial, spec.n_mc, spec.threads)
        for j, kind in enumerate(spec.estimators):
            key = (kind.name, detector)
            if key not in thresholds:
                continue
            stats = np.array([r[key] for r in results])
            pd = float(np.mean(stats > thresholds[key]))
            values[i, j] = pd
            stderr[i, j] = math.sqrt(max(pd * (1 - pd), 1e-300) / spec.n_mc)
    meta = _meta(spec, cfg, detector=detector, sweep=sweep, pfa=pfa,
                 thresholds={f"{k}/{d}": v for (k, d), v in thresholds.items()})
    return ResultTable([str(v) for v in sweep_values], names, values, stderr, meta)


# ---------------------------------------------------------------------------
# False-alarm stability (fixed threshold across scenarios)
# ---------------------------------------------------------------------------

def run_pfa_stability(spec: ExperimentSpec, scenarios: dict[str, ScenarioConfig],
                      calibration: ScenarioConfig, detectors=(GLRT, AR),
                      pfa: float = 1e-3, n_calibration: int | None = None,
                      thresholds: dict | None = None) -> ResultTable:
    """Realized PFA of frozen thresholds on a family of scenarios.

    Thresholds are calibrated once on ``calibration`` (no contamination) and
    then applied unchanged to every scenario, exposing CFAR breakdown.
    """
    detectors = list(detectors)
    if thresholds is None:
        n_cal = n_calibration or max(spec.n_mc, int(10 / pfa))
        thresholds = calibrate_all(calibration, spec.estimators, detectors,
                                   pfa, n_cal, spec.threads)
    pairs = [(k, det) for k in spec.estimators for det in detectors
             if (k.name, det) in thresholds]
    cols = [f"{k.name}/{det}" for k, det in pairs]
    rows = list(scenarios)
    values = np.full((len(rows), len(cols)), np.nan)
    stderr = np.full_like(values, np.nan)
    offset = 2_000_000
    for i, (label, scen) in enumerate(scenarios.items()):
        def one_trial(trial, scen=scen):
            return trial_statistics_multi(scen, pairs, offset + trial, alpha=0.0)
        results = _map_trials(one_trial, spec.n_mc, spec.threads)
        for j, (k, det) in enumerate(pairs):
            stats = np.array([r[(k.name, det)] for r in results])
            p, se = empirical_pfa(stats, thresholds[(k.name, det)])
            values[i, j] = p
            stderr[i, j] = se
    meta = _meta(spec, calibration, pfa=pfa,
                 thresholds={f"{k}/{d}": v for (k, d), v in thresholds.items()},
                 scenarios={k: v.to_dict() for k, v in scenarios.items()},
                 note="thresholds frozen from the calibration scenario")
    return ResultTable(rows, cols, values, stderr, meta)


# ---------------------------------------------------------------------------
# Sliding-window spectra over a scene
# ---------------------------------------------------------------------------

def run_spectra(spec: ExperimentSpec, scene_kind: str = "transition",
                frequency_shift: float = 0.3, n_freq: int = 128,
                scene: Scene | None = None):
    """Per-cell AR spectra of sliding-window estimates over a scene.

    Returns (scene, dict estimator -> spectra array (n_cells, n_freq), freqs).
    Fixed-point estimates are projected onto the AR family by diagonal
    averaging before rendering.
    """
    cfg = spec.scenario
    if scene is None:
        if scene_kind == "transition":
            scene = build_transition_scene(cfg, frequency_shift)
        elif scene_kind == "drift":
            scene = build_drift_scene(cfg)
        else:
            raise ConfigError(f"unknown scene kind {scene_kind!r}")
    freqs = np.arange(n_freq) / n_freq - 0.5
    out = {}
    for kind in spec.estimators:
        spectra = np.empty((scene.n_cells, n_freq))
        for i in range(scene.n_cells):
            neigh = scene.neighborhood(i)
            if kind.name == IDEAL:
                params = scene.truth[i]
            else:
                est = estimate_scatter(kind, neigh)
                params = est.params if est.params is not None else \
                    scatter_to_reflection(est.scatter, kind.resolved_order(cfg.d))
            spectra[i] = ar_spectrum(reflection_to_ar(
                ReflectionParams(1.0, params.mu)), freqs)
        out[kind.name] = spectra
    return scene, out, freqs


def spectra_to_csv(path, result, freqs):
    """Long-format CSV: cell, freq, power, estimator."""
    with open(path, "w") as fh:
        fh.write("cell,freq,power,estimator\n")
        for name, spectra in result.items():
            for i in range(spectra.shape[0]):
                for f, p in zip(freqs, spectra[i]):
                    fh.write(f"{i},{f:.6f},{p:.8g},{name}\n")


def dominant_frequency(spectrum: np.ndarray, freqs: np.ndarray) -> float:
    return float(freqs[np.argmax(spectrum)])


def count_spectral_peaks(spectrum: np.ndarray, rel_height: float = 0.25) -> int:
    """Local maxima (circular) above rel_height * max; dual peaks indicate a
    contaminated estimate in the transition scene."""
    s = np.asarray(spectrum, dtype=float)
    left = np.roll(s, 1)
    right = np.roll(s, -1)
    peaks = (s >= left) & (s > right) & (s > rel_height * s.max())
    return int(peaks.sum())


def circular_freq_distance(f1: float, f2: float) -> float:
    """Distance on the normalized-frequency circle [-0.5, 0.5)."""
    diff = abs(f1 - f2) % 1.0
    return min(diff, 1.0 - diff)
