"""Scenario generation: compound-Gaussian clutter bursts and test scenes.

Each range cell is tau * y + w: one positive Weibull texture draw tau shared
by the d pulses, a complex Gaussian speckle vector y with Toeplitz AR scatter,
and white thermal noise w whose power is set by the clutter-to-noise ratio.
Contaminating cells follow a second AR model of the same power.

Randomness is organized in deterministic streams: cell i of trial t draws
from the stream keyed (seed, trial, i), so any parallel schedule reproduces
the same burst bit for bit.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .ar import ReflectionParams, reflection_to_scatter, rotate_reflection
from .errors import ConfigError, DegenerateCovariance
from .linalg import cholesky

# stream key reserved for the cell-order permutation (independent of trial)
_PERM_STREAM = 0x9E3779B9


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """Deterministic generator for stream ``key`` of the experiment ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


@dataclass
class TextureLaw:
    """Weibull texture: shape nu, scale sigma.

    tau = sigma * (-ln U)^(1/nu).  nu = inf degenerates to the constant
    texture tau == sigma (Gaussian clutter), which the formulas handle
    naturally.  ``sigma=None`` means "resolve the scale from the scenario's
    power rule" at burst-build time.
    """

    nu: float
    sigma: float | None = None

    def __post_init__(self):
        if not self.nu > 0:
            raise ConfigError(f"Weibull shape must be positive, got {self.nu}")
        if self.sigma is not None and not self.sigma > 0:
            raise ConfigError(f"Weibull scale must be positive, got {self.sigma}")


def weibull_scale_for_power(nu: float, power: float = 1.0,
                            rule: str = "mean_power") -> float:
    """Scale sigma so the texture carries the requested clutter power.

    mean_power (default): E[tau^2] = sigma^2 Gamma(1 + 2/nu) = power, the
    reading under which the clutter-to-noise ratio is a power ratio.
    mean_amplitude: E[tau] = sigma Gamma(1 + 1/nu) = power, the literal
    amplitude rule.  Both collapse to sigma = sqrt(power) resp. power for
    constant texture (nu = inf).
    """
    if rule == "mean_power":
        return math.sqrt(power / math.gamma(1 + 2 / nu)) if math.isfinite(nu) \
            else math.sqrt(power)
    if rule == "mean_amplitude":
        return power / math.gamma(1 + 1 / nu) if math.isfinite(nu) else power
    raise ConfigError(f"unknown texture scale rule {rule!r}")


def texture_second_moment(law: TextureLaw) -> float:
    """E[tau^2] of a fully specified texture law."""
    if law.sigma is None:
        raise ConfigError("texture scale not resolved")
    if math.isfinite(law.nu):
        return law.sigma ** 2 * math.gamma(1 + 2 / law.nu)
    return law.sigma ** 2


def sample_texture(law: TextureLaw, rng: np.random.Generator, size=None):
    """Draw tau = sigma (-ln U)^(1/nu); constant sigma when nu = inf."""
    if law.sigma is None:
        raise ConfigError("texture scale not resolved")
    u = rng.uniform(size=size)
    expo = 1.0 / law.nu  # 0.0 at nu = inf -> tau = sigma exactly
    return law.sigma * (-np.log(u)) ** expo


@dataclass
class Burst:
    """N range cells of d complex pulse returns, one matrix row per cell."""

    cells: np.ndarray

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=complex)
        if self.cells.ndim != 2 or self.cells.shape[1] < 2:
            raise ConfigError(f"burst must be (N, d>=2), got {self.cells.shape}")

    @property
    def n_cells(self) -> int:
        return self.cells.shape[0]

    @property
    def d(self) -> int:
        return self.cells.shape[1]

    def to_csv(self, path):
        """CSV: header '# d=<d> n=<N>', then rows re0,im0,...,re_{d-1},im_{d-1}."""
        flat = np.empty((self.n_cells, 2 * self.d))
        flat[:, 0::2] = self.cells.real
        flat[:, 1::2] = self.cells.imag
        with open(path, "w") as fh:
            fh.write(f"# d={self.d} n={self.n_cells}\n")
            np.savetxt(fh, flat, delimiter=",", fmt="%.18e")

    @classmethod
    def from_csv(cls, path) -> "Burst":
        with open(path) as fh:
            header = fh.readline().strip()
            if not header.startswith("#"):
                raise ConfigError("burst CSV must start with a '# d=<d> n=<N>' header")
            try:
                meta = dict(tok.split("=") for tok in header.lstrip("# ").split())
                d, n = int(meta["d"]), int(meta["n"])
            except (ValueError, KeyError) as exc:
                raise ConfigError(f"malformed burst header {header!r}") from exc
            flat = np.loadtxt(fh, delimiter=",", ndmin=2)
        if flat.shape != (n, 2 * d):
            raise ConfigError(f"burst payload {flat.shape} does not match header d={d} n={n}")
        return cls(flat[:, 0::2] + 1j * flat[:, 1::2])


@dataclass
class DriftSpec:
    """Per-cell linear drift of the clutter center frequency across a scene."""

    freq_start: float
    freq_end: float

    def shifts(self, n_cells: int) -> np.ndarray:
        return np.linspace(self.freq_start, self.freq_end, n_cells)


@dataclass
class ScenarioConfig:
    """Full description of one simulated radar scene."""

    d: int
    n_cells: int
    clutter: ReflectionParams
    texture: TextureLaw
    n_outliers: int = 0
    outlier: ReflectionParams | None = None
    cnr_db: float = math.inf
    target_power: float = 0.0
    target_freq: float = 0.0
    seed: int = 0
    drift: DriftSpec | None = None
    texture_scale_rule: str = "mean_power"

    def __post_init__(self):
        if self.n_outliers > self.n_cells:
            raise ConfigError("n_outliers cannot exceed n_cells")
        if self.n_outliers and self.outlier is None:
            raise ConfigError("n_outliers > 0 requires outlier parameters")
        if not abs(self.target_freq) < 0.5:
            raise ConfigError("|target_freq| must be < 0.5")
        if self.clutter.order > self.d - 1:
            raise ConfigError("clutter model order exceeds d-1")

    def resolved_texture(self) -> TextureLaw:
        """Texture with sigma resolved so clutter has unit per-pulse power."""
        if self.texture.sigma is not None:
            return self.texture
        sigma = weibull_scale_for_power(self.texture.nu, 1.0 / self.clutter.p0,
                                        self.texture_scale_rule)
        return TextureLaw(self.texture.nu, sigma)

    def clutter_power(self) -> float:
        """Per-pulse clutter power E[tau^2] * gamma(0)."""
        return texture_second_moment(self.resolved_texture()) * self.clutter.p0

    def noise_power(self) -> float:
        if math.isinf(self.cnr_db):
            return 0.0
        return self.clutter_power() / 10 ** (self.cnr_db / 10)

    def to_dict(self) -> dict:
        def enc_refl(p):
            return None if p is None else {"p0": p.p0,
                                           "mu": [[z.real, z.imag] for z in p.mu]}
        return {
            "d": self.d, "n_cells": self.n_cells,
            "clutter": enc_refl(self.clutter),
            "outlier": enc_refl(self.outlier),
            "n_outliers": self.n_outliers,
            "texture": {"nu": self.texture.nu, "sigma": self.texture.sigma},
            "cnr_db": self.cnr_db, "target_power": self.target_power,
            "target_freq": self.target_freq, "seed": self.seed,
            "drift": None if self.drift is None else asdict(self.drift),
            "texture_scale_rule": self.texture_scale_rule,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        def dec_refl(obj):
            if obj is None:
                return None
            mu = np.array([complex(re, im) for re, im in obj.get("mu", [])], dtype=complex)
            return ReflectionParams(obj["p0"], mu)
        def dec_float(value):
            if isinstance(value, str):
                return math.inf if value.lower() in ("inf", "infinity") else float(value)
            return float(value)
        try:
            tex = data.get("texture", {"nu": 0.6, "sigma": None})
            cnr = dec_float(data.get("cnr_db", math.inf))
            drift = data.get("drift")
            return cls(
                d=int(data["d"]), n_cells=int(data["n_cells"]),
                clutter=dec_refl(data["clutter"]),
                texture=TextureLaw(dec_float(tex["nu"]), tex.get("sigma")),
                n_outliers=int(data.get("n_outliers", 0)),
                outlier=dec_refl(data.get("outlier")),
                cnr_db=cnr,
                target_power=float(data.get("target_power", 0.0)),
                target_freq=float(data.get("target_freq", 0.0)),
                seed=int(data.get("seed", 0)),
                drift=None if drift is None else DriftSpec(**drift),
                texture_scale_rule=data.get("texture_scale_rule", "mean_power"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad scenario config: {exc}") from exc

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, default=str)

    @classmethod
    def from_json(cls, path) -> "ScenarioConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def sample_speckle(params: ReflectionParams, d: int,
                   rng: np.random.Generator) -> np.ndarray:
    """One CN(0, Sigma) draw with Sigma the exact Toeplitz scatter.

    Cholesky coloring of a standard complex normal (E|g_k|^2 = 1) guarantees
    the finite-length vector has exactly the stationary covariance.
    """
    chol = cholesky(reflection_to_scatter(params, d, normalize_trace=False))
    g = (rng.standard_normal(d) + 1j * rng.standard_normal(d)) / np.sqrt(2)
    return chol @ g


def inject_target(cell: np.ndarray, alpha: float, f_d: float) -> np.ndarray:
    """Add alpha * steering(f_d) to a range cell."""
    if not abs(f_d) < 0.5:
        raise ConfigError("|f_d| must be < 0.5")
    d = len(cell)
    return cell + alpha * np.exp(2j * np.pi * f_d * np.arange(d))


def _draw_cell(rng: np.random.Generator, chol: np.ndarray, law: TextureLaw,
               noise_amp: float, d: int) -> np.ndarray:
    """tau, speckle, then noise from one stream, in this fixed draw order."""
    tau = sample_texture(law, rng)
    g = (rng.standard_normal(d) + 1j * rng.standard_normal(d)) / np.sqrt(2)
    cell = tau * (chol @ g)
    if noise_amp:
        cell = cell + noise_amp * (rng.standard_normal(d) + 1j * rng.standard_normal(d))
    return cell


def build_burst(cfg: ScenarioConfig, trial: int = 0) -> tuple[Burst, np.ndarray]:
    """Simulate one burst; returns (burst, trace-normalized clutter scatter).

    The first N - N_out cells follow the clutter model and the last N_out the
    outlier model, then the cell order is shuffled by a fixed permutation
    drawn from the seed (contaminating cells keep the clutter's texture law
    and power).  The burst holds secondary data only; targets go into the
    separate cell under test (draw_test_cell / inject_target).
    """
    law = cfg.resolved_texture()
    noise_amp = math.sqrt(cfg.noise_power() / 2)
    chol_c = cholesky(reflection_to_scatter(cfg.clutter, cfg.d, normalize_trace=False))
    labels = np.zeros(cfg.n_cells, dtype=bool)
    if cfg.n_outliers:
        labels[cfg.n_cells - cfg.n_outliers:] = True
        chol_o = cholesky(reflection_to_scatter(cfg.outlier, cfg.d, normalize_trace=False))
    perm = make_rng(cfg.seed, _PERM_STREAM).permutation(cfg.n_cells)
    labels = labels[perm]
    cells = np.empty((cfg.n_cells, cfg.d), dtype=complex)
    for i in range(cfg.n_cells):
        rng = make_rng(cfg.seed, trial, i)
        chol = chol_o if labels[i] else chol_c
        cells[i] = _draw_cell(rng, chol, law, noise_amp, cfg.d)
    truth = reflection_to_scatter(cfg.clutter, cfg.d, normalize_trace=True)
    return Burst(cells), truth


def draw_test_cell(cfg: ScenarioConfig, trial: int, alpha: float | None = None,
                   f_d: float | None = None) -> np.ndarray:
    """Cell under test: clutter + noise (+ target), on its own stream."""
    law = cfg.resolved_texture()
    noise_amp = math.sqrt(cfg.noise_power() / 2)
    chol = cholesky(reflection_to_scatter(cfg.clutter, cfg.d, normalize_trace=False))
    rng = make_rng(cfg.seed, trial, cfg.n_cells)
    cell = _draw_cell(rng, chol, law, noise_amp, cfg.d)
    alpha = cfg.target_power if alpha is None else alpha
    f_d = cfg.target_freq if f_d is None else f_d
    if alpha:
        cell = inject_target(cell, alpha, f_d)
    return cell


# ---------------------------------------------------------------------------
# Multi-cell scenes: clutter transition and sea-clutter drift
# ---------------------------------------------------------------------------

def neighbor_indices(i: int, n_cells: int, window: int = 64) -> np.ndarray:
    """Sliding-window neighborhood of cell ``i`` (0-based), excluding it.

    Interior cells use the symmetric span [i - w/2, i + w/2]; at the edges the
    span is anchored to the boundary and covers ``window`` consecutive indices,
    so only available neighbors are used (the first and last w/2 cells get
    window - 1 neighbors).
    """
    half = window // 2
    if i - half < 0:
        lo, hi = 0, min(n_cells, window) - 1
    elif i + half > n_cells - 1:
        lo, hi = max(0, n_cells - window), n_cells - 1
    else:
        lo, hi = i - half, i + half
    idx = np.arange(lo, hi + 1)
    return idx[idx != i]


@dataclass
class Scene:
    """A range profile with per-cell ground truth and sliding neighborhoods."""

    cells: np.ndarray                       # (n_cells, d)
    truth: list                             # per-cell ReflectionParams
    window: int = 64

    @property
    def n_cells(self) -> int:
        return self.cells.shape[0]

    def neighborhood(self, i: int) -> np.ndarray:
        return self.cells[neighbor_indices(i, self.n_cells, self.window)]


def _build_scene(cfg: ScenarioConfig, per_cell_params: list, window: int) -> Scene:
    law = cfg.resolved_texture()
    noise_amp = math.sqrt(cfg.noise_power() / 2)
    chols = {}
    cells = np.empty((len(per_cell_params), cfg.d), dtype=complex)
    for i, params in enumerate(per_cell_params):
        key = id(params)
        if key not in chols:
            chols[key] = cholesky(reflection_to_scatter(params, cfg.d, normalize_trace=False))
        rng = make_rng(cfg.seed, i)
        cells[i] = _draw_cell(rng, chols[key], law, noise_amp, cfg.d)
    return Scene(cells, per_cell_params, window)


def build_transition_scene(cfg: ScenarioConfig, frequency_shift: float,
                           n_cells: int = 100, window: int = 64) -> Scene:
    """Two-regime scene: cells 1..n/2 from the clutter model, the rest from
    the same model shifted by ``frequency_shift`` in normalized frequency."""
    shifted = rotate_reflection(cfg.clutter, frequency_shift)
    half = n_cells // 2
    params = [cfg.clutter] * half + [shifted] * (n_cells - half)
    return _build_scene(cfg, params, window)


def build_drift_scene(cfg: ScenarioConfig, n_cells: int = 100,
                      window: int = 64) -> Scene:
    """Sea-clutter style scene whose center frequency drifts cell to cell."""
    if cfg.drift is None:
        raise ConfigError("scenario has no drift schedule")
    shifts = cfg.drift.shifts(n_cells)
    params = [rotate_reflection(cfg.clutter, s) for s in shifts]
    return _build_scene(cfg, params, window)
