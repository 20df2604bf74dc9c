"""Command-line interface.

Subcommands: simulate, estimate, rme-table, detect-curves, pfa-table,
spectra, calibrate.  Report subcommands write a CSV, a JSON metadata echo of
the resolved configuration, and (unless --no-figures) a PNG figure next to
the CSV.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .ar import ReflectionParams, rotate_reflection
from .detectors import ALL_DETECTORS, GLRT
from .errors import ArScatterError, ConfigError
from .estimators import (ALL_ESTIMATORS, estimate_scatter, parse_estimator)
from .harness import (ExperimentSpec, calibrate_all, run_detection, run_pfa_stability,
                      run_rme, run_spectra, spectra_to_csv)
from .simulation import Burst, DriftSpec, ScenarioConfig, TextureLaw, build_burst

# ---------------------------------------------------------------------------
# Presets reproducing the study scenarios
# ---------------------------------------------------------------------------


def _ar1(mu1, p0=1.0) -> ReflectionParams:
    return ReflectionParams(p0, np.array([mu1], dtype=complex))


def _preset(name: str) -> dict:
    shift = 0.3
    if name == "nu-sweep":
        return {
            "scenario": ScenarioConfig(d=8, n_cells=64, clutter=_ar1(0.9),
                                       texture=TextureLaw(0.6), cnr_db=math.inf),
            "estimators": ["normalized-burg", "gaussian-burg"],
            "sweep": {"param": "nu", "values": [0.1, 0.5, 1, 2, 3, 10]},
        }
    if name == "pulse-sweep":
        return {
            "scenario": ScenarioConfig(d=8, n_cells=64, clutter=_ar1(0.9),
                                       texture=TextureLaw(0.6), cnr_db=math.inf),
            "estimators": ["normalized-burg", "euclidean-mean-burg", "poincare-mean-burg"],
            "sweep": {"param": "d", "values": [8, 16, 32, 64]},
        }
    if name in ("contamination-strong", "contamination-weak"):
        mu1 = 0.9 if name == "contamination-strong" else 0.3
        clutter = _ar1(mu1)
        return {
            "scenario": ScenarioConfig(
                d=12, n_cells=64, clutter=clutter,
                outlier=rotate_reflection(clutter, shift), n_outliers=0,
                texture=TextureLaw(0.6), cnr_db=math.inf),
            "estimators": ["normalized-burg", "euclidean-median-burg",
                           "2step-euclidean-median-burg", "poincare-median-burg",
                           "fixed-point"],
            "sweep": {"param": "n_outliers", "values": [0, 5, 10, 20, 30]},
        }
    if name == "pfa-stability":
        def scen(mu1, n_out):
            clutter = _ar1(mu1)
            return ScenarioConfig(d=12, n_cells=64, clutter=clutter,
                                  outlier=rotate_reflection(clutter, shift),
                                  n_outliers=n_out, texture=TextureLaw(0.6),
                                  cnr_db=40.0)
        return {
            "scenario": scen(0.7, 0),
            "calibration": scen(0.7, 0),
            "scenarios": {
                "clean mu1=0.3": scen(0.3, 0),
                "clean mu1=0.7": scen(0.7, 0),
                "clean mu1=0.9": scen(0.9, 0),
                "20 outliers mu1=0.7": scen(0.7, 20),
                "20 outliers mu1=0.9": scen(0.9, 20),
            },
            "estimators": ["normalized-burg", "2step-euclidean-median-burg",
                           "2step-poincare-median-burg", "fixed-point"],
            "pfa": 1e-3,
        }
    if name == "detection":
        clutter = _ar1(0.7)
        return {
            "scenario": ScenarioConfig(d=12, n_cells=64, clutter=clutter,
                                       outlier=rotate_reflection(clutter, shift),
                                       n_outliers=10, texture=TextureLaw(math.inf),
                                       cnr_db=40.0, target_power=1.0),
            "estimators": ["normalized-burg", "2step-euclidean-median-burg",
                           "2step-poincare-median-burg", "fixed-point"],
            "detect": {"sweep": "freq",
                       "values": [round(f, 3) for f in np.linspace(-0.45, 0.45, 19)]},
            "pfa": 1e-3,
        }
    if name == "transition":
        return {
            "scenario": ScenarioConfig(d=12, n_cells=64, clutter=_ar1(0.9),
                                       texture=TextureLaw(0.6), cnr_db=math.inf),
            "estimators": ["normalized-burg", "fixed-point",
                           "2step-euclidean-median-burg"],
            "scene": {"kind": "transition", "shift": shift},
        }
    if name == "drift":
        return {
            "scenario": ScenarioConfig(d=12, n_cells=64, clutter=_ar1(0.9),
                                       texture=TextureLaw(0.6), cnr_db=math.inf,
                                       drift=DriftSpec(-0.05, 0.05)),
            "estimators": ["normalized-burg", "2step-euclidean-median-burg"],
            "scene": {"kind": "drift"},
        }
    raise ConfigError(f"unknown preset {name!r}")


def _load_config(args) -> dict:
    cfg: dict = {}
    if args.preset:
        cfg = _preset(args.preset)
    if args.config:
        with open(args.config) as fh:
            try:
                user = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if "scenario" in user:
            user["scenario"] = ScenarioConfig.from_dict(user["scenario"])
        if "calibration" in user:
            user["calibration"] = ScenarioConfig.from_dict(user["calibration"])
        if "scenarios" in user:
            user["scenarios"] = {k: ScenarioConfig.from_dict(v)
                                 for k, v in user["scenarios"].items()}
        cfg.update(user)
    if "scenario" not in cfg:
        raise ConfigError("no scenario: pass --config or --preset")
    if args.seed is not None:
        cfg["scenario"] = replace(cfg["scenario"], seed=args.seed)
    if args.estimators:
        cfg["estimators"] = [e.strip() for e in args.estimators.split(",")]
    return cfg


def _spec(cfg: dict, args) -> ExperimentSpec:
    try:
        kinds = [parse_estimator(name) for name in cfg.get("estimators", ["normalized-burg"])]
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    sweep = cfg.get("sweep", {})
    return ExperimentSpec(
        scenario=cfg["scenario"],
        estimators=kinds,
        n_mc=args.trials,
        threads=args.threads,
        sweep_param=sweep.get("param"),
        sweep_values=sweep.get("values", []),
    )


def _figures_enabled(args) -> bool:
    return not args.no_figures


def _png_path(out: str) -> str:
    return out[:-4] + ".png" if out.endswith(".csv") else out + ".png"


# ---------------------------------------------------------------------------
# Subcommand implementations
# ---------------------------------------------------------------------------

def _cmd_simulate(args):
    cfg = _load_config(args)
    burst, _ = build_burst(cfg["scenario"])
    burst.to_csv(args.out)
    print(f"wrote {burst.n_cells}x{burst.d} burst to {args.out}")
    return 0


def _cmd_estimate(args):
    if not args.burst:
        raise ConfigError("estimate needs --burst <csv>")
    burst = Burst.from_csv(args.burst)
    kind = parse_estimator(args.estimators or "normalized-burg")
    est = estimate_scatter(kind, burst.cells)
    payload = {
        "estimator": kind.name,
        "d": burst.d,
        "n_cells": burst.n_cells,
        "scatter_re": est.scatter.real.tolist(),
        "scatter_im": est.scatter.imag.tolist(),
    }
    if est.params is not None:
        payload["p0"] = est.params.p0
        payload["mu"] = [[z.real, z.imag] for z in est.params.mu]
    with open(args.out, "w") as fh:
        json.dump(payload, fh, indent=2)
    print(f"wrote {kind.name} estimate to {args.out}")
    return 0


def _cmd_rme_table(args):
    cfg = _load_config(args)
    table = run_rme(_spec(cfg, args))
    table.write(args.out, row_name=cfg.get("sweep", {}).get("param") or "scenario",
                col_name="estimator", value_name="rme")
    if _figures_enabled(args):
        from .plots import render_rme_table
        render_rme_table(table, _png_path(args.out),
                         xlabel=cfg.get("sweep", {}).get("param") or "scenario")
    print(f"wrote RME table to {args.out}")
    return 0


def _cmd_detect_curves(args):
    cfg = _load_config(args)
    spec = _spec(cfg, args)
    det = cfg.get("detect", {})
    sweep = det.get("sweep", "freq")
    values = det.get("values")
    if values is None:
        raise ConfigError("config needs detect.values (sweep points)")
    table = run_detection(spec, detector=cfg.get("detector", GLRT), sweep=sweep,
                          sweep_values=values, pfa=cfg.get("pfa", 1e-3),
                          n_calibration=cfg.get("n_calibration"))
    table.write(args.out, row_name=sweep, col_name="estimator", value_name="pd")
    if _figures_enabled(args):
        from .plots import render_detection_curves
        render_detection_curves(table, _png_path(args.out), sweep)
    print(f"wrote detection curves to {args.out}")
    return 0


def _cmd_pfa_table(args):
    cfg = _load_config(args)
    spec = _spec(cfg, args)
    scenarios = cfg.get("scenarios")
    if not scenarios:
        raise ConfigError("config needs a 'scenarios' mapping for pfa-table")
    table = run_pfa_stability(spec, scenarios,
                              calibration=cfg.get("calibration", cfg["scenario"]),
                              pfa=cfg.get("pfa", 1e-3),
                              n_calibration=cfg.get("n_calibration"))
    table.write(args.out, row_name="scenario", col_name="estimator_detector",
                value_name="pfa")
    if _figures_enabled(args):
        from .plots import render_pfa_table
        render_pfa_table(table, _png_path(args.out))
    print(f"wrote PFA stability table to {args.out}")
    return 0


def _cmd_spectra(args):
    cfg = _load_config(args)
    spec = _spec(cfg, args)
    scene_cfg = cfg.get("scene", {"kind": "transition", "shift": 0.3})
    scene, result, freqs = run_spectra(spec, scene_kind=scene_cfg.get("kind", "transition"),
                                       frequency_shift=scene_cfg.get("shift", 0.3))
    spectra_to_csv(args.out, result, freqs)
    if _figures_enabled(args):
        from .plots import render_spectra
        render_spectra(result, freqs, _png_path(args.out))
    print(f"wrote sliding-window spectra to {args.out}")
    return 0


def _cmd_calibrate(args):
    cfg = _load_config(args)
    spec = _spec(cfg, args)
    detector = cfg.get("detector", GLRT)
    pfa = cfg.get("pfa", 1e-3)
    thresholds = calibrate_all(cfg.get("calibration", cfg["scenario"]),
                               spec.estimators, [detector], pfa,
                               max(args.trials, int(10 / pfa)), args.threads)
    payload = {
        "pfa": pfa,
        "detector": detector,
        "n_trials": max(args.trials, int(10 / pfa)),
        "thresholds": {f"{k}/{d}": v for (k, d), v in thresholds.items()},
        "scenario": cfg["scenario"].to_dict(),
        "version": __version__,
    }
    with open(args.out, "w") as fh:
        json.dump(payload, fh, indent=2)
    print(f"wrote thresholds to {args.out}")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="arscatter",
        description="Robust AR/Toeplitz scatter estimation and detection for "
                    "compound-Gaussian radar clutter.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON scenario/experiment spec")
    common.add_argument("--preset",
                        choices=["nu-sweep", "pulse-sweep", "contamination-strong",
                                 "contamination-weak", "pfa-stability",
                                 "detection", "transition", "drift"],
                        help="built-in experiment configuration")
    common.add_argument("--seed", type=int, default=None, help="RNG seed override")
    common.add_argument("--out", required=True, help="output path")
    common.add_argument("--trials", type=int, default=500, help="Monte-Carlo trials")
    common.add_argument("--estimators",
                        help=f"comma list among: {', '.join(ALL_ESTIMATORS)}, ideal")
    common.add_argument("--threads", type=int, default=1, help="worker threads")
    common.add_argument("--no-figures", action="store_true",
                        help="skip PNG rendering next to the CSV output")

    handlers = {
        "simulate": (_cmd_simulate, "emit a simulated burst as CSV"),
        "estimate": (_cmd_estimate, "estimate scatter/reflection parameters from a burst CSV"),
        "rme-table": (_cmd_rme_table, "Monte-Carlo estimation-error table"),
        "detect-curves": (_cmd_detect_curves, "detection probability curves"),
        "pfa-table": (_cmd_pfa_table, "false-alarm stability under a frozen threshold"),
        "spectra": (_cmd_spectra, "sliding-window spectra over a scene"),
        "calibrate": (_cmd_calibrate, "Monte-Carlo threshold calibration"),
    }
    for name, (fn, help_text) in handlers.items():
        p = sub.add_parser(name, parents=[common], help=help_text)
        if name == "estimate":
            p.add_argument("--burst", help="input burst CSV", required=False)
        p.set_defaults(handler=fn)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except ArScatterError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
