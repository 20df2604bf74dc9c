import json
import math

import numpy as np
import pytest

from arscatter.ar import ReflectionParams, rotate_reflection
from arscatter.detectors import GLRT
from arscatter.errors import ConfigError
from arscatter.estimators import parse_estimator
from arscatter.harness import (ExperimentSpec, ResultTable, calibrate_all,
                               circular_freq_distance, count_spectral_peaks,
                               dominant_frequency, run_detection,
                               run_pfa_stability, run_rme, run_spectra,
                               spectra_to_csv)
from arscatter.simulation import ScenarioConfig, TextureLaw


def scenario(**kw):
    base = dict(d=8, n_cells=32, clutter=ReflectionParams(1.0, [0.7]),
                texture=TextureLaw(math.inf, 1.0), cnr_db=40.0, seed=77)
    base.update(kw)
    return ScenarioConfig(**base)


def spec(scen, names, **kw):
    return ExperimentSpec(scenario=scen,
                          estimators=[parse_estimator(n) for n in names], **kw)


# ---------------------------------------------------------------------------
# RME driver
# ---------------------------------------------------------------------------

def test_rme_ideal_estimator_zero():
    table = run_rme(spec(scenario(), ["ideal"], n_mc=4))
    assert table.values[0, 0] < 1e-10
    assert table.stderr[0, 0] < 1e-10


def test_rme_determinism_across_threads():
    s1 = spec(scenario(), ["normalized-burg", "fixed-point"], n_mc=8, threads=1)
    s3 = spec(scenario(), ["normalized-burg", "fixed-point"], n_mc=8, threads=3)
    a, b = run_rme(s1), run_rme(s3)
    np.testing.assert_array_equal(a.values, b.values)
    np.testing.assert_array_equal(a.stderr, b.stderr)


def test_rme_counts_failures():
    # fixed point needs N >= d; every trial fails and is reported, not dropped
    scen = scenario(d=8, n_cells=4)
    table = run_rme(spec(scen, ["fixed-point"], n_mc=3))
    assert math.isnan(table.values[0, 0])
    assert sum(table.meta["failures"].values()) == 3


def test_rme_sweep_rows():
    s = spec(scenario(), ["normalized-burg"], n_mc=3,
             sweep_param="nu", sweep_values=[0.5, 2.0])
    table = run_rme(s)
    assert table.rows == ["0.5", "2.0"]
    assert table.values.shape == (2, 1)
    assert np.all(np.isfinite(table.values))


def test_result_table_io(tmp_path):
    table = ResultTable(["a", "b"], ["x"], np.array([[1.0], [2.0]]),
                        np.array([[0.1], [0.2]]), {"seed": 1})
    out = tmp_path / "t.csv"
    table.write(out)
    lines = out.read_text().splitlines()
    assert lines[0] == "row,col,value,stderr"
    assert len(lines) == 3
    meta = json.loads((tmp_path / "t.csv.meta.json").read_text())
    assert meta["seed"] == 1
    assert table.cell("b", "x") == 2.0


# ---------------------------------------------------------------------------
# detection driver
# ---------------------------------------------------------------------------

def test_detection_null_matches_pfa_and_saturates():
    scen = scenario(target_power=0.0)
    s = spec(scen, ["normalized-burg"], n_mc=400)
    pfa = 0.05
    table = run_detection(s, detector=GLRT, sweep="scr", sweep_values=[-100, 60],
                          pfa=pfa, n_calibration=2000)
    # alpha ~ 0: detection rate equals the false-alarm rate within 3 sigma
    se = math.sqrt(pfa * (1 - pfa) / 400)
    assert abs(table.values[0, 0] - pfa) < 3 * se + 1e-9
    # SCR 60 dB at a clean frequency saturates
    scen2 = scenario(target_freq=-0.25)
    s2 = spec(scen2, ["normalized-burg"], n_mc=60)
    table2 = run_detection(s2, detector=GLRT, sweep="scr", sweep_values=[60],
                           pfa=pfa, n_calibration=2000)
    assert table2.values[0, 0] > 0.95


def test_detection_freq_sweep_columns(tmp_path):
    s = spec(scenario(target_power=1.0), ["normalized-burg"], n_mc=30)
    table = run_detection(s, detector=GLRT, sweep="freq",
                          sweep_values=[-0.25, 0.2], pfa=0.1, n_calibration=200)
    out = tmp_path / "det.csv"
    table.write(out, row_name="freq", col_name="estimator", value_name="pd")
    header = out.read_text().splitlines()[0]
    assert header == "freq,estimator,pd,stderr"
    assert set(table.meta["thresholds"]) == {"normalized-burg/glrt"}


def test_detection_requires_sweep_values():
    s = spec(scenario(), ["normalized-burg"], n_mc=5)
    with pytest.raises(ConfigError):
        run_detection(s, sweep="freq", sweep_values=None)


# ---------------------------------------------------------------------------
# PFA stability driver
# ---------------------------------------------------------------------------

def test_pfa_self_consistency():
    scen = scenario()
    s = spec(scen, ["normalized-burg"], n_mc=2000)
    table = run_pfa_stability(s, {"calibration": scen}, calibration=scen,
                              detectors=(GLRT,), pfa=0.02, n_calibration=2000)
    pfa = table.values[0, 0]
    assert abs(pfa - 0.02) < 3 * math.sqrt(0.02 * 0.98 / 2000)
    assert table.meta["note"].startswith("thresholds frozen")


def test_calibrate_all_pairs():
    scen = scenario(d=6, n_cells=24)
    ests = [parse_estimator(n) for n in ["normalized-burg", "fixed-point"]]
    thresholds = calibrate_all(scen, ests, [GLRT, "ar"], pfa=0.05, n_trials=300)
    assert ("normalized-burg", "glrt") in thresholds
    assert ("normalized-burg", "ar") in thresholds
    assert ("fixed-point", "glrt") in thresholds
    assert ("fixed-point", "ar") not in thresholds  # no reflection params


# ---------------------------------------------------------------------------
# spectra driver
# ---------------------------------------------------------------------------

def test_spectra_ideal_two_regimes(tmp_path):
    scen = scenario(d=8, clutter=ReflectionParams(1.0, [0.9]), cnr_db=math.inf,
                    texture=TextureLaw(0.6))
    s = spec(scen, ["ideal"], n_mc=1)
    scene, result, freqs = run_spectra(s, scene_kind="transition",
                                       frequency_shift=0.3, n_freq=64)
    spectra = result["ideal"]
    assert spectra.shape == (100, 64)
    # the first half shares one spectrum, the second half the rotated one
    np.testing.assert_allclose(spectra[0], spectra[49])
    np.testing.assert_allclose(spectra[50], spectra[99])
    f_lo = dominant_frequency(spectra[0], freqs)
    f_hi = dominant_frequency(spectra[75], freqs)
    assert circular_freq_distance(f_lo + 0.3, f_hi) < 0.05
    out = tmp_path / "spec.csv"
    spectra_to_csv(out, result, freqs)
    assert out.read_text().splitlines()[0] == "cell,freq,power,estimator"


def test_spectra_homogeneous_scene_constant():
    scen = scenario(d=8, clutter=ReflectionParams(1.0, [0.8]),
                    texture=TextureLaw(math.inf, 1.0), cnr_db=math.inf)
    s = spec(scen, ["normalized-burg"], n_mc=1)
    _, result, freqs = run_spectra(s, scene_kind="transition",
                                   frequency_shift=0.0, n_freq=64)
    spectra = result["normalized-burg"]
    env = np.log10(spectra)
    # dominant frequency stays put across cells in a homogeneous scene
    doms = [dominant_frequency(spectra[i], freqs) for i in range(0, 100, 7)]
    assert max(circular_freq_distance(a, doms[0]) for a in doms) < 0.05
    assert np.ptp(env.max(axis=1)) < 1.5  # peak level stable up to MC noise


def test_count_spectral_peaks():
    freqs = np.arange(64) / 64 - 0.5
    single = 1.0 / (np.abs(np.exp(2j * np.pi * freqs) - 0.9 * np.exp(0.4j))) ** 2
    assert count_spectral_peaks(single) == 1
    double = single + single[::-1]
    assert count_spectral_peaks(double) == 2
