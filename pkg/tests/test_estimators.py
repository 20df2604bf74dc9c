import math

import numpy as np
import pytest

from arscatter.ar import ReflectionParams, reflection_to_ar, reflection_to_scatter
from arscatter.errors import (DegenerateCovariance, DomainError, RankDeficient,
                              ZeroEnergy)
from arscatter.estimators import (aggregate_burg, bias_b1, bias_b1_inverse,
                                  burg_levinson_driver, estimate_gaussian_burg,
                                  estimate_mean_burg, estimate_median_burg,
                                  estimate_normalized_burg, estimate_scatter,
                                  gaussian_burg_mu, parse_estimator,
                                  per_cell_burg, raw_normalized_burg_mu,
                                  two_step_fixed_point, two_step_median_burg,
                                  tyler_fixed_point, ALL_ESTIMATORS)
from arscatter.linalg import spd_affine_distance, trace_normalize


def b1_direct(x):
    """Literal evaluation of the bias function, used as the test oracle."""
    return (1 - x * x) / x * ((math.log(1 - x) - math.log(1 + x)) / (2 * x)
                              + 1 / (1 - x * x))


def b1_inverse_bisect(y, lo=1e-12, hi=1 - 1e-12):
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if b1_direct(mid) < y:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def gaussian_burst(rng, n_cells, d, mu):
    chol = np.linalg.cholesky(
        reflection_to_scatter(ReflectionParams(1.0, mu), d, normalize_trace=False))
    g = (rng.standard_normal((n_cells, d)) + 1j * rng.standard_normal((n_cells, d)))
    return (g / np.sqrt(2)) @ chol.T


def weibull_texture(rng, n, nu=0.6):
    sigma = 1.0 / math.sqrt(math.gamma(1 + 2 / nu))
    return sigma * (-np.log(rng.uniform(size=n))) ** (1 / nu)


# ---------------------------------------------------------------------------
# bias function
# ---------------------------------------------------------------------------

def test_b1_against_direct_evaluation():
    for x in (0.05, 0.2, 0.5, 0.9, 0.99):
        assert abs(bias_b1(x) - b1_direct(x)) < 1e-12
    assert abs(bias_b1(0.5) - 0.3520815669978356) < 1e-12
    assert abs(bias_b1(0.9) - 0.7657756752829483) < 1e-12


def test_b1_small_x_slope():
    assert abs(bias_b1(0.01) / 0.01 - 2 / 3) < 1e-3


def test_b1_shape():
    xs = np.linspace(1e-4, 1 - 1e-4, 500)
    ys = bias_b1(xs)
    assert np.all(np.diff(ys) > 0)          # strictly increasing
    assert np.all(ys < xs)                  # B1(x) < x
    assert bias_b1(1e-8) < 1e-7             # limit 0 at 0+
    assert bias_b1(1 - 1e-9) > 1 - 1e-4     # limit 1 at 1-


def test_b1_domain():
    for bad in (0.0, 1.0, -0.5, 2.0):
        with pytest.raises(DomainError):
            bias_b1(bad)
    with pytest.raises(DomainError):
        bias_b1_inverse(0.0)


def test_b1_inverse_of_known_point():
    assert abs(bias_b1_inverse(0.3520815669978356) - 0.5) < 1e-6


def test_b1_inverse_bisection_oracle():
    oracle = b1_inverse_bisect(0.8)
    assert abs(oracle - 0.9208196) < 1e-6   # frozen from the oracle itself
    assert abs(bias_b1_inverse(0.8) - oracle) < 1e-8


def test_b1_roundtrip_dense():
    xs = np.linspace(1e-4, 1 - 1e-4, 250)
    for x in xs:
        assert abs(bias_b1_inverse(bias_b1(float(x))) - x) < 1e-8


# ---------------------------------------------------------------------------
# reflection estimation rules and the driver
# ---------------------------------------------------------------------------

def test_driver_zero_rule():
    rng = np.random.default_rng(41)
    data = rng.standard_normal((4, 6)) + 1j * rng.standard_normal((4, 6))
    params, coeffs = burg_levinson_driver(data, 5, lambda f, b: 0j)
    np.testing.assert_allclose(params.mu, 0, atol=1e-15)
    expected_p0 = float((np.abs(data) ** 2).mean())
    assert abs(params.p0 - expected_p0) < 1e-12
    assert abs(coeffs.pm - expected_p0) < 1e-12


def test_gaussian_rule_hand_example():
    # single cell (1, 0.5): mu1 = -2 * 0.5 / 1.25 = -0.8
    data = np.array([[1.0, 0.5]], dtype=complex)
    params, _ = burg_levinson_driver(data, 1, gaussian_burg_mu)
    assert abs(params.mu[0] - (-0.8)) < 1e-14


def test_gaussian_rule_zero_cross_term():
    data = np.array([[1.0, 0.0]], dtype=complex)
    params, _ = burg_levinson_driver(data, 1, gaussian_burg_mu)
    assert params.mu[0] == 0


def test_gaussian_rule_zero_energy():
    with pytest.raises(ZeroEnergy):
        gaussian_burg_mu(np.zeros(3, dtype=complex), np.zeros(3, dtype=complex))


def test_driver_rejects_zero_cell():
    data = np.array([[1.0, 0.5], [0.0, 0.0]], dtype=complex)
    with pytest.raises(DegenerateCovariance):
        burg_levinson_driver(data, 1, gaussian_burg_mu)


def test_gaussian_consistency_mc():
    rng = np.random.default_rng(42)
    data = gaussian_burst(rng, 10_000, 8, [0.9])
    params = estimate_gaussian_burg(data, 7)
    assert abs(params.mu[0] - 0.9) < 0.01


def test_normalized_hand_example():
    data = np.array([[1.0, 0.5]], dtype=complex)
    raw = raw_normalized_burg_mu(data[:, 1:], data[:, :-1])
    assert abs(raw - (-0.8)) < 1e-14
    params, raws = estimate_normalized_burg(data, 1, return_raw=True)
    assert abs(raws[0] - (-0.8)) < 1e-14
    assert abs(params.mu[0] - (-b1_inverse_bisect(0.8))) < 1e-8


def test_normalized_scale_invariance_exact():
    rng = np.random.default_rng(43)
    data = gaussian_burst(rng, 32, 8, [0.7])
    scales = 10.0 ** rng.uniform(-3, 3, 32)
    a = estimate_normalized_burg(data, 7)
    b = estimate_normalized_burg(scales[:, None] * data, 7)
    np.testing.assert_allclose(a.mu, b.mu, atol=1e-12)


def test_normalized_raw_magnitude_bounded():
    rng = np.random.default_rng(44)
    data = rng.standard_normal((16, 10)) + 1j * rng.standard_normal((16, 10))
    _, raws = estimate_normalized_burg(data, 9, return_raw=True)
    assert np.all(np.abs(raws) <= 1 + 1e-12)


def test_normalized_bias_correction_mc():
    # SIRV AR(1): raw magnitude concentrates at B1(0.9), corrected at 0.9
    rng = np.random.default_rng(45)
    n_cells = 4000
    data = gaussian_burst(rng, n_cells, 8, [0.9])
    data *= weibull_texture(rng, n_cells)[:, None]
    params, raws = estimate_normalized_burg(data, 7, return_raw=True)
    assert abs(abs(raws[0]) - bias_b1(0.9)) < 0.02
    assert abs(params.mu[0] - 0.9) < 0.02


def test_error_lattice_second_moments():
    """Independent oracle for the lattice moments: build forward/backward
    errors from their definitions (AR coefficients applied to the data, no
    lattice recursion) and check E|f|^2 = E|b|^2 = P_m and
    E[f conj(b)] = -P_m mu_{m+1}."""
    rng = np.random.default_rng(46)
    mu = [0.6, -0.3j]
    params = ReflectionParams(1.0, np.asarray(mu, dtype=complex))
    d, n_cells = 10, 40_000
    data = gaussian_burst(rng, n_cells, d, mu)
    # order-m AR coefficients from the Levinson recursion
    for m, mu_next in [(0, 0.6), (1, -0.3j)]:
        sub = ReflectionParams(1.0, params.mu[:m]) if m else ReflectionParams(1.0, [])
        coeffs = reflection_to_ar(sub)
        p_m = coeffs.pm
        a = np.concatenate([[1.0], coeffs.a])           # (1, a_1..a_m)
        fwd = sum(a[k] * data[:, m + 1 - k:d - k] for k in range(m + 1))
        # b_m(n-1) for n in m+2..d uses samples x_{n-1-m+k}
        bwd = sum(np.conj(a[k]) * data[:, k:d - 1 - m + k] for k in range(m + 1))
        # cells are independent; terms within a cell are not, so take the
        # conservative per-cell standard error
        se = p_m / math.sqrt(n_cells)
        assert abs(np.mean(np.abs(fwd) ** 2) - p_m) < 3 * se
        assert abs(np.mean(np.abs(bwd) ** 2) - p_m) < 3 * se
        cross = np.mean(fwd * np.conj(bwd))
        assert abs(cross - (-p_m * mu_next)) < 3 * se


# ---------------------------------------------------------------------------
# per-cell estimation and aggregation
# ---------------------------------------------------------------------------

def test_per_cell_single_segment_matches_driver():
    rng = np.random.default_rng(47)
    cell = rng.standard_normal(9) + 1j * rng.standard_normal(9)
    mus, valid = per_cell_burg(cell[None, :], 5)
    params = estimate_gaussian_burg(cell[None, :], 5)
    assert valid[0]
    np.testing.assert_allclose(mus[0], params.mu, atol=1e-12)


def test_per_cell_scale_invariance():
    rng = np.random.default_rng(48)
    data = rng.standard_normal((6, 8)) + 1j * rng.standard_normal((6, 8))
    mus, _ = per_cell_burg(data, 6)
    scaled, _ = per_cell_burg(np.diag(10.0 ** rng.uniform(-3, 3, 6)) @ data, 6)
    np.testing.assert_allclose(mus, scaled, atol=1e-12)


def test_per_cell_identical_cells():
    rng = np.random.default_rng(49)
    cell = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    mus, _ = per_cell_burg(np.stack([cell, cell]), 5)
    np.testing.assert_allclose(mus[0], mus[1], atol=1e-14)


def test_aggregate_single_cell():
    mus = np.array([[0.4 + 0.1j, -0.2j]])
    for kind in ("mean", "median"):
        for metric in ("euclidean", "poincare"):
            out = aggregate_burg(mus, kind, metric, 1.0)
            np.testing.assert_allclose(out.mu, mus[0], atol=1e-8)


def test_aggregate_mean_examples():
    mus = np.array([[0.0], [0.6]], dtype=complex)
    assert abs(aggregate_burg(mus, "mean", "euclidean", 1.0).mu[0] - 0.3) < 1e-12
    assert abs(aggregate_burg(mus, "mean", "poincare", 1.0).mu[0] - 1 / 3) < 1e-8


def test_aggregate_median_ignores_minority_outliers():
    # 9 cells, 4 wild: the median stays near the 5-cell clean aggregate
    rng = np.random.default_rng(50)
    clean = 0.5 + 0.02 * (rng.standard_normal(5) + 1j * rng.standard_normal(5))
    wild = np.array([0.95 * np.exp(2j * np.pi * t) for t in (0.1, 0.35, 0.6, 0.85)])
    mus = np.concatenate([clean, wild])[:, None]
    for metric in ("euclidean", "poincare"):
        full = aggregate_burg(mus, "median", metric, 1.0).mu[0]
        ref = aggregate_burg(clean[:, None], "median", metric, 1.0).mu[0]
        assert abs(full - ref) < 0.05


def _cells_with_mu1(targets):
    """Two-pulse cells (1, t) whose single-segment Burg estimate is the
    requested real mu value: mu = -2t/(1+t^2) inverted for |mu| < 1."""
    targets = np.asarray(targets, dtype=float)
    t = (-1 + np.sqrt(1 - targets ** 2)) / np.where(targets == 0, 1.0, targets)
    t = np.where(targets == 0, 0.0, t)
    return np.stack([np.ones_like(t), t], axis=1).astype(complex)


def test_cells_with_known_estimates():
    data = _cells_with_mu1([0.09, -0.5, 0.7])
    mus, _ = per_cell_burg(data, 1)
    np.testing.assert_allclose(mus[:, 0], [0.09, -0.5, 0.7], atol=1e-12)


def test_two_step_keeps_cluster():
    # spec's 1-D example: cluster {0.09..0.12} vs outliers {0.80, 0.82, 0.85};
    # the 4 kept cells are the cluster and the median lands inside [0.10, 0.11]
    data = _cells_with_mu1([0.09, 0.10, 0.11, 0.12, 0.80, 0.82, 0.85])
    params = two_step_median_burg(data, 1, "euclidean")
    val = params.mu[0]
    assert abs(val.imag) < 1e-9
    assert 0.10 - 1e-9 <= val.real <= 0.11 + 1e-9


def test_two_step_homogeneous():
    data = _cells_with_mu1([0.42] * 8)
    for metric in ("euclidean", "poincare"):
        params = two_step_median_burg(data, 1, metric)
        assert abs(params.mu[0] - 0.42) < 1e-9


def test_two_step_needs_cells():
    data = _cells_with_mu1([0.1, 0.2])
    with pytest.raises(DegenerateCovariance):
        two_step_median_burg(data, 1, "euclidean")


# ---------------------------------------------------------------------------
# Tyler fixed point
# ---------------------------------------------------------------------------

def test_tyler_scalar_dimension():
    data = (np.random.default_rng(51).standard_normal((8, 1))
            + 1j * np.random.default_rng(52).standard_normal((8, 1)))
    np.testing.assert_allclose(tyler_fixed_point(data), [[1.0]], atol=1e-12)


def test_tyler_scale_invariance():
    rng = np.random.default_rng(53)
    data = gaussian_burst(rng, 40, 4, [0.5])
    scales = 10.0 ** rng.uniform(-3, 3, 40)
    a = tyler_fixed_point(data)
    b = tyler_fixed_point(scales[:, None] * data)
    assert np.linalg.norm(a - b) / np.linalg.norm(a) < 1e-10


def test_tyler_consistency_mc():
    rng = np.random.default_rng(54)
    truth = reflection_to_scatter(ReflectionParams(1.0, [0.5]), 4)
    data = gaussian_burst(rng, 4000, 4, [0.5])
    est = tyler_fixed_point(data)
    assert spd_affine_distance(trace_normalize(est), trace_normalize(truth)) < 0.1


def test_tyler_rank_deficient():
    rng = np.random.default_rng(55)
    data = rng.standard_normal((3, 5)) + 1j * rng.standard_normal((3, 5))
    with pytest.raises(RankDeficient):
        tyler_fixed_point(data)


def test_two_step_fixed_point_homogeneous():
    # selecting the highest-likelihood half biases the refit toward the
    # dominant correlation structure even on homogeneous data; the result
    # stays a valid trace-d scatter and the procedure is deterministic
    rng = np.random.default_rng(56)
    data = gaussian_burst(rng, 4000, 4, [0.5])
    second = two_step_fixed_point(data)
    assert abs(np.trace(second).real - 4.0) < 1e-8
    assert np.all(np.linalg.eigvalsh(second) > 0)
    np.testing.assert_array_equal(second, two_step_fixed_point(data))


def test_two_step_fixed_point_selection_scale_invariant():
    rng = np.random.default_rng(57)
    data = gaussian_burst(rng, 24, 4, [0.5])
    scales = 10.0 ** rng.uniform(-3, 3, 24)
    a = two_step_fixed_point(data)
    b = two_step_fixed_point(scales[:, None] * data)
    assert np.linalg.norm(a - b) / np.linalg.norm(a) < 1e-10


def test_two_step_fixed_point_needs_half():
    rng = np.random.default_rng(58)
    data = rng.standard_normal((5, 4)) + 1j * rng.standard_normal((5, 4))
    with pytest.raises(RankDeficient):  # ceil(5/2) = 3 < d = 4
        two_step_fixed_point(data)


# ---------------------------------------------------------------------------
# catalog and dispatch
# ---------------------------------------------------------------------------

def test_parse_estimator_aliases():
    assert parse_estimator("normalized").name == "normalized-burg"
    assert parse_estimator("FP").name == "fixed-point"
    with pytest.raises(ValueError):
        parse_estimator("does-not-exist")


def test_estimate_scatter_all_kinds():
    rng = np.random.default_rng(59)
    data = gaussian_burst(rng, 32, 6, [0.6])
    for name in ALL_ESTIMATORS:
        est = estimate_scatter(name, data)
        assert est.scatter.shape == (6, 6)
        assert abs(np.trace(est.scatter).real - 6.0) < 1e-8
        if "fixed-point" in name:
            assert est.params is None
        else:
            assert est.params is not None and est.params.order == 5


def test_gaussian_equivalence_ordering():
    # with constant texture the Gaussian Burg is at least as accurate as the
    # corrected Normalized Burg (the nu -> inf regime ordering)
    rng = np.random.default_rng(60)
    truth = trace_normalize(reflection_to_scatter(ReflectionParams(1.0, [0.9]), 8))
    err_g, err_n = [], []
    for _ in range(60):
        data = gaussian_burst(rng, 64, 8, [0.9])
        est_g = estimate_scatter("gaussian-burg", data)
        est_n = estimate_scatter("normalized-burg", data)
        err_g.append(spd_affine_distance(est_g.scatter, truth))
        err_n.append(spd_affine_distance(est_n.scatter, truth))
    assert np.mean(err_g) < np.mean(err_n)


def test_texture_invariance_all_but_gaussian():
    rng = np.random.default_rng(61)
    base = gaussian_burst(rng, 24, 6, [0.7])
    scales = 10.0 ** rng.uniform(-3, 3, 24)
    scaled = scales[:, None] * base
    for name in ALL_ESTIMATORS:
        a = estimate_scatter(name, base).scatter
        b = estimate_scatter(name, scaled).scatter
        rel = np.linalg.norm(a - b) / np.linalg.norm(a)
        if name == "gaussian-burg":
            assert rel > 1e-6      # texture sensitive by construction
        else:
            assert rel < 1e-10, name
