from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rbwalk.errors import WindowTooLong
from rbwalk.stats import (a1_sigma2, block_conditional_means, conditional_mean_mc, domination_constant,
                          empirical_sigma, exact_conditional_drift, exact_position_mean, expected_A,
                          expected_A_mc, fourth_moment_ratio, functional_tests, gaussian_moment_tensor,
                          growth_function, interaction_matrices, martingale_error, martingale_schedule,
                          moment_tensor_from_samples, perfect_matchings, schur_average, sigma_via_series,
                          truncation_bound)
from rbwalk.mixing import exact_step_means
from rbwalk.walk import WalkConfig, continuous_positions

B_IRR = (1.0, math.sqrt(2.0))


@pytest.fixture(scope="module")
def cfg():
    return WalkConfig("A2", 0.3, B_IRR, seed=6)


@given(st.sampled_from(["A2", "B2", "G2"]),
       arrays(np.float64, (2, 2), elements=st.floats(-10, 10)))
def test_schur_average_is_scalar(name, X):
    assert np.allclose(schur_average(X, name), np.trace(X) / 2 * np.eye(2), atol=1e-10)


def test_schur_average_f4():
    X = np.random.default_rng(0).standard_normal((4, 4))
    assert np.allclose(schur_average(X, "F4"), np.trace(X) / 4 * np.eye(4), atol=1e-10)


@given(st.lists(st.integers(0, 2), min_size=1, max_size=6), st.floats(0.05, 0.95))
def test_expected_A_methods_agree(iota, p):
    a = expected_A(iota, p, "A2", method="propagate")
    b = expected_A(iota, p, "A2", method="enumerate")
    assert np.allclose(a, b, atol=1e-12)


def test_expected_A_monte_carlo():
    iota = (0, 1, 2, 0, 2)
    exact = expected_A(iota, 0.3, "A2")
    mean, se = expected_A_mc(iota, 0.3, 200_000, seed=1, geom="A2")
    assert np.all(np.abs(mean - exact) <= 4 * se + 1e-12)


def test_expected_A_window_cap():
    with pytest.raises(WindowTooLong):
        expected_A(tuple([0, 1] * 20), 0.3, "A2", method="enumerate", max_m=16)


def test_a1_closed_form_and_series():
    for p in (0.2, 0.3, 0.5, 0.7):
        cfg = WalkConfig("A1", p, (1.0,))
        assert a1_sigma2(p) == pytest.approx((1 - p) / p)
        ser = sigma_via_series(cfg, m_max=12, N_freq=5000)
        # the truncated tail is controlled by the reported bound
        assert abs(ser.sigma2 - (1 - p) / p) <= ser.truncation_bound
        if p != 0.2:
            assert ser.sigma2 == pytest.approx((1 - p) / p, abs=1e-3)


def test_a1_empirical_sigma():
    est = empirical_sigma(WalkConfig("A1", 0.5, (1.0,), seed=3), 1000, 20_000)
    assert abs(est.sigma2 - 1.0) <= 4 * est.se


def test_empirical_sigma_isotropic(cfg):
    est = empirical_sigma(cfg, 1000, 10_000)
    assert est.offdiag_max <= 4 * est.offdiag_se
    assert est.sigma2_continuous == pytest.approx(est.sigma2 * est.k_b)


def test_series_and_interaction_matrices_agree(cfg):
    ser = sigma_via_series(cfg, m_max=10, N_freq=100_000)
    inter = interaction_matrices(cfg, 400, 4000, m_max=10)
    assert abs(inter.sigma2_series - ser.sigma2) < 0.05
    S = inter.partial_sum()
    assert np.trace(S) / 2 == pytest.approx(inter.sigma2_series)
    assert ser.truncation_bound > 0


def test_truncation_bound_decreases():
    C = domination_constant("A2", 0.3, 0.7)
    assert C > 0
    assert truncation_bound("A2", 0.3, 0.7, 12) < truncation_bound("A2", 0.3, 0.7, 6)


@pytest.mark.parametrize("k,count", [(2, 1), (4, 3), (6, 15)])
def test_perfect_matchings(k, count):
    assert len(list(perfect_matchings(list(range(k))))) == count


def test_gaussian_moment_tensor():
    T2 = gaussian_moment_tensor(2, 2.0, 2)
    assert np.allclose(T2.entries, 2.0 * np.eye(2))
    assert np.allclose(gaussian_moment_tensor(3, 2.0, 2).entries, 0.0)
    T4 = gaussian_moment_tensor(4, 2.0, 2)
    assert T4.is_symmetric()
    assert T4.entries[0, 0, 0, 0] == pytest.approx(12.0) and T4.entries[0, 0, 1, 1] == pytest.approx(4.0)
    assert fourth_moment_ratio(T4) == pytest.approx(3.0)


def test_sample_moments_of_gaussian():
    Y = np.random.default_rng(2).standard_normal((200_000, 2))
    T2 = moment_tensor_from_samples(Y, 2)
    assert np.all(np.abs(T2.entries - np.eye(2)) < 4 * T2.se)
    assert fourth_moment_ratio(moment_tensor_from_samples(Y, 4)) == pytest.approx(3.0, rel=0.05)
    assert moment_tensor_from_samples(Y, 3).is_symmetric()


def test_martingale_schedule():
    sched = martingale_schedule(50, 0.7)
    assert sched.a[0] == sched.b[0] == sched.s[0] == 0
    assert list(sched.a[1:9]) == [1, 2, 2, 2, 2, 2, 2, 2]
    assert sched.a[27] == 3 and sched.a[28] == 4
    assert np.all(np.diff(sched.s) > 0)
    assert sched.block_start(5) == sched.s[4] - sched.b[4]
    with pytest.raises(ValueError):
        martingale_schedule(5, 1.0)


def test_block_means_match_nested_monte_carlo(cfg):
    sched = martingale_schedule(6, 0.7)
    seq = cfg.cutting(int(sched.s[6]))
    h = block_conditional_means(cfg.geom, seq.labels, cfg.p, sched, 6)
    for i in (2, 5):
        for g in (0, 3):
            mc = conditional_mean_mc(cfg, sched, i, g, 100_000, seed=i)
            assert np.abs(mc - h[i][g]).max() < 0.02


def test_martingale_error_corrections_bounded(cfg):
    m = martingale_error(cfg, 10, 300)
    assert m.errors.shape == (300,) and m.s_n >= 10
    assert np.all(m.correction_norms <= m.correction_bound)
    assert 0 < m.median < 5


def test_growth_function(cfg):
    g = growth_function(cfg, [50, 200], [0, 500], 1000)
    assert np.all(g.ratio[g.n > 0] > 0.3)
    assert all(c["holds"] for c in g.checks)


def test_exact_position_mean_matches_monte_carlo(cfg):
    geom = cfg.geom
    seq = cfg.cutting(300)
    times = np.array([0.0, 5.0, 40.0, 80.0])
    L = continuous_positions(geom, seq, cfg.p, 1, 40_000, times)
    mc = L.mean(0)
    se = L.std(0) / math.sqrt(L.shape[0])
    exact = exact_position_mean(geom, seq, cfg.p, times)
    assert np.all(np.abs(mc - exact) <= 4 * se + 1e-9)


def test_exact_conditional_drift_is_cumulative(cfg):
    seq = cfg.cutting(50)
    d = exact_conditional_drift(cfg.geom, 0, seq.labels, cfg.p)
    assert np.allclose(d[-1], exact_step_means(cfg.geom, 0, seq.labels, cfg.p).sum(0))


def test_functional_report(cfg):
    rep = functional_tests(cfg, 1000, 3000)
    assert set(rep.ks) == {(t, c) for t in (0.25, 0.5, 1.0) for c in (0, 1)}
    assert rep.ks_critical == pytest.approx(1.6276 / math.sqrt(3000))
    assert 0.3 < rep.var_ratio_half < 0.7
    assert rep.passes()
