import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from markup_jump.errors import ConstantSeries, InsufficientData, SizeOutOfRange
from markup_jump.params import JumpSpec, ModelParams, SimConfig, SizeDist
from markup_jump.validation import (CheckResult, boxplot_stats, doob_check, jump_moment_check, lyapunov_check,
                                    lyapunov_curve, martingale_checks, maximal_inequality_check, qq_points,
                                    run_suite, shapiro_wilk, shapiro_wilk_coefficients, stationary_moment_check)


def test_check_result_interval_and_json():
    r = CheckResult("x", 1.0, (0.0, 2.0), 0.0, True, 10, 0)
    assert r.to_dict()["target"] == [0.0, 2.0]


# ------------------------------------------------------------------ martingales, Doob

def test_martingale_checks_pass():
    res = martingale_checks(1.0, 0.0, 100_000, seed=0, sigma=0.5)
    assert [r.name for r in res] == ["martingale_increment", "martingale_quadratic", "martingale_exponential"]
    assert all(r.passed for r in res)


def test_martingale_sigma_zero_is_exact():
    res = martingale_checks(1.0, 0.3, 10_000, seed=1, sigma=0.0)
    assert res[2].estimate == 1.0 and res[2].statistic == 0.0


def test_martingale_guards():
    with pytest.raises(ValueError):
        martingale_checks(1.0, 1.0, 10_000)
    with pytest.raises(ValueError):
        martingale_checks(1.0, 0.0, 9_999)


@pytest.mark.parametrize("t", [1.0, 4.0])
def test_doob_ratio(t):
    r = doob_check(t, 20_000, seed=3, n_steps=500)
    assert r.passed
    assert 1.0 <= r.statistic <= 4.0


def test_doob_guard():
    with pytest.raises(ValueError):
        doob_check(1.0, 100)


def test_maximal_inequality():
    assert maximal_inequality_check(1.0, 1.0, 20_000, seed=2, n_steps=500).passed
    far = maximal_inequality_check(50.0, 1.0, 10_000, seed=2, n_steps=100)
    assert far.estimate == 0.0
    with pytest.raises(ValueError):
        maximal_inequality_check(0.0)


# ------------------------------------------------------------------ jumps

def test_jump_moment_targets():
    mean, var = jump_moment_check(JumpSpec(2.0, 0.3, 0.1), 5.0, 100_000, seed=0)
    assert mean.target == pytest.approx(3.0) and var.target == pytest.approx(1.0)
    assert mean.passed and var.passed


def test_jump_moment_empty_process():
    mean, var = jump_moment_check(JumpSpec(0.0, 0.3, 0.1), 5.0, 10_000)
    assert (mean.target, var.target) == (0.0, 0.0)
    assert mean.statistic == 0.0 and var.statistic == 0.0 and mean.passed and var.passed


def test_jump_moment_constant_matches_normal_targets():
    a = jump_moment_check(JumpSpec(1.0, 0.2, 0.0), 3.0, 10_000)
    b = jump_moment_check(JumpSpec(1.0, 0.2, 0.0, SizeDist.CONSTANT), 3.0, 10_000)
    assert [r.target for r in a] == [r.target for r in b]


@settings(max_examples=10)
@given(st.floats(0.1, 3), st.floats(-0.5, 0.5), st.floats(0.0, 0.3), st.integers(0, 1000))
def test_jump_moments_random_specs(nu, gamma, sj, seed):
    # 4.5 SE keeps the family-wise false alarm rate negligible over many generated specs
    for r in jump_moment_check(JumpSpec(nu, gamma, sj), 2.0, 10_000, seed=seed):
        assert abs(r.statistic - r.target) <= 4.5 * r.std_error


def test_checks_reproducible():
    a = [r.to_dict() for r in jump_moment_check(JumpSpec(2.0, 0.3, 0.1), 5.0, 10_000, seed=9)]
    b = [r.to_dict() for r in jump_moment_check(JumpSpec(2.0, 0.3, 0.1), 5.0, 10_000, seed=9)]
    assert a == b


# ------------------------------------------------------------------ stationary, Lyapunov

P = ModelParams(theta_tilde=1.0, u=1.0, sigma=0.2, rho=0.0, xi=1.0, phi=0.0, c0=1.0)


def test_stationary_moments():
    res = {r.name: r for r in stationary_moment_check(P, SimConfig(dt=0.01, horizon=20.0, n_paths=4000, seed=2),
                                                      rel_tol_mean=0.02, rel_tol_var=0.15)}
    assert res["stationary_variance_paper"].target == pytest.approx(0.02)
    assert res["stationary_variance_cir"].target == pytest.approx(0.02)
    assert all(r.passed for r in res.values())


@settings(max_examples=5)
@given(st.floats(0.5, 2.0), st.floats(0.5, 2.0), st.floats(0.05, 0.3))
def test_stationary_mean_random_params(theta, u, sigma):
    p = ModelParams(theta_tilde=theta, u=u, sigma=sigma, rho=0.0, xi=1.0, phi=0.0, c0=1.0)
    cfg = SimConfig(dt=0.02, horizon=20 / theta, n_paths=2000, seed=1)
    mean = stationary_moment_check(p, cfg, rel_tol_mean=0.02)[0]
    assert mean.passed


def test_stationary_guard():
    with pytest.raises(ValueError):
        stationary_moment_check(P, SimConfig(dt=0.01, horizon=5.0, n_paths=10))


def test_lyapunov_descent():
    p = ModelParams(theta_tilde=1.0, u=1.0, sigma=0.1, rho=0.0, xi=1.0, phi=0.0, c0=1.0)
    assert lyapunov_check(p, SimConfig(dt=0.01, horizon=5.0, n_paths=1000, seed=0), 3.0).passed
    with pytest.raises(ValueError):
        lyapunov_check(p, SimConfig(dt=0.01, horizon=5.0, n_paths=10), 1.0)


def test_lyapunov_deterministic_decay():
    p = ModelParams(theta_tilde=1.0, u=1.0, sigma=0.0, rho=0.0, xi=1.0, phi=0.0, c0=1.0)
    t, v = lyapunov_curve(p, SimConfig(dt=1e-4, horizon=5.0, n_paths=1), 3.0)
    np.testing.assert_allclose(v[0], 4.0 * np.exp(-2 * t), rtol=1e-3)


# ------------------------------------------------------------------ Shapiro-Wilk

@pytest.mark.parametrize("n", [3, 4, 5, 7, 11, 12, 20, 50, 200, 1000, 5000])
def test_shapiro_matches_scipy(n):
    x = np.random.default_rng(n).standard_normal(n) ** 3
    w, p = shapiro_wilk(x)
    ref = stats.shapiro(x)
    assert abs(w - ref.statistic) < 1e-4
    assert abs(p - ref.pvalue) < 1e-3


def test_shapiro_coefficients_unit_norm_and_antisymmetric():
    for n in (3, 5, 6, 40):
        a = shapiro_wilk_coefficients(n)
        assert np.dot(a, a) == pytest.approx(1.0, abs=1e-6)
        np.testing.assert_allclose(a, -a[::-1], atol=1e-12)


def test_shapiro_size_and_power():
    normal_ok = sum(shapiro_wilk(np.random.default_rng(s).standard_normal(50))[1] > 0.05 for s in range(100))
    expo_rej = sum(shapiro_wilk(np.random.default_rng(s).exponential(size=50))[1] < 0.05 for s in range(100))
    assert normal_ok >= 90 and expo_rej >= 90


def test_shapiro_guards():
    with pytest.raises(ConstantSeries):
        shapiro_wilk([2.0] * 10)
    with pytest.raises(SizeOutOfRange):
        shapiro_wilk([1.0, 2.0])
    with pytest.raises(SizeOutOfRange):
        shapiro_wilk(np.arange(5001.0))


# ------------------------------------------------------------------ QQ, box plot

def test_qq_symmetric_three_points():
    pts = qq_points([1.0, -1.0, 0.0])
    assert pts[1] == (pytest.approx(0.0, abs=1e-15), 0.0)
    assert [s for _, s in pts] == [-1.0, 0.0, 1.0]


def test_qq_slope_matches_sd():
    x = np.random.default_rng(0).normal(2.0, 3.0, 5000)
    q, s = np.array(qq_points(x)).T
    slope = np.polyfit(q, s, 1)[0]
    assert slope == pytest.approx(x.std(ddof=1), rel=0.05)


def test_qq_guard():
    with pytest.raises(InsufficientData):
        qq_points([1.0, 2.0])


def test_boxplot_grid():
    b = boxplot_stats([1, 2, 3, 4, 5])
    assert (b.median, b.iqr, b.outliers) == (3.0, 2.0, ())


def test_boxplot_constant_and_outlier():
    b = boxplot_stats([4.0] * 8)
    assert b.iqr == 0.0 and b.outliers == ()
    b = boxplot_stats([1, 2, 3, 4, 5, 100])
    assert b.outliers == (100.0,) and b.whisker_hi == 5.0
    with pytest.raises(InsufficientData):
        boxplot_stats([1, 2, 3, 4])


@given(st.lists(st.floats(-100, 100), min_size=5, max_size=40), st.randoms())
def test_qq_and_boxplot_permutation_invariant(xs, rnd):
    ys = list(xs)
    rnd.shuffle(ys)
    assert qq_points(xs) == qq_points(ys)
    assert boxplot_stats(xs) == boxplot_stats(ys)


# ------------------------------------------------------------------ suite

def test_run_suite_quick():
    res = run_suite("all", seed=0, quick=True)
    assert len(res) == 12
    assert all(r.passed for r in res), [r.name for r in res if not r.passed]
    with pytest.raises(ValueError):
        run_suite("nope")
