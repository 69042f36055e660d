"""Acceptance criteria 1-14. Each test records one PASS/FAIL line (printed in the
"acceptance criteria" section of the pytest summary) and then asserts."""
import json
import time

import numpy as np
import pytest
from scipy import stats

from conftest import ACCEPTANCE_LINES
from markup_jump.cli import main
from markup_jump.control import (LambdaSpec, MStarForm, PartialsForm, PathDerivatives, ControlSetup, eval_l,
                                 eval_partials, evaluate, optimality_residual)
from markup_jump.market import BUNDLED_DATA
from markup_jump.params import NO_JUMPS, JumpSpec, ModelParams, SimConfig
from markup_jump.sde import picard_iterates, simulate_path
from markup_jump.studies import PICARD_REFERENCE, recovery_study
from markup_jump.tables import (FIGURE_PARAMS, TABLE1_ROWS, TABLE2_ROWS, calibrate_table1, model_params,
                                strictly_decreasing, table1)
from markup_jump.validation import (doob_check, jump_moment_check, martingale_checks, shapiro_wilk,
                                    stationary_moment_check)


def gate(n: int, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES[n] = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(ACCEPTANCE_LINES[n])
    assert ok, detail


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.t0


def cir(theta=1.0, u=1.0, sigma=0.2, **kw):
    return ModelParams(theta_tilde=theta, u=u, sigma=sigma, rho=kw.get("rho", 0.0), xi=kw.get("xi", 1.0),
                       phi=kw.get("phi", 0.0), c0=kw.get("c0", 1.0))


# ------------------------------------------------------------------ 1

def test_criterion_01_deterministic_limit():
    theta, u, x0 = 1.0, 1.0, 0.2
    p = cir(theta, u, 0.0)
    dts = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3]
    errs = []
    with Timer() as tm:
        for dt in dts:
            tr = simulate_path(p, NO_JUMPS, None, SimConfig(dt=dt, horizon=5.0, x0=x0))
            errs.append(float(np.max(np.abs(tr.values - (u + (x0 - u) * np.exp(-theta * tr.times))))))
    slope = float(np.polyfit(np.log(dts), np.log(errs), 1)[0])
    ok = errs[-1] <= 5 * 1e-3 and abs(slope - 1.0) <= 0.15 and tm.seconds < 5
    gate(1, ok, f"max err at dt=1e-3 {errs[-1]:.2e} (bound 5e-3), slope {slope:.3f}, {tm.seconds:.2f}s")


# ------------------------------------------------------------------ 2

def test_criterion_02_jump_moments():
    with Timer() as tm:
        mean, var = jump_moment_check(JumpSpec(2.0, 0.3, 0.1), t=5.0, n=100_000, seed=0)
    ok = (mean.passed and var.passed and abs(mean.statistic - 3.0) <= 0.03 and abs(var.statistic - 1.0) <= 0.05
          and tm.seconds < 10)
    gate(2, ok, f"mean {mean.statistic:.4f} (3SE {mean.tolerance:.4f}), var {var.statistic:.4f} "
                f"(3SE {var.tolerance:.4f}), {tm.seconds:.2f}s")


# ------------------------------------------------------------------ 3

def test_criterion_03_stationary_moments():
    with Timer() as tm:
        res = {r.name: r for r in stationary_moment_check(
            cir(1.0, 1.0, 0.2), SimConfig(dt=0.01, horizon=20.0, n_paths=10_000, seed=0))}
    m, v, r = (res[k].statistic for k in ("stationary_mean", "stationary_variance_paper",
                                          "terminal_jump_correlation"))
    ok = abs(m - 1.0) <= 0.01 and abs(v - 0.02) <= 0.002 and abs(r) < 0.03 and tm.seconds < 60
    gate(3, ok, f"mean {m:.4f}, variance {v:.5f}, corr {r:+.4f}, {tm.seconds:.1f}s")


# ------------------------------------------------------------------ 4

def test_criterion_04_doob():
    with Timer() as tm:
        r = doob_check(1.0, n=100_000, seed=0, n_steps=1000)
    ok = r.passed and tm.seconds < 30
    gate(4, ok, f"ratio {r.statistic:.4f} in [1, 4 + 3SE = {4 + r.tolerance:.4f}], {tm.seconds:.1f}s")


# ------------------------------------------------------------------ 5

def test_criterion_05_martingales():
    zs = [r.statistic for seed in range(5) for r in martingale_checks(1.0, 0.0, 100_000, seed=seed, sigma=0.5)]
    worst = max(abs(z) for z in zs)
    gate(5, worst < 4, f"max |z| {worst:.3f} over 15 checks (5 seeds x 3 parts)")


# ------------------------------------------------------------------ 6

def test_criterion_06_optimality_condition():
    lam = LambdaSpec.zero()
    rng = np.random.default_rng(6)
    worst = 0.0
    n = 0
    for _ in range(10):
        p = ModelParams(theta_tilde=rng.uniform(0.01, 1), u=1.0, sigma=rng.uniform(0.01, 1),
                        rho=rng.uniform(0, 1), xi=rng.uniform(0.01, 1), phi=rng.uniform(0, 1),
                        c0=rng.uniform(0.01, 1))
        setup = ControlSetup(p, lam, 2.0)
        for x in np.linspace(0.05, 1.0, 10):
            ce = evaluate(setup, x)
            pr = eval_partials(p, lam, 2.0, x, ce.m_star, PathDerivatives.from_drift(p, x),
                               PartialsForm.PRINTED)
            res = abs(optimality_residual(pr))
            worst = max(worst, res / max(1.0, abs(pr.l_m * pr.l_xx**2)))
            n += 1
    gate(6, worst < 1e-8, f"max scaled residual {worst:.2e} on {n} (x, parameter) points, Zero lambda")


# ------------------------------------------------------------------ 7

def _fd(f, x0, m0, h):
    fx = (f(x0 + h, m0) - f(x0 - h, m0)) / (2 * h)
    fm = (f(x0, m0 + h) - f(x0, m0 - h)) / (2 * h)
    fxx = (f(x0 + h, m0) - 2 * f(x0, m0) + f(x0 - h, m0)) / h**2
    fxm = (f(x0 + h, m0 + h) - f(x0 + h, m0 - h) - f(x0 - h, m0 + h) + f(x0 - h, m0 - h)) / (4 * h**2)
    return np.array([fx, fm, fxx, fxm])


def _richardson(f, x0, m0, h=1e-3):
    # central differences are O(h^2); one extrapolation step cancels that term
    return (4 * _fd(f, x0, m0, h / 2) - _fd(f, x0, m0, h)) / 3


LAMBDAS = {
    "Zero": lambda rng: LambdaSpec.zero(),
    "Constant": lambda rng: LambdaSpec.constant(rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05)),
    "Tabulated": lambda rng: LambdaSpec.tabulated([0.0, 1.0, 2.0, 4.0], rng.uniform(-0.05, 0.05, 4),
                                                  rng.uniform(-0.05, 0.05, 4)),
}


def test_criterion_07_derivatives():
    rng = np.random.default_rng(7)
    worst = {}
    for mode, make in LAMBDAS.items():
        worst[mode] = 0.0
        for _ in range(20):
            p = ModelParams(theta_tilde=rng.uniform(0.05, 0.8), u=rng.uniform(0.5, 1.5),
                            sigma=rng.uniform(0.05, 0.8), rho=rng.uniform(0, 0.8), xi=rng.uniform(0.05, 1),
                            phi=rng.uniform(0, 0.8), c0=rng.uniform(0.05, 1))
            lam = make(rng)
            s = rng.uniform(0.2, 3.0)
            x = rng.uniform(0.6, 1.5)
            m = rng.uniform(-1, 1)
            d = PathDerivatives(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5))
            ce = eval_partials(p, lam, s, x, m, d, PartialsForm.EXACT)
            analytic = np.array([ce.l_x, ce.l_m, ce.l_xx, ce.l_xm])
            numeric = _richardson(lambda a, b: eval_l(p, lam, s, a, b, d), x, m)
            scale = np.abs(numeric)
            worst[mode] = max(worst[mode], float(np.max(np.abs(analytic - numeric) / scale)))
    ok = all(v < 1e-6 for v in worst.values())
    gate(7, ok, "max relative error " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
         + " (20 points per mode)")


# ------------------------------------------------------------------ 8

def test_criterion_08_logistic_anchor():
    rows = list(TABLE1_ROWS.values()) + list(TABLE2_ROWS.values()) + [FIGURE_PARAMS]
    vals = []
    for r in rows:
        for form in MStarForm:
            vals.append(float(evaluate(ControlSetup(model_params(r), LambdaSpec.zero(), 2.0, form), 0.0).m_tilde))
    worst = max(abs(v - 0.5) for v in vals)
    gate(8, worst <= 1e-12, f"max |m~(0) - 0.5| {worst:.1e} over {len(vals)} parameter sets and m* forms")


# ------------------------------------------------------------------ 9

def test_criterion_09_table1_ordering():
    rows = table1(LambdaSpec.zero())
    vals = [r.m_tilde for r in rows]
    cal = calibrate_table1(n_grid=21, s_values=(2.0,), refine=True)
    detail = (f"Zero lambda, s=2, x=0.87: m~ = ({', '.join(f'{v:.4f}' for v in vals)}); "
              f"exact reproduction not attained, best Constant-lambda max|err| {cal.max_abs_error:.3f} "
              f"(target 0.05, informational)")
    gate(9, strictly_decreasing(vals), detail)


@pytest.mark.xfail(strict=True, reason="the ordering does not hold at every s: Model 3 overtakes at s <= 1")
@pytest.mark.parametrize("s", [1.0, 0.5])
def test_criterion_09_ordering_at_other_s(s):
    assert strictly_decreasing([r.m_tilde for r in table1(LambdaSpec.zero(), s=s)])


# ------------------------------------------------------------------ 10

def test_criterion_10_table2_ordering(tmp_path):
    code = main(["table2", "--cpi", str(BUNDLED_DATA / "cpi.csv"), "--prices", str(BUNDLED_DATA / "prices"),
                 "--out", str(tmp_path)])
    side = json.loads((tmp_path / "table2.json").read_text())
    ordered = {f: meta["ordered"] for f, meta in side["firms"].items()}
    worst_delta = max(abs(v) for firm in side["deltas_vs_published"].values() for v in firm.values())
    ok = code == 0 and len(ordered) == 4 and all(ordered.values())
    gate(10, ok, f"ordered per firm {ordered}; max |delta| to published cells {worst_delta:.3f} (not gated)")


# ------------------------------------------------------------------ 11

def test_criterion_11_picard():
    d = picard_iterates(**PICARD_REFERENCE, k_max=15, tol=1e-12)
    monotone = all(b < a for a, b in zip(d[2:], d[3:]))
    below = [k for k, v in enumerate(d) if v < 1e-6]
    ok = monotone and bool(below) and below[0] < 15
    gate(11, ok, f"monotone after k=2: {monotone}; first d_k < 1e-6 at k={below[0] if below else None}")


# ------------------------------------------------------------------ 12

@pytest.mark.slow
def test_criterion_12_estimator_recovery():
    with Timer() as tm:
        res = recovery_study(n_reps=200)
    ok = all(c >= 0.9 for c in res.coverage.values()) and tm.seconds < 300
    gate(12, ok, "coverage " + ", ".join(f"{k} {v:.3f}" for k, v in res.coverage.items())
         + f" (200 reps), {tm.seconds:.0f}s")


# ------------------------------------------------------------------ 13

def test_criterion_13_shapiro_wilk():
    rng = np.random.default_rng(13)
    samples = []
    for k in range(20):
        n = int(rng.choice([3, 4, 5, 8, 11, 12, 25, 50, 100, 500, 2000, 5000]))
        samples.append([rng.standard_normal(n), rng.exponential(size=n), rng.uniform(size=n),
                        rng.standard_t(3, size=n)][k % 4])
    dw = dp = 0.0
    for x in samples:
        w, pv = shapiro_wilk(x)
        ref = stats.shapiro(x)
        dw, dp = max(dw, abs(w - ref.statistic)), max(dp, abs(pv - ref.pvalue))
    gate(13, dw < 1e-4 and dp < 1e-3, f"max |dW| {dw:.1e}, max |dp| {dp:.1e} vs scipy.stats.shapiro, 20 samples")


# ------------------------------------------------------------------ 14

def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != "manifest.json"}


def test_criterion_14_reproducibility(tmp_path):
    cfg = tmp_path / "sim.json"
    cfg.write_text(json.dumps({"model": {"theta_tilde": 1.0, "u": 1.0, "sigma": 0.2, "rho": 0.1, "xi": 1.0,
                                         "phi": 0.0, "c0": 1.0},
                               "jumps": {"nu": 1.0, "gamma": 0.1, "sigma_j": 0.05},
                               "sim": {"dt": 0.01, "horizon": 2.0, "n_paths": 4, "seed": 5}}))
    series = tmp_path / "series.csv"
    simulate_path(cir(), JumpSpec(1.0, 0.2, 0.05), None, SimConfig(dt=0.01, horizon=20.0, seed=1)).to_csv(series)
    runs = {
        "simulate_paths": ["simulate", str(cfg), "--workers", "1"],
        "simulate_summary": ["simulate", str(cfg), "--mode", "summary", "--workers", "1"],
        "table1": ["table1"],
        "curve": ["curve"],
        "validate": ["validate", "--suite", "jumps", "--seed", "7", "--quick"],
        "table2": ["table2", "--cpi", str(BUNDLED_DATA / "cpi.csv"), "--prices", str(BUNDLED_DATA / "prices")],
        "estimate": ["estimate", "--input", str(series)],
    }
    mismatched = []
    for name, argv in runs.items():
        first, second = tmp_path / f"{name}_a", tmp_path / f"{name}_b"
        assert main(argv + ["--out", str(first)]) == 0, name
        assert main(["replay", str(first / "manifest.json"), "--out", str(second), "--workers", "4"]) == 0, name
        if not _files(first) or _files(first) != _files(second):
            mismatched.append(name)
    gate(14, not mismatched, f"{len(runs) - len(mismatched)}/{len(runs)} runs byte-identical on replay "
                             f"with 4 workers; mismatched: {mismatched or 'none'}")
