"""Monte Carlo checks of the model's probabilistic claims and the normality tools used on market data."""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import ConstantSeries, InsufficientData, SizeOutOfRange
from .params import NO_JUMPS, JumpSpec, ModelParams, SimConfig, SizeDist, to_jsonable
from .sde import simulate_arrays

CHUNK = 10_000
MIN_SAMPLES = 10_000


@dataclass
class CheckResult:
    name: str
    statistic: float
    target: float | tuple[float, float]
    tolerance: float
    passed: bool
    n_samples: int
    seed: int
    estimate: float | None = None
    std_error: float | None = None

    def to_dict(self) -> dict:
        return to_jsonable(self)


def _result(name, statistic, target, tolerance, n, seed, estimate=None, se=None) -> CheckResult:
    if isinstance(target, tuple):
        lo, hi = target
        passed = bool(lo <= statistic <= hi)
    else:
        passed = bool(abs(statistic - target) <= tolerance)
    return CheckResult(name, float(statistic), target, float(tolerance), passed, int(n), int(seed),
                       None if estimate is None else float(estimate), None if se is None else float(se))


def _rng(name: str, seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(zlib.crc32(name.encode()),)))


def _z(samples: np.ndarray, target: float) -> tuple[float, float, float]:
    mean = float(samples.mean())
    se = float(samples.std(ddof=1) / math.sqrt(len(samples)))
    z = 0.0 if se == 0 and mean == target else (mean - target) / se if se > 0 else math.inf
    return z, mean, se


def _need(n: int) -> None:
    if n < MIN_SAMPLES:
        raise ValueError(f"n must be >= {MIN_SAMPLES}")


def martingale_checks(t: float = 1.0, s: float = 0.0, n: int = 100_000, seed: int = 0,
                      sigma: float = 0.5) -> list[CheckResult]:
    """W, W^2 - t and exp(sigma W - sigma^2 t / 2) as martingales, each as a z-score (pass |z| <= 4)."""
    if not 0 <= s < t:
        raise ValueError("need 0 <= s < t")
    _need(n)
    rng = _rng("martingale", seed)
    ws = rng.standard_normal(n) * math.sqrt(s)
    wt = ws + rng.standard_normal(n) * math.sqrt(t - s)
    out = []
    z, est, se = _z(wt - ws, 0.0)
    out.append(_result("martingale_increment", z, 0.0, 4.0, n, seed, est, se))
    z, est, se = _z((wt**2 - t) - (ws**2 - s), 0.0)
    out.append(_result("martingale_quadratic", z, 0.0, 4.0, n, seed, est, se))
    z, est, se = _z(np.exp(sigma * wt - sigma**2 * t / 2), 1.0)
    out.append(_result("martingale_exponential", z, 0.0, 4.0, n, seed, est, se))
    return out


def _brownian_sup(name, t, n, seed, n_steps):
    """sup_{[0,t]} |W| and W(t) for n chunked Brownian paths."""
    rng = _rng(name, seed)
    sd = math.sqrt(t / n_steps)
    sups, ends = [], []
    for start in range(0, n, CHUNK):
        k = min(CHUNK, n - start)
        w = np.cumsum(rng.standard_normal((k, n_steps)) * sd, axis=1)
        sups.append(np.max(np.abs(w), axis=1))
        ends.append(w[:, -1])
    return np.concatenate(sups), np.concatenate(ends)


def doob_check(t: float = 1.0, n: int = 100_000, seed: int = 0, n_steps: int = 1000) -> CheckResult:
    """Ratio E[sup_{[0,t]} W^2] / E[W(t)^2]; passes when it lies in [1, 4 + 3 SE]."""
    _need(n)
    sup_abs, wt = _brownian_sup("doob", t, n, seed, n_steps)
    a, b = sup_abs**2, wt**2
    ma, mb = a.mean(), b.mean()
    ratio = ma / mb
    # delta method for a ratio of correlated means
    cov = np.cov(a, b)
    var = (cov[0, 0] / mb**2 - 2 * ma * cov[0, 1] / mb**3 + ma**2 * cov[1, 1] / mb**4) / n
    se = math.sqrt(max(var, 0.0))
    return _result("doob_ratio", ratio, (1.0, 4.0 + 3 * se), 3 * se, n, seed, ratio, se)


def maximal_inequality_check(eta: float = 1.0, t: float = 1.0, n: int = 100_000, seed: int = 0,
                             n_steps: int = 1000) -> CheckResult:
    """eta * P[sup|W| >= eta] <= E|W(t)| (+3 SE); the statistic is the left side minus the right side."""
    if not eta > 0:
        raise ValueError("eta must be > 0")
    _need(n)
    sup_abs, wt = _brownian_sup("maximal", t, n, seed, n_steps)
    d = eta * (sup_abs >= eta) - np.abs(wt)
    diff = float(d.mean())
    se = float(d.std(ddof=1) / math.sqrt(n))
    return _result("maximal_inequality", diff, (-math.inf, 3 * se), 3 * se, n, seed,
                   float(eta * (sup_abs >= eta).mean()), se)


def compound_poisson_totals(j: JumpSpec, t: float, n: int, rng: np.random.Generator) -> np.ndarray:
    counts = rng.poisson(j.nu * t, size=n) if j.nu > 0 else np.zeros(n, dtype=int)
    total = int(counts.sum())
    if j.size_dist is SizeDist.CONSTANT:
        return counts * j.gamma
    sizes = rng.normal(j.gamma, j.sigma_j, size=total)
    owner = np.repeat(np.arange(n), counts)
    return np.bincount(owner, weights=sizes, minlength=n)


def jump_moment_check(j: JumpSpec, t: float = 5.0, n: int = 100_000, seed: int = 0) -> list[CheckResult]:
    """Sample mean and variance of the total jump over [0, t] vs nu t gamma and nu t (gamma^2 + sigma_J^2)."""
    _need(n)
    totals = compound_poisson_totals(j, t, n, _rng("jumps", seed))
    mean_target = j.nu * t * j.gamma
    var_target = j.nu * t * j.second_moment
    # powers of tiny jump sizes underflow, so the standard errors are computed on rescaled totals
    scale = float(np.max(np.abs(totals))) or 1.0
    z = totals / scale
    m = float(totals.mean())
    v = float(totals.var(ddof=1))
    vz = float(z.var(ddof=1))
    se_m = math.sqrt(vz / n) * scale
    m4 = float(np.mean((z - z.mean()) ** 4))
    se_v = math.sqrt(max((m4 - vz**2 * (n - 3) / (n - 1)) / n, 0.0)) * scale**2
    return [
        _result("jump_mean", m, mean_target, 3 * se_m, n, seed, m, se_m),
        _result("jump_variance", v, var_target, 3 * se_v, n, seed, v, se_v),
    ]


# Small, mean-zero jumps for the independence rerun: the long-run mean stays at u and the
# finite-horizon correlation nu E[J^2] / (theta sqrt(t Var X Var S)) stays well below 3/sqrt(n).
STATIONARY_JUMPS = JumpSpec(nu=0.5, gamma=0.0, sigma_j=0.005)


def stationary_moment_check(p: ModelParams, cfg: SimConfig, jumps: JumpSpec = STATIONARY_JUMPS,
                            rel_tol_mean: float = 0.01, rel_tol_var: float = 0.10) -> list[CheckResult]:
    """Long-run mean/variance of the uncontrolled diffusion and independence of X(t) from the jump total."""
    if cfg.horizon < 20 / p.theta_tilde:
        raise ValueError("horizon must be >= 20 / theta_tilde")
    ens = simulate_arrays(p, NO_JUMPS, None, cfg, record_every=cfg.n_steps)
    xt = ens.terminal
    n = len(xt)
    mean = float(xt.mean())
    var = float(xt.var(ddof=1))
    paper_var = p.sigma**2 / (2 * p.theta_tilde)
    cir_var = p.u * p.sigma**2 / (2 * p.theta_tilde)
    out = [
        _result("stationary_mean", mean, p.u, rel_tol_mean * p.u, n, cfg.seed, mean, float(xt.std(ddof=1) / math.sqrt(n))),
        _result("stationary_variance_paper", var, paper_var, rel_tol_var * paper_var, n, cfg.seed, var),
        _result("stationary_variance_cir", var, cir_var, rel_tol_var * cir_var, n, cfg.seed, var),
    ]
    ens_j = simulate_arrays(p, jumps, None, replace(cfg, seed=cfg.seed + 1), record_every=cfg.n_steps)
    r = float(np.corrcoef(ens_j.terminal, ens_j.jump_sum)[0, 1]) if np.std(ens_j.jump_sum) > 0 else 0.0
    out.append(_result("terminal_jump_correlation", r, 0.0, 3 / math.sqrt(n), n, cfg.seed + 1, r))
    return out


def lyapunov_curve(p: ModelParams, cfg: SimConfig, x0_far: float, n_check: int = 50, jumps: JumpSpec = NO_JUMPS):
    """Checkpoint times over five mean-reversion times and the per-path V = (X - u)^2 there."""
    horizon = 5.0 / p.theta_tilde
    n_steps = max(n_check, math.ceil(horizon / cfg.dt))
    n_steps = n_check * math.ceil(n_steps / n_check)
    run = replace(cfg, dt=horizon / n_steps, horizon=horizon, x0=x0_far)
    ens = simulate_arrays(p, jumps, None, run, record_every=n_steps // n_check)
    return ens.times, (ens.values - p.u) ** 2


def lyapunov_check(p: ModelParams, cfg: SimConfig, x0_far: float, n_check: int = 50) -> CheckResult:
    """E[(X - u)^2] from a far start must fall at every checkpoint; the statistic is
    max_k (mean increment_k - 3 SE_k), which has to stay <= 0."""
    sd = math.sqrt(p.u * p.sigma**2 / (2 * p.theta_tilde))
    if x0_far == p.u or abs(x0_far - p.u) < 5 * sd:
        raise ValueError("x0_far must sit at least 5 stationary sd away from u")
    _, v = lyapunov_curve(p, cfg, x0_far, n_check)
    inc = np.diff(v, axis=1)
    n = v.shape[0]
    mean_inc = inc.mean(axis=0)
    se = inc.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(mean_inc)
    stat = float(np.max(mean_inc - 3 * se))
    return _result("lyapunov_descent", stat, (-math.inf, 0.0), 0.0, n, cfg.seed, float(v[:, -1].mean()))


# --- Shapiro-Wilk (Royston 1995, algorithm AS R94) ---

_C1 = (0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056)
_C2 = (0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633)
_C3 = (0.5440, -0.39978, 0.025054, -6.714e-4)
_C4 = (1.3822, -0.77857, 0.062767, -0.0020322)
_C5 = (-1.5861, -0.31082, -0.083751, 0.0038915)
_C6 = (-0.4803, -0.082676, 0.0030302)
_G = (-2.273, 0.459)


def _poly(c: Sequence[float], x: float) -> float:
    out = 0.0
    for coef in reversed(c):
        out = out * x + coef
    return out


def shapiro_wilk_coefficients(n: int) -> np.ndarray:
    """Antisymmetric weights a_1..a_n (ascending order statistics), unit norm."""
    if n == 3:
        return np.array([-math.sqrt(0.5), 0.0, math.sqrt(0.5)])
    i = np.arange(1, n + 1)
    m = ndtri((i - 0.375) / (n + 0.25))
    summ2 = float(np.sum(m**2))
    ssumm2 = math.sqrt(summ2)
    rsn = 1 / math.sqrt(n)
    a = m / ssumm2
    an = m[-1] / ssumm2 + _poly(_C1, rsn)
    if n > 5:
        an1 = m[-2] / ssumm2 + _poly(_C2, rsn)
        fac = math.sqrt((summ2 - 2 * m[-1] ** 2 - 2 * m[-2] ** 2) / (1 - 2 * an**2 - 2 * an1**2))
        a = m / fac
        a[-1], a[-2] = an, an1
        a[0], a[1] = -an, -an1
    else:
        fac = math.sqrt((summ2 - 2 * m[-1] ** 2) / (1 - 2 * an**2))
        a = m / fac
        a[-1], a[0] = an, -an
    return a


def shapiro_wilk(series) -> tuple[float, float]:
    """W statistic and p-value."""
    x = np.sort(np.asarray(series, dtype=float))
    n = len(x)
    if not 3 <= n <= 5000:
        raise SizeOutOfRange(f"Shapiro-Wilk needs 3 <= N <= 5000, got {n}")
    rng_ = x[-1] - x[0]
    if rng_ <= 0 or not math.isfinite(rng_):
        raise ConstantSeries("series is constant")
    a = shapiro_wilk_coefficients(n)
    xs = (x - x.mean()) / rng_
    w = float(np.dot(a, xs) ** 2 / np.dot(xs, xs))
    w = min(w, 1.0)
    if n == 3:
        p = 6 / math.pi * (math.asin(math.sqrt(w)) - math.asin(math.sqrt(0.75)))
        return w, max(p, 0.0)
    w1 = 1.0 - w
    if w1 <= 0:
        return w, 1.0
    y = math.log(w1)
    if n <= 11:
        gamma = _poly(_G, n)
        if y >= gamma:
            return w, 1e-99
        y = -math.log(gamma - y)
        mu = _poly(_C3, n)
        sd = math.exp(_poly(_C4, n))
    else:
        ln = math.log(n)
        mu = _poly(_C5, ln)
        sd = math.exp(_poly(_C6, ln))
    return w, float(ndtr(-(y - mu) / sd))


def qq_points(series) -> list[tuple[float, float]]:
    """(Phi^-1((i - 0.375)/(N + 0.25)), i-th order statistic): Blom plotting positions."""
    x = np.sort(np.asarray(series, dtype=float))
    n = len(x)
    if n < 3:
        raise InsufficientData("QQ points need N >= 3")
    q = ndtri((np.arange(1, n + 1) - 0.375) / (n + 0.25))
    return list(zip(q.tolist(), x.tolist()))


@dataclass(frozen=True)
class BoxplotStats:
    q1: float
    median: float
    q3: float
    iqr: float
    whisker_lo: float
    whisker_hi: float
    outliers: tuple[float, ...]


def boxplot_stats(series) -> BoxplotStats:
    """Linear-interpolation quartiles; whiskers end at the most extreme points inside 1.5 IQR fences."""
    x = np.sort(np.asarray(series, dtype=float))
    if len(x) < 5:
        raise InsufficientData("box plot needs N >= 5")
    q1, med, q3 = np.quantile(x, [0.25, 0.5, 0.75])
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = x[(x >= lo_fence) & (x <= hi_fence)]
    outliers = x[(x < lo_fence) | (x > hi_fence)]
    return BoxplotStats(float(q1), float(med), float(q3), float(iqr), float(inside.min()), float(inside.max()),
                        tuple(outliers.tolist()))


def run_suite(suite: str = "all", seed: int = 0, quick: bool = False) -> list[CheckResult]:
    """Default parameterisation of every check, used by the ``validate`` command."""
    n = MIN_SAMPLES if quick else 100_000
    out: list[CheckResult] = []
    if suite in ("all", "martingale"):
        out += martingale_checks(1.0, 0.0, n, seed)
    if suite in ("all", "doob"):
        out.append(doob_check(1.0, n, seed, n_steps=200 if quick else 1000))
        out.append(maximal_inequality_check(1.0, 1.0, n, seed, n_steps=200 if quick else 1000))
    if suite in ("all", "jumps"):
        out += jump_moment_check(JumpSpec(2.0, 0.3, 0.1), 5.0, n, seed)
    if suite in ("all", "stationary"):
        p = ModelParams(theta_tilde=1.0, u=1.0, sigma=0.2, rho=0.0, xi=1.0, phi=0.0, c0=1.0)
        cfg = SimConfig(dt=0.01, horizon=20.0, n_paths=2_000 if quick else 10_000, seed=seed)
        out += stationary_moment_check(p, cfg, rel_tol_mean=0.02 if quick else 0.01)
    if suite in ("all", "lyapunov"):
        p = ModelParams(theta_tilde=1.0, u=1.0, sigma=0.1, rho=0.0, xi=1.0, phi=0.0, c0=1.0)
        cfg = SimConfig(dt=0.01, horizon=5.0, n_paths=2_000 if quick else 10_000, seed=seed)
        out.append(lyapunov_check(p, cfg, 3.0))
    if not out:
        raise ValueError(f"unknown suite {suite!r}")
    return out
