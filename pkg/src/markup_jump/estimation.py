"""Parameter estimation from discretely observed markup series."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InsufficientData, NonPositiveState, ZeroGap


@dataclass(frozen=True)
class SeriesObservation:
    timestamp: float
    value: float


def _arrays(series) -> tuple[np.ndarray, np.ndarray]:
    """Accepts a list of SeriesObservation, (t, x) pairs, or a plain value sequence (unit spacing)."""
    if len(series) and isinstance(series[0], SeriesObservation):
        t = np.array([o.timestamp for o in series], dtype=float)
        x = np.array([o.value for o in series], dtype=float)
    else:
        arr = np.asarray(series, dtype=float)
        if arr.ndim == 2:
            t, x = arr[:, 0], arr[:, 1]
        else:
            x = arr
            t = np.arange(len(x), dtype=float)
    return t, x


@dataclass
class EstimateReport:
    n_obs: int
    u_hat: float | None = None
    u_se: float | None = None
    theta_hat: float | None = None
    theta_se: float | None = None
    sigma_hat: float | None = None
    sigma_se: float | None = None
    nu_hat: float | None = None
    nu_se: float | None = None
    gamma_hat: float | None = None
    gamma_se: float | None = None
    sigma_j_hat: float | None = None
    sigma_j_se: float | None = None

    def to_dict(self) -> dict:
        out = {}
        for k, v in self.__dict__.items():
            out[k] = None if v is None or (isinstance(v, float) and not math.isfinite(v)) else v
        return out


def u_hat_terms(series, theta_tilde: float, keep: np.ndarray | None = None) -> np.ndarray:
    """One term per increment; ``keep`` (bool mask over increments) drops e.g. flagged jumps."""
    t, x = _arrays(series)
    if len(x) < 2:
        raise InsufficientData("u estimate needs at least 2 observations")
    if theta_tilde <= 0:
        raise ValueError("theta_tilde must be > 0")
    gaps = np.diff(t)
    if np.any(gaps <= 0):
        raise ZeroGap("time gaps must be strictly positive")
    terms = x[:-1] + np.diff(x) / (theta_tilde * gaps)
    return terms if keep is None else terms[np.asarray(keep, dtype=bool)]


def estimate_u_hat(series, theta_tilde: float, keep: np.ndarray | None = None) -> float:
    """Average of the one-step drift inversions X_i + dX_i / (theta * ds_i)."""
    return float(np.mean(u_hat_terms(series, theta_tilde, keep)))


def u_hat_se(series, theta_tilde: float, keep: np.ndarray | None = None) -> float:
    terms = u_hat_terms(series, theta_tilde, keep)
    if len(terms) < 2:
        return math.nan
    return float(terms.std(ddof=1) / math.sqrt(len(terms)))


@dataclass(frozen=True)
class ThetaSigmaFit:
    theta_hat: float
    sigma_hat: float
    theta_se: float
    sigma_se: float
    u_star: float


def estimate_theta_sigma(series, dt: float | None = None, keep: np.ndarray | None = None) -> ThetaSigmaFit:
    """Mean reversion and square-root volatility from a regularly sampled series.

    Regresses dX_i = a + b X_i by least squares weighted with 1/X_i (the CIR
    conditional variance), so theta = -b/dt and u* = a / (theta dt). Then
    sigma^2 = mean(resid_i^2 / (X_i dt)). ``keep`` masks increments out of both steps.
    """
    t, x = _arrays(series)
    if len(x) < 30:
        raise InsufficientData("theta/sigma regression needs at least 30 observations")
    if dt is None:
        gaps = np.diff(t)
        dt = float(gaps[0])
        if not np.allclose(gaps, dt, rtol=1e-6, atol=0):
            raise ValueError("regression assumes a constant sampling interval")
    if dt <= 0:
        raise ZeroGap("dt must be > 0")
    xl, dx = x[:-1], np.diff(x)
    if keep is not None:
        keep = np.asarray(keep, dtype=bool)
        xl, dx = xl[keep], dx[keep]
    if np.any(xl <= 0):
        raise NonPositiveState("sigma step needs strictly positive values")
    w = 1.0 / xl
    design = np.column_stack([np.ones_like(xl), xl])
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(design * sw[:, None], dx * sw, rcond=None)
    a, b = coef
    resid = dx - design @ coef
    n = len(dx)
    theta = -b / dt
    u_star = a / (theta * dt) if theta != 0 else math.nan
    sigma2 = float(np.mean(resid**2 / (xl * dt)))
    sigma = math.sqrt(max(sigma2, 0.0))
    # weighted residual variance -> OLS covariance of (a, b)
    s2 = float(np.sum(w * resid**2) / max(n - 2, 1))
    xtwx = design.T @ (design * w[:, None])
    try:
        cov = s2 * np.linalg.inv(xtwx)
        theta_se = math.sqrt(max(cov[1, 1], 0.0)) / dt
    except np.linalg.LinAlgError:
        theta_se = math.nan
    sigma_se = sigma / math.sqrt(2 * n)
    return ThetaSigmaFit(float(theta), sigma, float(theta_se), sigma_se, float(u_star))


@dataclass(frozen=True)
class JumpMoments:
    nu_hat: float
    gamma_hat: float | None
    sigma_j_hat: float | None
    n_jumps: int
    horizon: float
    nu_se: float
    gamma_se: float | None
    sigma_j_se: float | None

    @property
    def implied_mean(self) -> float | None:
        """nu t gamma for the total jump contribution."""
        return None if self.gamma_hat is None else self.nu_hat * self.horizon * self.gamma_hat

    @property
    def implied_variance(self) -> float | None:
        """nu t (gamma^2 + sigma_J^2)."""
        if self.gamma_hat is None:
            return None
        sj = self.sigma_j_hat or 0.0
        return self.nu_hat * self.horizon * (self.gamma_hat**2 + sj**2)


def estimate_jump_moments(jump_times: Sequence[float], jump_sizes: Sequence[float], horizon: float) -> JumpMoments:
    if horizon <= 0:
        raise ValueError("horizon must be > 0")
    sizes = np.asarray(jump_sizes, dtype=float)
    n = len(sizes)
    if len(jump_times) != n:
        raise ValueError("jump_times and jump_sizes differ in length")
    nu = n / horizon
    nu_se = math.sqrt(max(nu, 0.0) / horizon)
    if n == 0:
        return JumpMoments(0.0, None, None, 0, horizon, nu_se, None, None)
    gamma = float(sizes.mean())
    if n < 2:
        return JumpMoments(nu, gamma, None, n, horizon, nu_se, None, None)
    sj = float(sizes.std(ddof=1))
    return JumpMoments(nu, gamma, sj, n, horizon, nu_se, sj / math.sqrt(n), sj / math.sqrt(2 * (n - 1)))


def _rolling_mad(d: np.ndarray, window: int) -> np.ndarray:
    n = len(d)
    if n <= window:
        med = np.median(d)
        return np.full(n, np.median(np.abs(d - med)))
    half = window // 2
    views = np.lib.stride_tricks.sliding_window_view(d, window)
    med = np.median(views, axis=1)
    mad = np.median(np.abs(views - med[:, None]), axis=1)
    # centre each window on its increment; edges reuse the nearest full window
    idx = np.clip(np.arange(n) - half, 0, len(mad) - 1)
    return mad[idx]


def detect_jumps(series, k: float = 4.0, window: int = 21) -> np.ndarray:
    """Indices i of observations reached by a jump, i.e. |X_i - X_{i-1}| > k * 1.4826 * rolling MAD."""
    _, x = _arrays(series)
    if len(x) < 30:
        raise InsufficientData("jump detection needs at least 30 observations")
    if k <= 0:
        raise ValueError("k must be > 0")
    d = np.diff(x)
    scale = 1.4826 * _rolling_mad(d, window)
    flagged = np.abs(d) > k * scale
    return np.flatnonzero(flagged) + 1


def estimate_all(series, theta: float | None = None, jump_k: float | None = 4.0,
                 jump_window: int = 21) -> EstimateReport:
    """Full report. Jumps are detected first (unless ``jump_k`` is None) and their increments
    are left out of the u, theta and sigma steps, which describe the continuous part only.

    When theta is fitted, the u standard error adds the delta-method term for theta's
    uncertainty: d u_hat / d theta = -mean(dX_i / ds_i) / theta^2.
    """
    t, x = _arrays(series)
    if len(x) < 2:
        raise InsufficientData("need at least 2 observations")
    rep = EstimateReport(n_obs=len(x))
    keep = None
    if jump_k is not None and len(x) >= 30:
        idx = detect_jumps(np.column_stack([t, x]), jump_k, jump_window)
        jm = estimate_jump_moments(t[idx], np.diff(x)[idx - 1], float(t[-1] - t[0]))
        rep.nu_hat, rep.nu_se = jm.nu_hat, jm.nu_se
        rep.gamma_hat, rep.gamma_se = jm.gamma_hat, jm.gamma_se
        rep.sigma_j_hat, rep.sigma_j_se = jm.sigma_j_hat, jm.sigma_j_se
        keep = np.ones(len(x) - 1, dtype=bool)
        keep[idx - 1] = False
    fit = None
    if len(x) >= 30 and np.all(x[:-1] > 0):
        gaps = np.diff(t)
        if np.allclose(gaps, gaps[0], rtol=1e-6, atol=0):
            fit = estimate_theta_sigma(np.column_stack([t, x]), keep=keep)
    if theta is None:
        if fit is None:
            raise InsufficientData("fitting theta needs >= 30 positive, regularly spaced observations")
        theta = fit.theta_hat
        rep.theta_hat, rep.theta_se = fit.theta_hat, fit.theta_se
    else:
        rep.theta_hat = float(theta)
    if fit is not None:
        rep.sigma_hat, rep.sigma_se = fit.sigma_hat, fit.sigma_se
    pairs = np.column_stack([t, x])
    rep.u_hat = estimate_u_hat(pairs, theta, keep)
    rep.u_se = u_hat_se(pairs, theta, keep)
    if rep.theta_se is not None and math.isfinite(rep.theta_se):
        rate = np.diff(x) / np.diff(t)
        rate = rate if keep is None else rate[keep]
        grad = -float(np.mean(rate)) / theta**2
        rep.u_se = math.sqrt(rep.u_se**2 + (grad * rep.theta_se) ** 2)
    return rep
