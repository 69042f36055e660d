"""Closed-form strategic-complementarity control.

The Lagrangian density is

    l(s, m, x) = e^{-rho s} [xi ((1+phi) x + m)^2 + c0 m^2 / 2]
                 + e^{theta s / x} dl
                 + e^{theta s} (theta x - x') / x^2 dl
                 + dl/ds e^{theta s / x}
                 - exp(theta s q / x^2) dl,            q = theta (u - x) + m^2
                 + sigma / (2x) e^{theta s} [theta^2 x - x'' - 2 theta x' + 2 x'^2 / x] dl

where ``dl`` is the multiplier increment d lambda(s) and x', x'' are path
derivatives held fixed when differentiating in x. With dl = dl/ds = 0 only the
discounted flow cost survives.

All scalar functions accept numpy arrays for ``x`` (and ``m``) and broadcast.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import SingularDenominator, ZeroState
from .params import ModelParams


class LambdaMode(str, enum.Enum):
    ZERO = "Zero"
    CONSTANT = "Constant"
    TABULATED = "Tabulated"


@dataclass(frozen=True)
class LambdaSpec:
    """Multiplier increment d lambda(s) and its time derivative.

    ``Tabulated`` interpolates linearly in s between grid nodes and holds the
    end values outside the grid.
    """

    mode: LambdaMode = LambdaMode.ZERO
    dlambda: float = 0.0
    dlambda_ds: float = 0.0
    grid_s: tuple[float, ...] = ()
    grid_dlambda: tuple[float, ...] = ()
    grid_dlambda_ds: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "mode", LambdaMode(self.mode))
        if self.mode is LambdaMode.TABULATED:
            s = np.asarray(self.grid_s, dtype=float)
            if len(s) < 1 or len(self.grid_dlambda) != len(s) or len(self.grid_dlambda_ds) != len(s):
                raise ValueError("tabulated lambda needs equal-length, non-empty grids")
            if np.any(np.diff(s) <= 0):
                raise ValueError("tabulated lambda grid must be strictly increasing in s")
        if self.mode is LambdaMode.ZERO and (self.dlambda or self.dlambda_ds):
            raise ValueError("Zero mode carries no lambda values")

    @classmethod
    def zero(cls) -> "LambdaSpec":
        return cls()

    @classmethod
    def constant(cls, dlambda: float, dlambda_ds: float = 0.0) -> "LambdaSpec":
        return cls(LambdaMode.CONSTANT, float(dlambda), float(dlambda_ds))

    @classmethod
    def tabulated(cls, s: Sequence[float], dlambda: Sequence[float], dlambda_ds: Sequence[float]) -> "LambdaSpec":
        return cls(LambdaMode.TABULATED, grid_s=tuple(map(float, s)), grid_dlambda=tuple(map(float, dlambda)),
                   grid_dlambda_ds=tuple(map(float, dlambda_ds)))

    @property
    def is_zero(self) -> bool:
        return self.mode is LambdaMode.ZERO

    def at(self, s: float) -> tuple[float, float]:
        if self.mode is LambdaMode.ZERO:
            return 0.0, 0.0
        if self.mode is LambdaMode.CONSTANT:
            return self.dlambda, self.dlambda_ds
        return (float(np.interp(s, self.grid_s, self.grid_dlambda)),
                float(np.interp(s, self.grid_s, self.grid_dlambda_ds)))

    def to_dict(self) -> dict:
        d = {"mode": self.mode.value}
        if self.mode is LambdaMode.CONSTANT:
            d.update(dlambda=self.dlambda, dlambda_ds=self.dlambda_ds)
        elif self.mode is LambdaMode.TABULATED:
            d.update(grid_s=list(self.grid_s), grid_dlambda=list(self.grid_dlambda),
                     grid_dlambda_ds=list(self.grid_dlambda_ds))
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LambdaSpec":
        mode = LambdaMode(d.get("mode", "Zero"))
        if mode is LambdaMode.ZERO:
            return cls.zero()
        if mode is LambdaMode.CONSTANT:
            return cls.constant(d.get("dlambda", 0.0), d.get("dlambda_ds", 0.0))
        return cls.tabulated(d["grid_s"], d["grid_dlambda"], d["grid_dlambda_ds"])


class DerivativeSource(str, enum.Enum):
    DRIFT_ANALYTIC = "DriftAnalytic"
    FINITE_DIFFERENCE = "FiniteDifference"


@dataclass(frozen=True)
class PathDerivatives:
    x_prime: float | np.ndarray
    x_double_prime: float | np.ndarray
    source: DerivativeSource = DerivativeSource.DRIFT_ANALYTIC

    @classmethod
    def from_drift(cls, p: ModelParams, x, m=0.0) -> "PathDerivatives":
        """x' = theta (u - x) + m^2 and x'' = -theta x' (m held constant)."""
        xp = p.theta_tilde * (p.u - np.asarray(x, dtype=float)) + np.asarray(m, dtype=float) ** 2
        if np.ndim(xp) == 0:
            xp = float(xp)
        return cls(xp, -p.theta_tilde * xp, DerivativeSource.DRIFT_ANALYTIC)

    @classmethod
    def from_path(cls, times, values) -> "PathDerivatives":
        """Finite differences along a sampled path (second order inside, one-sided at the ends)."""
        t = np.asarray(times, dtype=float)
        v = np.asarray(values, dtype=float)
        xp = np.gradient(v, t, edge_order=2) if len(v) >= 3 else np.gradient(v, t)
        xpp = np.gradient(xp, t, edge_order=2) if len(v) >= 3 else np.zeros_like(v)
        return cls(xp, xpp, DerivativeSource.FINITE_DIFFERENCE)

    def at(self, i: int) -> "PathDerivatives":
        return PathDerivatives(float(np.asarray(self.x_prime)[i]), float(np.asarray(self.x_double_prime)[i]),
                               self.source)


@dataclass
class ControlEval:
    l_value: float = math.nan
    l_m: float = math.nan
    l_x: float = math.nan
    l_xx: float = math.nan
    l_xm: float = math.nan
    d1: float = math.nan
    d2: float = math.nan
    m_star: float = math.nan
    m_tilde: float = math.nan


class PartialsForm(str, enum.Enum):
    EXACT = "exact"  # true derivatives of l
    PRINTED = "printed"  # the displayed expressions, term by term


class MStarForm(str, enum.Enum):
    STATIONARY = "stationary"  # root of l_m l_xx^2 = 2 l_x l_xm with the dl-weighted m terms dropped
    PRINTED = "printed"  # displayed closed form, verbatim


def _guard(lam: LambdaSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if not lam.is_zero and np.any(x == 0):
        raise ZeroState("x = 0 is only admissible when lambda is Zero")
    return x


def _out(v):
    return float(v) if np.ndim(v) == 0 else v


class _Terms:
    """Shared subexpressions at (s, x, m)."""

    def __init__(self, p: ModelParams, lam: LambdaSpec, s: float, x, m, d: PathDerivatives):
        self.th = th = p.theta_tilde
        self.disc = math.exp(-p.rho * s)
        self.g = math.exp(th * s)
        self.dl, self.dls = lam.at(s)
        self.x = x
        self.m = np.asarray(m, dtype=float)
        self.xp = np.asarray(d.x_prime, dtype=float)
        self.xpp = np.asarray(d.x_double_prime, dtype=float)
        self.s = s
        self.sigma = p.sigma
        if not lam.is_zero:
            with np.errstate(over="ignore"):
                self.ex = np.exp(th * s / x)  # e^{theta s / x}
                self.q = th * (p.u - x) + self.m**2
                self.a = th * s * self.q / x**2
                self.ea = np.exp(self.a)
            self.b = th**2 * x - self.xpp - 2 * th * self.xp + 2 * self.xp**2 / x
            self.b1 = th**2 - 2 * self.xp**2 / x**2  # dB/dx
            self.b2 = 4 * self.xp**2 / x**3  # d2B/dx2
            self.a1 = -(th**2) * s / x**2 - 2 * th * s * self.q / x**3  # dA/dx
            self.a2 = 4 * th**2 * s / x**3 + 6 * th * s * self.q / x**4  # d2A/dx2


def eval_l(p: ModelParams, lam: LambdaSpec, s: float, x, m, d: PathDerivatives):
    x = _guard(lam, x)
    m = np.asarray(m, dtype=float)
    flow = math.exp(-p.rho * s) * (p.xi * ((1 + p.phi) * x + m) ** 2 + p.c0 * m**2 / 2)
    if lam.is_zero:
        return _out(flow)
    t = _Terms(p, lam, s, x, m, d)
    val = (
        flow
        + t.ex * t.dl
        + t.g * (t.th * x - t.xp) / x**2 * t.dl
        + t.dls * t.ex
        - t.ea * t.dl
        + t.sigma / (2 * x) * t.g * t.b * t.dl
    )
    return _out(val)


def eval_partials(p: ModelParams, lam: LambdaSpec, s: float, x, m, d: PathDerivatives,
                  form: PartialsForm | str = PartialsForm.EXACT) -> ControlEval:
    """Fill l_value, l_m, l_x, l_xx and l_xm at a scalar point.

    ``form="printed"`` reproduces the displayed partial derivatives term by
    term; those omit the m-dependence of the exp(theta s q / x^2) term and
    under-differentiate three terms of l_xx, so they only agree with the true
    derivatives when lambda is Zero.
    """
    form = PartialsForm(form)
    x = _guard(lam, x)
    m = np.asarray(m, dtype=float)
    e = math.exp(-p.rho * s)
    k = 1 + p.phi
    ce = ControlEval()
    ce.l_value = eval_l(p, lam, s, x, m, d)
    l_m = e * (2 * p.xi * (k * x + m) + p.c0 * m)
    l_x = 2 * p.xi * e * k * (k * x + m)
    l_xx = 2 * p.xi * k**2 * e
    l_xm = 2 * e * p.xi * k
    if not lam.is_zero:
        t = _Terms(p, lam, s, x, m, d)
        th, dl, dls, g, sg = t.th, t.dl, t.dls, t.g, t.sigma
        ts = th * s
        l_x = (
            l_x
            - ts / x**2 * t.ex * dl
            - g * (th * x**2 - 2 * x * t.xp) / x**4 * dl
            - ts / x**2 * t.ex * dls
            - t.ea * t.a1 * dl
            + g * (-sg / (2 * x**2) * t.b + sg / (2 * x) * t.b1) * dl
        )
        if form is PartialsForm.EXACT:
            dam = 2 * ts * m / x**2  # dA/dm
            l_m = l_m - t.ea * dam * dl
            l_xm = l_xm - dl * t.ea * (t.a1 * dam - 4 * ts * m / x**3)
            ex2 = t.ex * (ts**2 / x**4 + 2 * ts / x**3)  # d2/dx2 e^{theta s / x}
            l_xx = (
                l_xx
                + ex2 * dl
                + g * (2 * th / x**3 - 6 * t.xp / x**4) * dl
                + ex2 * dls
                - t.ea * (t.a1**2 + t.a2) * dl
                + sg / 2 * g * (t.b2 / x - 2 * t.b1 / x**2 + 2 * t.b / x**3) * dl
            )
        else:
            l_xx = l_xx + _d2_lambda_terms(t, x) + t.ea * (-t.a1) * dl
    ce.l_m, ce.l_x, ce.l_xx, ce.l_xm = (_out(v) for v in (l_m, l_x, l_xx, np.broadcast_to(l_xm, np.shape(l_m))))
    return ce


def _d2_lambda_terms(t: _Terms, x):
    """The dl-weighted part of the displayed l_xx that does not involve m (shared with D2)."""
    th, dl, dls, g, sg, s = t.th, t.dl, t.dls, t.g, t.sigma, t.s
    ts = th * s
    return (
        t.ex * ts / x**3 * dl
        + g / x**8 * ((-2 * th * x + 2 * t.xp) * x**4 + (th * x**2 - 2 * x * t.xp) * 4 * x**3) * dl
        + ts / x**3 * t.ex * dls
        + g * (sg / x**3 * t.b - sg / (2 * x**2) * t.b1) * dl
    )


def eval_D1_D2(p: ModelParams, lam: LambdaSpec, s: float, x, d: PathDerivatives):
    """The m-free groups D1 and D2 of the first-order condition, as displayed.

    Under Zero lambda D1 = 0 and D2 = 2 xi (1+phi)^2 e^{-rho s}.
    """
    x = _guard(lam, x)
    d2 = 2 * p.xi * (1 + p.phi) ** 2 * math.exp(-p.rho * s) + 0 * x
    if lam.is_zero:
        return _out(0 * x), _out(d2)
    t = _Terms(p, lam, s, x, 0.0, d)
    th, dl, dls, g, sg = t.th, t.dl, t.dls, t.g, t.sigma
    ts = th * s
    d1 = (
        -ts / x**2 * t.ex * dl
        - g * (th * x**2 - 2 * x * t.xp) / x**4 * dl
        - ts / x**2 * t.ex * dls
        + g * (-sg / (2 * x**2) * t.b + sg / (2 * x) * t.b1) * dl
    )
    return _out(d1), _out(d2 + _d2_lambda_terms(t, x))


def m_star(p: ModelParams, s: float, x, d1, d2, form: MStarForm | str = MStarForm.STATIONARY):
    """Closed-form optimal control from D1, D2.

    ``stationary`` (default) is the root in m of

        (2 xi ((1+phi) x + m) + c0 m) D2^2 = 4 xi (1+phi) [2 xi e^{-rho s} (1+phi) ((1+phi) x + m) + D1]

    i.e. xi(1+phi)[8 xi E (1+phi)^2 x + 4 D1 - 2 D2^2 x] / [(2 xi + c0) D2^2 - 8 xi^2 E (1+phi)^2].

    ``printed`` is xi(1+phi)[2 xi E (1+phi)^2 x + D1 - D2^2 x] / [D2^2 (2 xi + c0) - 2 xi^2 (1+phi)^2].
    """
    form = MStarForm(form)
    x = np.asarray(x, dtype=float)
    d1 = np.asarray(d1, dtype=float)
    d2 = np.asarray(d2, dtype=float)
    e = math.exp(-p.rho * s)
    k = 1 + p.phi
    if form is MStarForm.STATIONARY:
        num = p.xi * k * (8 * p.xi * e * k**2 * x + 4 * d1 - 2 * d2**2 * x)
        pos, neg = (2 * p.xi + p.c0) * d2**2, 8 * p.xi**2 * e * k**2
    else:
        num = p.xi * k * (2 * p.xi * e * k**2 * x + d1 - d2**2 * x)
        pos, neg = d2**2 * (2 * p.xi + p.c0), 2 * p.xi**2 * k**2
    den = pos - neg
    scale = np.abs(pos) + np.abs(neg)
    bad = ~(np.abs(den) > 1e-13 * scale) | (scale == 0)
    if np.any(bad):
        idx = int(np.argmax(np.broadcast_to(bad, np.shape(den)).ravel())) if np.ndim(den) else None
        raise SingularDenominator(
            f"m* denominator vanishes for xi={p.xi}, phi={p.phi}, c0={p.c0}, rho={p.rho}, s={s}", idx)
    return _out(num / den)


def m_tilde(m):
    """Logistic transform 1 / (1 + e^{-m}), computed without overflow."""
    m = np.asarray(m, dtype=float)
    out = np.where(m >= 0, 1.0 / (1.0 + np.exp(-np.abs(m))), np.exp(-np.abs(m)) / (1.0 + np.exp(-np.abs(m))))
    return _out(out)


def optimality_residual(ce: ControlEval) -> float:
    """l_m l_xx^2 - 2 l_x l_xm."""
    return ce.l_m * ce.l_xx**2 - 2 * ce.l_x * ce.l_xm


@dataclass(frozen=True)
class ControlSetup:
    """Everything the closed-form pipeline needs besides the state."""

    params: ModelParams
    lam: LambdaSpec = field(default_factory=LambdaSpec.zero)
    s: float = 2.0
    m_form: MStarForm = MStarForm.STATIONARY
    derivative_m: float = 0.0  # control value used inside x' = drift when D1/D2 need path derivatives

    def __post_init__(self):
        object.__setattr__(self, "m_form", MStarForm(self.m_form))


def evaluate(setup: ControlSetup, x, d: PathDerivatives | None = None, partials: bool = False) -> ControlEval:
    """Full pipeline at one state: D1, D2, m*, m~ (and optionally the partials at m*)."""
    p = setup.params
    d = d or PathDerivatives.from_drift(p, x, setup.derivative_m)
    d1, d2 = eval_D1_D2(p, setup.lam, setup.s, x, d)
    ms = m_star(p, setup.s, x, d1, d2, setup.m_form)
    if partials:
        ce = eval_partials(p, setup.lam, setup.s, x, ms, d)
    else:
        ce = ControlEval()
    ce.d1, ce.d2, ce.m_star, ce.m_tilde = d1, d2, ms, m_tilde(ms)
    return ce


def control_curve(p: ModelParams, lam: LambdaSpec, s: float, x_grid: Sequence[float],
                  m_form: MStarForm | str = MStarForm.STATIONARY, derivative_m: float = 0.0):
    """(x, m*, m~) for every grid point, with path derivatives from the drift."""
    setup = ControlSetup(p, lam, s, MStarForm(m_form), derivative_m)
    rows = []
    for i, x in enumerate(x_grid):
        try:
            ce = evaluate(setup, float(x))
        except SingularDenominator as exc:
            raise SingularDenominator(str(exc).split(" (index")[0], i) from exc
        except ZeroState as exc:
            raise ZeroState(f"{exc} (index {i})") from exc
        rows.append((float(x), float(ce.m_star), float(ce.m_tilde)))
    return rows


def feedback_policy(setup: ControlSetup):
    """m*(x) as a vectorized policy for the simulator (D1/D2 at the fixed time ``setup.s``)."""

    def policy(s, x):
        x = np.asarray(x, dtype=float)
        d = PathDerivatives.from_drift(setup.params, x, setup.derivative_m)
        d1, d2 = eval_D1_D2(setup.params, setup.lam, setup.s, x, d)
        return np.asarray(m_star(setup.params, setup.s, x, d1, d2, setup.m_form), dtype=float)

    return policy


def objective_mc(p: ModelParams, j, policy, cfg):
    """Monte Carlo estimate and standard error of

        E int_0^t e^{-rho s} [xi ((1+phi) X + m)^2 + c0 m^2 / 2] ds

    using the trapezoid rule on each simulated path.
    """
    from .sde import simulate_arrays, zero_policy

    policy = policy or zero_policy
    ens = simulate_arrays(p, j, policy, cfg)
    s = ens.times
    x = ens.values
    m = np.asarray(policy(s[None, :], x), dtype=float) * np.ones_like(x)
    f = np.exp(-p.rho * s) * (p.xi * ((1 + p.phi) * x + m) ** 2 + p.c0 * m**2 / 2)
    per_path = np.sum(0.5 * (f[:, 1:] + f[:, :-1]) * np.diff(s), axis=1)
    n = len(per_path)
    se = float(per_path.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan
    return float(per_path.mean()), se
