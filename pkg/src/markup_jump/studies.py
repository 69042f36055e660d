"""Simulation studies that exercise several modules at once."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .estimation import estimate_all
from .params import JumpSpec, ModelParams, SimConfig
from .sde import simulate_arrays

RECOVERY_PARAMS = ModelParams(theta_tilde=2.0, u=1.0, sigma=0.1, rho=0.0, xi=1.0, phi=0.0, c0=1.0)
RECOVERY_JUMPS = JumpSpec(nu=1.0, gamma=0.3, sigma_j=0.1)

# Picard diagnostic instance: jump-diffusion on [0, 1]. Longer horizons make the early
# iterates grow (the t^k / k! factor) before the contraction sets in.
PICARD_REFERENCE = dict(
    p=ModelParams(theta_tilde=1.0, u=1.0, sigma=0.2, rho=0.0, xi=1.0, phi=0.0, c0=1.0),
    j=JumpSpec(nu=1.0, gamma=0.1, sigma_j=0.05),
    policy=None,
    cfg=SimConfig(dt=1e-3, horizon=1.0, seed=2024, x0=0.5),
)


@dataclass
class RecoveryResult:
    truth: dict[str, float]
    coverage: dict[str, float]
    mean_z: dict[str, float]
    sd_z: dict[str, float]
    n_reps: int
    settings: dict = field(default_factory=dict)


def recovery_study(n_reps: int = 200, seed: int = 11, p: ModelParams = RECOVERY_PARAMS,
                   j: JumpSpec = RECOVERY_JUMPS, dt: float = 0.005, horizon: float = 100.0,
                   jump_k: float = 5.0, jump_window: int = 101, width: float = 2.0) -> RecoveryResult:
    """Simulate ``n_reps`` independent paths, run the full estimator on each and report how often
    truth lies inside estimate +/- ``width`` * SE.

    The observation grid is the simulation grid, so the regression sees the exact Euler
    transition. nu*dt is kept small so two jumps rarely share one step.
    """
    cfg = SimConfig(dt=dt, horizon=horizon, n_paths=n_reps, seed=seed)
    ens = simulate_arrays(p, j, None, cfg)
    truth = {"u": p.u, "theta": p.theta_tilde, "sigma": p.sigma, "nu": j.nu, "gamma": j.gamma,
             "sigma_j": j.sigma_j}
    z = {k: [] for k in truth}
    for i in range(n_reps):
        rep = estimate_all(np.column_stack([ens.times, ens.values[i]]), jump_k=jump_k,
                           jump_window=jump_window).to_dict()
        for k, v in truth.items():
            est, se = rep[f"{k}_hat"], rep[f"{k}_se"]
            z[k].append(np.inf if est is None or not se else (est - v) / se)
    zs = {k: np.asarray(v) for k, v in z.items()}
    return RecoveryResult(
        truth,
        {k: float(np.mean(np.abs(v) <= width)) for k, v in zs.items()},
        {k: float(np.mean(v[np.isfinite(v)])) for k, v in zs.items()},
        {k: float(np.std(v[np.isfinite(v)])) for k, v in zs.items()},
        n_reps,
        {"dt": dt, "horizon": horizon, "seed": seed, "jump_k": jump_k, "jump_window": jump_window, "width": width},
    )
