"""Euler-Maruyama simulation of the controlled CIR markup SDE with compound-Poisson jumps.

    dX = [theta (u - X) + m(s, X)^2] ds + sigma sqrt(X+) dW + dJ

Every path owns an RNG stream derived from ``(seed, path_index)``, so an
ensemble is identical whatever the block size or worker count.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import NoContraction, NonFinitePath, NonPositiveState
from .params import JumpSpec, ModelParams, NegativityScheme, SimConfig, SizeDist

Policy = Callable[[float, np.ndarray], np.ndarray]

BLOCK_SIZE = 4096


def zero_policy(s, x):
    return np.zeros_like(np.asarray(x, dtype=float))


def drift(p: ModelParams, x, m):
    """theta (u - x) + m^2."""
    return p.theta_tilde * (p.u - x) + m * m


def path_rng(seed: int, path_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(path_index),))))


def sample_jumps(j: JumpSpec, horizon: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Jump times (sorted, uniform order statistics on [0, horizon]) and sizes."""
    if horizon <= 0:
        raise ValueError("horizon must be > 0")
    if j.nu == 0:
        return np.empty(0), np.empty(0)
    n = rng.poisson(j.nu * horizon)
    times = np.sort(rng.uniform(0.0, horizon, size=n))
    if j.size_dist is SizeDist.CONSTANT:
        sizes = np.full(n, j.gamma)
    else:
        sizes = rng.normal(j.gamma, j.sigma_j, size=n)
    return times, sizes


def time_grid(cfg: SimConfig) -> np.ndarray:
    n = cfg.n_steps
    t = cfg.dt * np.arange(n + 1, dtype=float)
    t[-1] = cfg.horizon
    return t


@dataclass
class Trajectory:
    times: np.ndarray
    values: np.ndarray
    jump_times: np.ndarray
    jump_sizes: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return all(
            np.array_equal(a, b)
            for a, b in zip(
                (self.times, self.values, self.jump_times, self.jump_sizes),
                (other.times, other.values, other.jump_times, other.jump_sizes),
            )
        )

    @property
    def jump_total(self) -> float:
        return float(self.jump_sizes.sum())

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["s", "x"])
            for s, x in zip(self.times, self.values):
                w.writerow([repr(float(s)), repr(float(x))])

    def jumps_to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t_k", "j_k"])
            for t, js in zip(self.jump_times, self.jump_sizes):
                w.writerow([repr(float(t)), repr(float(js))])


@dataclass
class _Draws:
    dw: np.ndarray  # (n_paths, n_steps)
    jump_incr: np.ndarray  # (n_paths, n_steps), jumps landing in (s_i, s_{i+1}]
    jump_times: list
    jump_sizes: list


def _draw(j: JumpSpec, cfg: SimConfig, times: np.ndarray, indices: Sequence[int]) -> _Draws:
    n_steps = len(times) - 1
    sqrt_dt = np.sqrt(np.diff(times))
    dw = np.empty((len(indices), n_steps))
    jinc = np.zeros((len(indices), n_steps))
    jt, js = [], []
    for row, idx in enumerate(indices):
        rng = path_rng(cfg.seed, idx)
        t_k, j_k = sample_jumps(j, cfg.horizon, rng)
        dw[row] = rng.standard_normal(n_steps) * sqrt_dt
        if len(t_k):
            # first grid point >= T_k; a jump exactly at 0 lands on the first step
            step = np.clip(np.searchsorted(times, t_k, side="left"), 1, n_steps) - 1
            np.add.at(jinc[row], step, j_k)
        jt.append(t_k)
        js.append(j_k)
    return _Draws(dw, jinc, jt, js)


def _euler(p: ModelParams, policy: Policy, cfg: SimConfig, times: np.ndarray, d: _Draws, x0: float) -> np.ndarray:
    n_paths, n_steps = d.dw.shape
    out = np.empty((n_paths, n_steps + 1))
    out[:, 0] = x0
    dt = np.diff(times)
    reflect = cfg.negativity_scheme is NegativityScheme.REFLECTION
    x = out[:, 0].copy()
    with np.errstate(all="ignore"):
        for i in range(n_steps):
            xa = np.abs(x) if reflect else x
            m = np.asarray(policy(times[i], xa), dtype=float)
            diff_arg = xa if reflect else np.maximum(x, 0.0)
            x = xa + drift(p, xa, m) * dt[i] + p.sigma * np.sqrt(diff_arg) * d.dw[:, i] + d.jump_incr[:, i]
            if reflect:
                x = np.abs(x)
            out[:, i + 1] = x
    return out


def _check_finite(values: np.ndarray, indices: Sequence[int]) -> None:
    bad = ~np.isfinite(values)
    if bad.any():
        row = int(np.argmax(bad.any(axis=1)))
        step = int(np.argmax(bad[row]))
        raise NonFinitePath(int(indices[row]), step)


def _simulate_block(p, j, policy, cfg, times, indices):
    d = _draw(j, cfg, times, indices)
    values = _euler(p, policy, cfg, times, d, cfg.start(p))
    _check_finite(values, indices)
    return values, d


def simulate_path(p: ModelParams, j: JumpSpec, policy: Policy | None, cfg: SimConfig, path_index: int = 0) -> Trajectory:
    times = time_grid(cfg)
    values, d = _simulate_block(p, j, policy or zero_policy, cfg, times, [path_index])
    return Trajectory(times, values[0], d.jump_times[0], d.jump_sizes[0])


def _blocks(n_paths: int, block: int) -> list[range]:
    return [range(a, min(a + block, n_paths)) for a in range(0, n_paths, block)]


def _run_blocks(fn, n_paths, workers, block):
    blocks = _blocks(n_paths, block)
    if workers <= 1 or len(blocks) == 1:
        return [fn(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, blocks))


def simulate_ensemble(p: ModelParams, j: JumpSpec, policy: Policy | None, cfg: SimConfig, workers: int = 1,
                      block: int = BLOCK_SIZE) -> list[Trajectory]:
    times = time_grid(cfg)
    policy = policy or zero_policy

    def run(idx):
        values, d = _simulate_block(p, j, policy, cfg, times, idx)
        return [Trajectory(times, values[r], d.jump_times[r], d.jump_sizes[r]) for r in range(len(idx))]

    out: list[Trajectory] = []
    for chunk in _run_blocks(run, cfg.n_paths, workers, block):
        out.extend(chunk)
    return out


@dataclass
class EnsembleArrays:
    """Compact ensemble: states on a (possibly thinned) grid plus per-path jump totals."""

    times: np.ndarray
    values: np.ndarray  # (n_paths, len(times))
    jump_sum: np.ndarray
    jump_count: np.ndarray

    @property
    def terminal(self) -> np.ndarray:
        return self.values[:, -1]


def simulate_arrays(p: ModelParams, j: JumpSpec, policy: Policy | None, cfg: SimConfig, workers: int = 1,
                    record_every: int = 1, block: int = BLOCK_SIZE) -> EnsembleArrays:
    """Array-level ensemble used by the validation checks and the CLI summary mode.

    Only every ``record_every``-th grid point (always including the last) is kept.
    """
    times = time_grid(cfg)
    keep = np.arange(0, len(times), record_every)
    if keep[-1] != len(times) - 1:
        keep = np.append(keep, len(times) - 1)
    policy = policy or zero_policy

    def run(idx):
        values, d = _simulate_block(p, j, policy, cfg, times, idx)
        sums = np.array([s.sum() for s in d.jump_sizes])
        counts = np.array([len(s) for s in d.jump_sizes])
        return values[:, keep], sums, counts

    parts = _run_blocks(run, cfg.n_paths, workers, block)
    return EnsembleArrays(
        times[keep],
        np.concatenate([v for v, _, _ in parts]),
        np.concatenate([s for _, s, _ in parts]),
        np.concatenate([c for _, _, c in parts]),
    )


def picard_iterates(p: ModelParams, j: JumpSpec, policy: Policy | None, cfg: SimConfig, k_max: int = 50,
                    tol: float = 1e-10, path_index: int = 0, return_path: bool = False):
    """Sup-distances between successive Picard iterates on one path's fixed draws.

    X^(0) is the constant initial state and

        X^(k+1)_i = x0 + sum_{l<i} [drift(X^(k)_l) dt_l + sigma sqrt(X^(k)_l+) dW_l + J_l].

    Stops once a distance drops below ``tol``. With ``return_path`` the last
    iterate is returned alongside the distances.
    """
    if k_max < 2:
        raise ValueError("k_max must be >= 2")
    policy = policy or zero_policy
    times = time_grid(cfg)
    d = _draw(j, cfg, times, [path_index])
    dw, jinc, dt = d.dw[0], d.jump_incr[0], np.diff(times)
    x0 = cfg.start(p)
    x = np.full(len(times), x0)
    dists: list[float] = []
    rises = 0
    for _ in range(k_max):
        xl = x[:-1]
        m = np.asarray(policy(times[:-1], xl), dtype=float) * np.ones_like(xl)
        incr = drift(p, xl, m) * dt + p.sigma * np.sqrt(np.maximum(xl, 0.0)) * dw + jinc
        nxt = np.empty_like(x)
        nxt[0] = x0
        nxt[1:] = x0 + np.cumsum(incr)
        dist = float(np.max(np.abs(nxt - x)))
        if not math.isfinite(dist):
            raise NonFinitePath(path_index)
        if dists and dist > dists[-1]:
            rises += 1
            if rises >= 3:
                raise NoContraction(f"Picard distance increased 3 times in a row: {dists[-3:] + [dist]}")
        else:
            rises = 0
        dists.append(dist)
        x = nxt
        if dist < tol:
            break
    return (dists, x) if return_path else dists


def integrating_factor_residual(traj: Trajectory, p: ModelParams, policy: Policy | None = None) -> np.ndarray:
    """log X(s) minus the integrating-factor path representation evaluated on ``traj``.

    The representation is

        exp(-theta s) [exp(theta s0) ln X(s0) + int e^{theta r} (theta u + m^2)/X dr
                       + int e^{theta r} sigma/sqrt(X) dW + int e^{theta r} S(r)/X dr]

    with S(r) the running jump sum. ds-integrals use the trapezoid rule and the
    dW-integral a left-point sum; sigma dW is recovered from the path as the
    increment left after removing drift and jumps.
    """
    x = np.asarray(traj.values, dtype=float)
    s = np.asarray(traj.times, dtype=float)
    if np.any(x <= 0):
        raise NonPositiveState("integrating-factor representation needs X > 0 on the whole path")
    policy = policy or zero_policy
    th = p.theta_tilde
    m = np.asarray(policy(s, x), dtype=float) * np.ones_like(x)
    e = np.exp(th * s)
    dt = np.diff(s)

    step = np.clip(np.searchsorted(s, traj.jump_times, side="left"), 1, len(s) - 1) - 1
    jinc = np.zeros(len(s) - 1)
    np.add.at(jinc, step, traj.jump_sizes)
    running = np.concatenate([[0.0], np.cumsum(jinc)])

    def cumtrap(f):
        return np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * dt)])

    a = cumtrap(e * (th * p.u + m * m) / x)
    noise = np.diff(x) - drift(p, x[:-1], m[:-1]) * dt - jinc  # sigma sqrt(X) dW
    b = np.concatenate([[0.0], np.cumsum(e[:-1] * noise / x[:-1])])
    c = cumtrap(e * running / x)
    rep = np.exp(-th * s) * (e[0] * np.log(x[0]) + a + b + c)
    return np.log(x) - rep
