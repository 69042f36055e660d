"""Deterministic-limit dt sweep: max |X - (u + (x0 - u) e^{-theta t})| over [0, 5] and the log-log slope.

    python3 scripts/convergence.py [--out results/convergence.csv]
"""
from __future__ import annotations

import argparse
import csv
from pathlib import Path

import numpy as np

from markup_jump import NO_JUMPS, ModelParams, SimConfig, simulate_path

DTS = (1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4)


def sweep(theta=1.0, u=1.0, x0=0.2, horizon=5.0, dts=DTS):
    p = ModelParams(theta_tilde=theta, u=u, sigma=0.0, rho=0.0, xi=1.0, phi=0.0, c0=1.0)
    errs = []
    for dt in dts:
        tr = simulate_path(p, NO_JUMPS, None, SimConfig(dt=dt, horizon=horizon, x0=x0))
        exact = u + (x0 - u) * np.exp(-theta * tr.times)
        errs.append(float(np.max(np.abs(tr.values - exact))))
    slope = float(np.polyfit(np.log(dts), np.log(errs), 1)[0])
    return list(dts), errs, slope


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", type=Path, default=Path("results/convergence.csv"))
    args = ap.parse_args(argv)
    dts, errs, slope = sweep()
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["dt", "max_abs_error", "error_over_dt"])
        for d, e in zip(dts, errs):
            w.writerow([d, e, e / d])
    for d, e in zip(dts, errs):
        print(f"dt={d:<8g} max err={e:.3e}  err/dt={e / d:.3f}")
    print(f"slope {slope:.3f}")


if __name__ == "__main__":
    main()
