"""Estimator recovery: coverage of estimate +/- 2 SE over simulated replications.

    python3 scripts/recovery_study.py [--reps 200] [--seed 11] [--out results/recovery.json]
"""
from __future__ import annotations

import argparse
import json
import time
from dataclasses import asdict
from pathlib import Path

from markup_jump.studies import recovery_study


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--reps", type=int, default=200)
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--jump-k", type=float, default=5.0)
    ap.add_argument("--jump-window", type=int, default=101)
    ap.add_argument("--out", type=Path, default=Path("results/recovery.json"))
    args = ap.parse_args(argv)
    t0 = time.perf_counter()
    res = recovery_study(args.reps, args.seed, jump_k=args.jump_k, jump_window=args.jump_window)
    elapsed = time.perf_counter() - t0
    for k in res.truth:
        print(f"{k:8s} truth={res.truth[k]:<6g} coverage={res.coverage[k]:.3f} "
              f"z mean={res.mean_z[k]:+.2f} sd={res.sd_z[k]:.2f}")
    print(f"{elapsed:.1f} s")
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(json.dumps(asdict(res), indent=2) + "\n")


if __name__ == "__main__":
    main()
