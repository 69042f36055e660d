"""Regenerate the bundled synthetic CPI / firm price fixtures (2022-2023).

The series are synthetic but shaped like the period: monthly CPI rising about
6% a year and four daily price series that lag CPI, so every firm's deviation
x~ = (Z - Zhat) / Z is mostly positive. Palmolive gets the largest and most
dispersed gap.

    python3 scripts/make_fixtures.py [--out src/markup_jump/data]
"""
from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np
import pandas as pd

FIRMS = {
    # name: (start price, final gap to CPI, gap volatility per sqrt(year))
    "nestle": (110.0, 0.06, 0.02),
    "westrock": (40.0, 0.10, 0.03),
    "dover": (160.0, 0.08, 0.025),
    "palmolive": (80.0, 0.22, 0.08),
}


def make(out: Path, seed: int = 20222023) -> None:
    rng = np.random.default_rng(seed)
    months = pd.date_range("2022-01-01", "2023-12-01", freq="MS")
    t_m = np.arange(len(months)) / 12.0
    cpi = 281.1 * np.exp(0.06 * t_m + rng.normal(0, 0.002, len(months)).cumsum())
    out.mkdir(parents=True, exist_ok=True)
    (out / "prices").mkdir(exist_ok=True)
    pd.DataFrame({"date": months.strftime("%Y-%m-%d"), "value": np.round(cpi, 3)}).to_csv(
        out / "cpi.csv", index=False)

    days = pd.bdate_range("2022-01-03", "2023-12-29")
    t_d = (days - days[0]).days.to_numpy() / 365.25
    cpi_daily = pd.Series(cpi, index=months).reindex(days, method="ffill").to_numpy()
    dt = np.diff(t_d, prepend=0.0)
    for name, (p0, gap, vol) in FIRMS.items():
        # gap trends up from 30% of its final level plus mean-reverting noise (OU, rate 4/yr)
        noise = np.zeros(len(days))
        for i in range(1, len(days)):
            noise[i] = noise[i - 1] * (1 - 4.0 * dt[i]) + vol * np.sqrt(8.0 * dt[i]) * rng.normal()
        x = gap * (0.3 + 0.7 * t_d / t_d[-1]) + noise
        x[0] = 0.0  # rebasing date
        price = p0 * (cpi_daily / cpi_daily[0]) * (1.0 - x)
        pd.DataFrame({"date": days.strftime("%Y-%m-%d"), "value": np.round(price, 4)}).to_csv(
            out / "prices" / f"{name}.csv", index=False)


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", type=Path, default=Path(__file__).resolve().parents[1] / "src" / "markup_jump" / "data")
    ap.add_argument("--seed", type=int, default=20222023)
    args = ap.parse_args(argv)
    make(args.out, args.seed)


if __name__ == "__main__":
    main()
