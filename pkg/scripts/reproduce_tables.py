"""Regenerate the table and figure data through the CLI, one output directory each.

    python3 scripts/reproduce_tables.py [--out results]
"""
from __future__ import annotations

import argparse
import csv
from importlib.resources import files
from pathlib import Path

from markup_jump.cli import main as cli


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", type=Path, default=Path("results"))
    args = ap.parse_args(argv)
    data = files("markup_jump") / "data"
    runs = {
        "table1": ["table1"],
        "table1_s1": ["table1", "--s", "1.0"],
        "table1_printed": ["table1", "--m-form", "printed"],
        "curve": ["curve"],
        "table2": ["table2", "--cpi", str(data / "cpi.csv"), "--prices", str(data / "prices")],
        "table2_probe": ["table2", "--cpi", str(data / "cpi.csv"), "--prices", str(data / "prices"),
                         "--summary", "probe"],
    }
    for name, argv_ in runs.items():
        out = args.out / name
        code = cli(argv_ + ["--out", str(out)])
        print(f"== {name} (exit {code})")
        for f in sorted(out.glob("*.csv")):
            if f.name == "curve.csv":
                continue
            with open(f) as fh:
                for row in csv.reader(fh):
                    print("   ", ",".join(row))


if __name__ == "__main__":
    main()
