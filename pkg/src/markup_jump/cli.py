"""``markup-jump`` command line: simulate, table1, curve, validate, table2, estimate and replay.

Every command writes its outputs plus ``manifest.json`` (a RunManifest) into ``--out``.
``markup-jump replay manifest.json --out other/`` reruns the recorded configuration and
produces byte-identical files. Exit codes: 0 success, 1 runtime or check failure,
2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import csv
import datetime as dt
import hashlib
import json
import math
import sys
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .control import LambdaMode, LambdaSpec, MStarForm, control_curve
from .errors import ConfigError, MarkupError
from .estimation import estimate_all
from .market import AlignPolicy, Summary, align, deviation_series, firm_report, load_csv
from .params import ModelParams, run_config_from_dict, to_jsonable
from .sde import simulate_arrays, simulate_ensemble
from .tables import (DEFAULT_S, DEFAULT_U, FIGURE_PARAMS, PROBE_X, TABLE2_ROWS, TABLE2_TARGETS, setups,
                     strictly_decreasing, table1)
from .validation import run_suite

MANIFEST = "manifest.json"
PATH_MODE_MAX = 10  # ``--mode auto`` writes per-path files up to this many paths


class CommandFailed(Exception):
    """Outputs were written but the command should exit 1."""


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(to_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n",
                    encoding="utf-8")


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _lambda(cfg: dict) -> LambdaSpec:
    mode = LambdaMode(cfg["lambda_mode"])
    if mode is LambdaMode.ZERO:
        return LambdaSpec.zero()
    if mode is LambdaMode.CONSTANT:
        return LambdaSpec.constant(cfg["dlambda"], cfg["dlambda_ds"])
    raise ConfigError("tabulated lambda is only available through the Python API")


# ---------------------------------------------------------------- runners
# Each runner takes the fully resolved configuration (exactly what the manifest stores)
# and returns the list of files it wrote.

def run_simulate(cfg: dict, out: Path, workers: int) -> list[str]:
    rc = run_config_from_dict(cfg["run"])
    mode = cfg["mode"]
    if mode == "auto":
        mode = "paths" if rc.sim.n_paths <= PATH_MODE_MAX else "summary"
    if mode == "paths":
        files = []
        width = max(5, len(str(rc.sim.n_paths - 1)))
        for i, traj in enumerate(simulate_ensemble(rc.model, rc.jumps, rc.policy, rc.sim, workers=workers)):
            name = f"path_{i:0{width}d}.csv"
            traj.to_csv(out / name)
            files.append(name)
            if cfg["write_jumps"]:
                jname = f"jumps_{i:0{width}d}.csv"
                traj.jumps_to_csv(out / jname)
                files.append(jname)
        return files
    ens = simulate_arrays(rc.model, rc.jumps, rc.policy, rc.sim, workers=workers, record_every=cfg["record_every"])
    mean = ens.values.mean(axis=0)
    q05, q95 = np.quantile(ens.values, [0.05, 0.95], axis=0)
    _write_csv(out / "summary.csv", ["s", "mean", "q05", "q95"],
               zip(ens.times.tolist(), mean.tolist(), q05.tolist(), q95.tolist()))
    return ["summary.csv"]


def run_table1(cfg: dict, out: Path, workers: int) -> list[str]:
    rows = table1(_lambda(cfg), cfg["s"], cfg["x"], cfg["u"], cfg["m_form"])
    _write_csv(out / "table1.csv",
               ["model", "m_tilde", "m_star", "target", "delta", "s", "lambda_mode", "x", "error"],
               [(r.model, r.m_tilde, r.m_star, r.target, r.delta, cfg["s"], cfg["lambda_mode"], cfg["x"], r.error)
                for r in rows])
    failed = [r for r in rows if r.error]
    if failed:
        raise CommandFailed("; ".join(f"{r.model}: {r.error}" for r in failed))
    return ["table1.csv"]


def run_curve(cfg: dict, out: Path, workers: int) -> list[str]:
    p = ModelParams(**cfg["params"])
    if cfg["grid"] < 2:
        raise ConfigError("--grid must be >= 2")
    grid = np.linspace(cfg["x_min"], cfg["x_max"], cfg["grid"])
    rows = control_curve(p, _lambda(cfg), cfg["s"], grid, cfg["m_form"])
    _write_csv(out / "curve.csv", ["x", "m_star", "m_tilde"], rows)
    _write_json(out / "curve.json", {"params": cfg["params"], "lambda": _lambda(cfg).to_dict(), "s": cfg["s"],
                                     "m_form": cfg["m_form"], "grid": cfg["grid"],
                                     "x_range": [cfg["x_min"], cfg["x_max"]]})
    return ["curve.csv", "curve.json"]


def _inject(results, overrides: dict[str, float]):
    unknown = set(overrides) - {r.name for r in results}
    if unknown:
        raise ConfigError(f"--inject-target names no check in this suite: {sorted(unknown)}")
    for r in results:
        if r.name in overrides:
            r.target = overrides[r.name]
            r.passed = bool(abs(r.statistic - r.target) <= r.tolerance)
    return results


def run_validate(cfg: dict, out: Path, workers: int) -> list[str]:
    results = _inject(run_suite(cfg["suite"], cfg["seed"], cfg["quick"]), cfg["inject_target"])
    _write_json(out / "report.json", {"suite": cfg["suite"], "seed": cfg["seed"], "quick": cfg["quick"],
                                      "all_passed": all(r.passed for r in results),
                                      "checks": [r.to_dict() for r in results]})
    failed = [r.name for r in results if not r.passed]
    if failed:
        raise CommandFailed(f"failed checks: {', '.join(failed)}")
    return ["report.json"]


def run_table2(cfg: dict, out: Path, workers: int) -> list[str]:
    cpi_path = Path(cfg["cpi"])
    if not cpi_path.is_file():
        raise ConfigError(f"CPI file not found: {cpi_path}")
    prices = Path(cfg["prices"])
    if not prices.is_dir():
        raise ConfigError(f"prices directory not found: {prices}")
    files = sorted(prices.glob("*.csv"))
    if not files:
        raise ConfigError(f"no *.csv files in {prices}")
    cpi = load_csv(cpi_path)
    models = setups(TABLE2_ROWS, _lambda(cfg), cfg["s"], cfg["u"], cfg["m_form"])
    rows, errors, meta = [], {}, {}
    for f in files:
        firm = f.stem
        try:
            dev = deviation_series(align(cpi, load_csv(f), cfg["align"]), cfg["base_date"])
            firm_rows = firm_report(dev, models, firm, cfg["summary"], cfg["x_probe"])
        except (MarkupError, OSError) as exc:
            errors[firm] = f"{type(exc).__name__}: {exc}"
            continue
        rows += firm_rows
        meta[firm] = {"n_obs": len(dev.x_tilde), "base_date": str(dev.base_date),
                      "mean_x": float(np.mean(dev.x_tilde)), "median_x": float(np.median(dev.x_tilde)),
                      "ordered": strictly_decreasing([r.m_tilde for r in firm_rows])}
    _write_csv(out / "table2.csv", ["firm", "model", "m_tilde", "x_input", "s", "lambda_mode"],
               [(r.firm, r.model, r.m_tilde, r.x_input, r.s, r.lambda_mode) for r in rows])
    targets = {k.lower(): v for k, v in TABLE2_TARGETS.items()}
    deltas = {r.firm: {} for r in rows}
    for r in rows:
        t = targets.get(r.firm.lower(), {}).get(r.model)
        deltas[r.firm][r.model] = None if t is None else r.m_tilde - t
    _write_json(out / "table2.json", {
        "models": {name: st.params for name, st in models}, "lambda": _lambda(cfg).to_dict(),
        "s": cfg["s"], "m_form": cfg["m_form"], "summary": cfg["summary"], "x_probe": cfg["x_probe"],
        "base_date": cfg["base_date"], "align": cfg["align"], "firms": meta,
        "deltas_vs_published": deltas, "errors": errors,
        "m_star": {f"{r.firm}/{r.model}": r.m_star for r in rows}})
    if errors:
        raise CommandFailed("; ".join(f"{k}: {v}" for k, v in errors.items()))
    return ["table2.csv", "table2.json"]


def _read_series(path: Path, periods_per_year: float):
    """``s,x`` / ``t,x`` numeric files keep their times; ``date,value`` files use observation index / periods."""
    if not path.is_file():
        raise ConfigError(f"input file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        header = [h.strip() for h in fh.readline().split(",")]
    if header[:2] in (["s", "x"], ["t", "x"]):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return data[:, :2]
    obs = load_csv(path)
    x = np.array([o.value for o in obs])
    return np.column_stack([np.arange(len(x)) / periods_per_year, x])


def run_estimate(cfg: dict, out: Path, workers: int) -> list[str]:
    series = _read_series(Path(cfg["input"]), cfg["periods_per_year"])
    theta = None if cfg["theta"] == "fit" else float(cfg["theta"])
    rep = estimate_all(series, theta, cfg["jump_k"], cfg["jump_window"])
    _write_json(out / "estimate.json", {**rep.to_dict(), "theta_source": "fit" if theta is None else "known"})
    return ["estimate.json"]


RUNNERS: dict[str, Callable[[dict, Path, int], list[str]]] = {
    "simulate": run_simulate, "table1": run_table1, "curve": run_curve,
    "validate": run_validate, "table2": run_table2, "estimate": run_estimate,
}


def execute(subcommand: str, cfg: dict, out: Path, workers: int = 1, seed: int | None = None) -> int:
    """Run one resolved configuration and write the manifest. Returns the exit code."""
    out.mkdir(parents=True, exist_ok=True)
    code, message, files = 0, "", []
    try:
        files = RUNNERS[subcommand](cfg, out, workers)
    except CommandFailed as exc:
        code, message = 1, str(exc)
    manifest = {"subcommand": subcommand, "config": cfg, "seed": seed, "tool_version": __version__,
                "outputs": sorted(p.name for p in out.iterdir() if p.name != MANIFEST) if code else files}
    manifest["sha256"] = {f: _sha256(out / f) for f in manifest["outputs"]}
    _write_json(out / MANIFEST, manifest)
    if message:
        print(f"error: {message}", file=sys.stderr)
    return code


# ---------------------------------------------------------------- argument parsing

def _lambda_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lambda-mode", choices=["Zero", "Constant"], default="Zero",
                   help="lambda specification; Constant uses --dlambda/--dlambda-ds (default: %(default)s)")
    p.add_argument("--dlambda", type=float, default=0.0, help="constant dlambda (default: %(default)s)")
    p.add_argument("--dlambda-ds", type=float, default=0.0, help="constant dlambda/ds (default: %(default)s)")
    p.add_argument("--s", type=float, default=DEFAULT_S, help="evaluation time s (default: %(default)s)")
    p.add_argument("--m-form", choices=[f.value for f in MStarForm], default=MStarForm.STATIONARY.value,
                   help="'stationary' solves the first-order condition; 'printed' is the published closed form "
                        "(default: %(default)s)")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", type=Path, required=True, help="output directory (created if missing)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="markup-jump", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("simulate", help="simulate trajectories from a JSON config", formatter_class=fmt)
    p.add_argument("config", type=Path, help="JSON config with model/jumps/sim/policy sections")
    _common(p)
    p.add_argument("--mode", choices=["auto", "paths", "summary"], default="auto",
                   help=f"per-path CSVs (s,x) or one summary CSV (s,mean,q05,q95); auto picks paths "
                        f"for at most {PATH_MODE_MAX} paths")
    p.add_argument("--record-every", type=int, default=1, help="summary mode: keep every k-th grid point")
    p.add_argument("--write-jumps", action="store_true", help="paths mode: also write jumps_<i>.csv (t_k,j_k)")
    p.add_argument("--workers", type=int, default=1, help="worker threads (outputs do not depend on this)")

    p = sub.add_parser("table1", help="m~ for the three simulated-data models", formatter_class=fmt)
    _common(p)
    _lambda_flags(p)
    p.add_argument("--x", type=float, default=PROBE_X, help="probe deviation x")
    p.add_argument("--u", type=float, default=DEFAULT_U, help="long-run mean u (not given in the table)")

    p = sub.add_parser("curve", help="x -> (m*, m~) curve", formatter_class=fmt)
    _common(p)
    _lambda_flags(p)
    p.add_argument("--params", type=Path, default=None,
                   help="JSON object of model parameters; default is the figure's set "
                        f"{FIGURE_PARAMS} with u={DEFAULT_U}")
    p.add_argument("--grid", type=int, default=100, help="number of grid points (>= 2)")
    p.add_argument("--x-min", type=float, default=0.0, help="left end of the x grid")
    p.add_argument("--x-max", type=float, default=1.0, help="right end of the x grid")

    p = sub.add_parser("validate", help="Monte Carlo validation suite", formatter_class=fmt)
    _common(p)
    p.add_argument("--suite", choices=["all", "martingale", "jumps", "stationary", "lyapunov", "doob"],
                   default="all", help="which checks to run")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--quick", action="store_true", help="minimum sample sizes (10^4) for a fast smoke run")
    p.add_argument("--inject-target", action="append", default=[], metavar="NAME=VALUE",
                   help="override the target of a named check (harness self-test); repeatable")
    p.add_argument("--workers", type=int, default=1, help="accepted for symmetry; the suite runs in one thread")

    p = sub.add_parser("table2", help="per-firm m~ from CPI and price CSVs", formatter_class=fmt)
    _common(p)
    _lambda_flags(p)
    p.add_argument("--cpi", type=Path, required=True, help="CPI CSV (date,value)")
    p.add_argument("--prices", type=Path, required=True, help="directory of <firm>.csv price files (date,value)")
    p.add_argument("--base-date", default=None, help="ISO rebasing date; default is the first aligned date")
    p.add_argument("--align", choices=[a.value for a in AlignPolicy], default=AlignPolicy.FORWARD_FILL_CPI.value,
                   help="date alignment policy")
    p.add_argument("--summary", choices=[s.value for s in Summary], default=Summary.MEAN.value,
                   help="scalar fed to the control law: sample mean of x~, or the fixed --x-probe")
    p.add_argument("--x-probe", type=float, default=PROBE_X, help="x used when --summary probe")
    p.add_argument("--u", type=float, default=DEFAULT_U, help="long-run mean u")

    p = sub.add_parser("estimate", help="estimate u, theta, sigma and jump moments from a series",
                       formatter_class=fmt)
    _common(p)
    p.add_argument("--input", type=Path, required=True,
                   help="CSV with header s,x (numeric times) or date,value (times = index / --periods-per-year)")
    p.add_argument("--theta", default="fit", help="'fit' or a known mean-reversion rate")
    p.add_argument("--jump-k", type=float, default=4.0, help="jump threshold in robust standard deviations")
    p.add_argument("--jump-window", type=int, default=21, help="rolling MAD window for jump detection")
    p.add_argument("--periods-per-year", type=float, default=252.0, help="sampling rate for date,value input")

    p = sub.add_parser("replay", help="rerun a manifest into a new directory", formatter_class=fmt)
    p.add_argument("manifest", type=Path, help="manifest.json written by an earlier run")
    _common(p)
    p.add_argument("--workers", type=int, default=1, help="worker threads (outputs do not depend on this)")
    return ap


def _abs(p: Path | None) -> str | None:
    return None if p is None else str(p.resolve())


def resolve(args: argparse.Namespace) -> tuple[dict, int | None]:
    """argparse namespace -> (resolved config, seed)."""
    c = args.command
    lam = {}
    if c in ("table1", "curve", "table2"):
        lam = {"lambda_mode": args.lambda_mode, "dlambda": args.dlambda, "dlambda_ds": args.dlambda_ds,
               "s": args.s, "m_form": args.m_form}
        if args.lambda_mode == "Zero" and (args.dlambda or args.dlambda_ds):
            raise ConfigError("--dlambda/--dlambda-ds need --lambda-mode Constant")
    if c == "simulate":
        try:
            doc = json.loads(args.config.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        rc = run_config_from_dict(doc)
        if args.record_every < 1:
            raise ConfigError("--record-every must be >= 1")
        return {"run": rc.to_dict(), "mode": args.mode, "record_every": args.record_every,
                "write_jumps": args.write_jumps}, rc.sim.seed
    if c == "table1":
        return {**lam, "x": args.x, "u": args.u}, None
    if c == "curve":
        if args.params is None:
            params = {**FIGURE_PARAMS, "u": DEFAULT_U}
        else:
            try:
                params = json.loads(args.params.read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read params {args.params}: {exc}") from exc
        try:
            params = to_jsonable(ModelParams(**params))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad model parameters: {exc}") from exc
        return {**lam, "params": params, "grid": args.grid, "x_min": args.x_min, "x_max": args.x_max}, None
    if c == "validate":
        inject = {}
        for item in args.inject_target:
            name, sep, val = item.partition("=")
            if not sep:
                raise ConfigError(f"--inject-target expects NAME=VALUE, got {item!r}")
            inject[name] = float(val)
        return {"suite": args.suite, "seed": args.seed, "quick": args.quick, "inject_target": inject}, args.seed
    if c == "table2":
        if args.base_date is not None:
            try:
                dt.date.fromisoformat(args.base_date)
            except ValueError as exc:
                raise ConfigError(f"bad --base-date: {exc}") from exc
        return {**lam, "cpi": _abs(args.cpi), "prices": _abs(args.prices), "base_date": args.base_date,
                "align": args.align, "summary": args.summary, "x_probe": args.x_probe, "u": args.u}, None
    if c == "estimate":
        if args.theta != "fit":
            try:
                th = float(args.theta)
            except ValueError:
                raise ConfigError("--theta must be 'fit' or a number") from None
            if not math.isfinite(th) or th <= 0:
                raise ConfigError("--theta must be > 0")
        return {"input": _abs(args.input), "theta": args.theta, "jump_k": args.jump_k,
                "jump_window": args.jump_window, "periods_per_year": args.periods_per_year}, None
    raise ConfigError(f"unknown command {c}")  # pragma: no cover


# usage/config errors (exit 2) vs runtime errors (exit 1)
def _exit_code(exc: BaseException) -> int:
    return 2 if isinstance(exc, (ConfigError, ValueError, OSError, KeyError)) else 1


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "replay":
            try:
                m = json.loads(args.manifest.read_text(encoding="utf-8"))
                sub, cfg, seed = m["subcommand"], m["config"], m.get("seed")
            except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ConfigError(f"bad manifest {args.manifest}: {exc}") from exc
            if sub not in RUNNERS:
                raise ConfigError(f"unknown subcommand in manifest: {sub!r}")
            return execute(sub, cfg, args.out, args.workers, seed)
        cfg, seed = resolve(args)
        return execute(args.command, cfg, args.out, getattr(args, "workers", 1), seed)
    except (MarkupError, ValueError, OSError, KeyError, ZeroDivisionError, FloatingPointError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
