"""CPI / firm price ingestion and the per-firm control table."""
from __future__ import annotations

import csv
import datetime as dt
import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .control import ControlSetup, evaluate
from .errors import (BaseDateMissing, DuplicateDate, EmptyFile, NonPositiveBase, NoOverlap, ParseError,
                     SingularDenominator, ZeroState)
from .estimation import SeriesObservation

# Synthetic 2022-2023 fixtures: cpi.csv (monthly) and prices/<firm>.csv (business days).
BUNDLED_DATA = Path(__file__).parent / "data"


@dataclass(frozen=True)
class CsvSchema:
    date_column: str = "date"
    value_column: str = "value"
    date_format: str = "%Y-%m-%d"


def load_csv(path: str | Path, schema: CsvSchema = CsvSchema()) -> list[SeriesObservation]:
    """Read a ``date,value`` file into observations sorted by date.

    Row numbers in errors are file line numbers (the header is line 1).
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyFile(f"{path} is empty")
        header = [h.strip() for h in header]
        try:
            di, vi = header.index(schema.date_column), header.index(schema.value_column)
        except ValueError as exc:
            raise ParseError(1, f"missing column in header {header}") from exc
        obs = []
        seen = set()
        for row_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                d = dt.datetime.strptime(row[di].strip(), schema.date_format).date()
                v = float(row[vi])
            except (ValueError, IndexError) as exc:
                raise ParseError(row_no, str(exc)) from exc
            if not math.isfinite(v):
                raise ParseError(row_no, f"non-finite value {row[vi]!r}")
            if d in seen:
                raise DuplicateDate(f"{path}: duplicate date {d.isoformat()} at row {row_no}")
            seen.add(d)
            obs.append(SeriesObservation(d, v))
    if not obs:
        raise EmptyFile(f"{path} has no data rows")
    obs.sort(key=lambda o: o.timestamp)
    return obs


class AlignPolicy(str, enum.Enum):
    INNER_JOIN = "InnerJoin"
    FORWARD_FILL_CPI = "ForwardFillCpi"


@dataclass(frozen=True)
class AlignedSeries:
    timestamps: tuple
    cpi_values: np.ndarray
    firm_values: np.ndarray

    def __len__(self):
        return len(self.timestamps)


def align(cpi: Sequence[SeriesObservation], firm: Sequence[SeriesObservation],
          policy: AlignPolicy | str = AlignPolicy.FORWARD_FILL_CPI) -> AlignedSeries:
    policy = AlignPolicy(policy)
    if not cpi or not firm:
        raise NoOverlap("both series must be non-empty")
    c_dates = [o.timestamp for o in cpi]
    f_dates = [o.timestamp for o in firm]
    if max(c_dates[0], f_dates[0]) > min(c_dates[-1], f_dates[-1]):
        raise NoOverlap(f"date ranges do not overlap: CPI {c_dates[0]}..{c_dates[-1]}, "
                        f"firm {f_dates[0]}..{f_dates[-1]}")
    if policy is AlignPolicy.INNER_JOIN:
        cmap = {o.timestamp: o.value for o in cpi}
        keep = [(o.timestamp, cmap[o.timestamp], o.value) for o in firm if o.timestamp in cmap]
    else:
        keep = []
        c_vals = [o.value for o in cpi]
        j = -1
        for o in firm:
            while j + 1 < len(c_dates) and c_dates[j + 1] <= o.timestamp:
                j += 1
            if j >= 0:
                keep.append((o.timestamp, c_vals[j], o.value))
    if not keep:
        raise NoOverlap("no common dates after alignment")
    ts, c, f = zip(*keep)
    return AlignedSeries(tuple(ts), np.array(c, dtype=float), np.array(f, dtype=float))


@dataclass(frozen=True)
class DeviationSeries:
    timestamps: tuple
    x_tilde: np.ndarray
    base_date: object
    normalization: str = "both series rebased to 1 at base_date; x = (Z - Zhat) / Z with Z = CPI"

    def times_in_years(self) -> np.ndarray:
        t0 = self.timestamps[0]
        if isinstance(t0, dt.date):
            return np.array([(t - t0).days / 365.25 for t in self.timestamps])
        return np.asarray(self.timestamps, dtype=float) - float(t0)


def deviation_series(a: AlignedSeries, base_date=None) -> DeviationSeries:
    """Percent deviation of the firm price from CPI after rebasing both to 1 at ``base_date``."""
    if base_date is None:
        base_date = a.timestamps[0]
    if isinstance(base_date, str):
        base_date = dt.date.fromisoformat(base_date)
    try:
        i = a.timestamps.index(base_date)
    except ValueError:
        raise BaseDateMissing(f"base date {base_date} not among aligned dates") from None
    c0, f0 = a.cpi_values[i], a.firm_values[i]
    if c0 <= 0 or f0 <= 0:
        raise NonPositiveBase("base values must be positive")
    z = a.cpi_values / c0
    zhat = a.firm_values / f0
    return DeviationSeries(a.timestamps, (z - zhat) / z, base_date)


class Summary(str, enum.Enum):
    MEAN = "mean"
    PROBE = "probe"


@dataclass(frozen=True)
class FirmRow:
    firm: str
    model: str
    m_tilde: float
    x_input: float
    s: float
    lambda_mode: str
    m_star: float
    summary: str


def summarize(dev: DeviationSeries, summary: Summary | str = Summary.MEAN, x_probe: float = 0.87) -> float:
    summary = Summary(summary)
    if len(dev.x_tilde) == 0:
        raise ValueError("empty deviation series")
    return float(np.mean(dev.x_tilde)) if summary is Summary.MEAN else float(x_probe)


def firm_report(dev: DeviationSeries, models: Sequence[tuple[str, ControlSetup]], firm: str = "",
                summary: Summary | str = Summary.MEAN, x_probe: float = 0.87) -> list[FirmRow]:
    """m~ for each model at one scalar summary of the deviation series."""
    x = summarize(dev, summary, x_probe)
    rows = []
    for k, (name, setup) in enumerate(models):
        try:
            ce = evaluate(setup, x)
        except SingularDenominator as exc:
            raise SingularDenominator(f"model {name}: {exc}", k) from exc
        except ZeroState as exc:
            raise ZeroState(f"model {k} ({name}): {exc}") from exc
        rows.append(FirmRow(firm, name, float(ce.m_tilde), x, setup.s, setup.lam.mode.value, float(ce.m_star),
                            Summary(summary).value))
    return rows
