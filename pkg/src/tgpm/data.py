"""Price/return panels: CSV and Kenneth French loaders, log returns, t sampler."""

from __future__ import annotations

import csv
import logging
import math
import re
from dataclasses import dataclass, field
from os import PathLike
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import stats

from .errors import (
    DimensionMismatch,
    InsufficientData,
    NonPositivePrice,
    ParseError,
    UnrecognizedLayout,
    UnsortedDates,
)
from .ldf import TStudentParams
from .numerics import cholesky

logger = logging.getLogger(__name__)

_MISSING = {"", "na", "nan", "null", "none", "-"}
_YYYYMMDD = re.compile(r"^\d{8}$")
_FF_ROW = re.compile(r"^\s*(\d{8})\s*,")
# Kenneth French files mark missing returns with -99.99 or -999.
_FF_SENTINEL = -99.99


def parse_date(text: str) -> np.datetime64:
    """Parse an ISO-8601 (``YYYY-MM-DD``) or ``YYYYMMDD`` date label."""
    s = text.strip()
    if _YYYYMMDD.match(s):
        s = f"{s[:4]}-{s[4:6]}-{s[6:]}"
    return np.datetime64(s, "D")


@dataclass(frozen=True)
class ReturnsMatrix:
    """A ``T x N`` panel of per-period decimal returns with date labels."""

    dates: NDArray[np.datetime64]
    assets: tuple[str, ...]
    values: NDArray[np.float64]
    meta: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        dates = np.asarray(self.dates).astype("datetime64[D]")
        assets = tuple(str(a) for a in self.assets)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise DimensionMismatch(f"values must be a non-empty 2-D array, got {values.shape}")
        if dates.shape != (values.shape[0],) or len(assets) != values.shape[1]:
            raise DimensionMismatch(
                f"{dates.shape[0]} dates and {len(assets)} assets for values of shape {values.shape}"
            )
        if dates.size > 1 and not np.all(np.diff(dates) > np.timedelta64(0, "D")):
            raise UnsortedDates("dates must be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise ValueError("panel contains non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "assets", assets)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __len__(self):
        return self.values.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def rows(self, start: int, stop: int) -> "ReturnsMatrix":
        return ReturnsMatrix(self.dates[start:stop], self.assets, self.values[start:stop])


class PricePanel(ReturnsMatrix):
    """Same layout as :class:`ReturnsMatrix`, holding strictly positive prices."""


def _read_generic(path, date_column: str, delimiter: str, positive: bool):
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("empty file", path=path) from None
        if date_column not in header:
            raise ParseError(f"no date column {date_column!r} in header", path=path, row=1)
        di = header.index(date_column)
        assets = [h for i, h in enumerate(header) if i != di]
        dates, rows, dropped = [], [], 0
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise ParseError(
                    f"expected {len(header)} fields, found {len(rec)}", path=path, row=lineno
                )
            try:
                date = parse_date(rec[di])
            except ValueError:
                raise ParseError(f"bad date {rec[di]!r}", path=path, row=lineno, column=date_column) from None
            vals, missing = [], False
            for i, cell in enumerate(rec):
                if i == di:
                    continue
                if cell.strip().lower() in _MISSING:
                    missing = True
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    raise ParseError(f"bad number {cell!r}", path=path, row=lineno, column=header[i]) from None
                if not math.isfinite(v):
                    missing = True
                elif positive and v <= 0:
                    raise NonPositivePrice(f"price {v!r} is not positive", path=path, row=lineno, column=header[i])
                vals.append(v)
            if missing:
                dropped += 1
                continue
            if dates and date <= dates[-1]:
                raise UnsortedDates(
                    f"date {rec[di].strip()} does not follow {dates[-1]}", path=path, row=lineno, column=date_column
                )
            dates.append(date)
            rows.append(vals)
    if dropped:
        logger.info("%s: dropped %d row(s) with missing values", path, dropped)
    if not rows:
        raise InsufficientData(f"{path}: no complete rows")
    return np.array(dates, dtype="datetime64[D]"), assets, np.array(rows, dtype=float), dropped


def load_price_csv(path: str | PathLike, date_column: str = "date", delimiter: str = ",") -> PricePanel:
    """Load a ``date,<asset1>,...`` price file.

    Rows with any missing price are dropped (count logged and stored in
    ``meta["dropped_rows"]``). Dates must be strictly increasing.
    """
    dates, assets, values, dropped = _read_generic(path, date_column, delimiter, positive=True)
    return PricePanel(dates, tuple(assets), values, meta={"dropped_rows": dropped})


def load_returns_csv(path: str | PathLike, date_column: str = "date", delimiter: str = ",") -> ReturnsMatrix:
    """Load a returns panel in the generic ``date,<asset1>,...`` layout."""
    dates, assets, values, dropped = _read_generic(path, date_column, delimiter, positive=False)
    return ReturnsMatrix(dates, tuple(assets), values, meta={"dropped_rows": dropped})


def format_float(x: float) -> str:
    return "%.17g" % x


def write_returns_csv(r: ReturnsMatrix, path: str | PathLike) -> None:
    """Write a panel in the generic layout with 17 significant digits."""
    with open(path, "w", newline="") as fh:
        fh.write(",".join(["date", *r.assets]) + "\n")
        for date, row in zip(r.dates, r.values):
            fh.write(str(date) + "," + ",".join(format_float(v) for v in row) + "\n")


def log_returns(prices: PricePanel | ReturnsMatrix) -> ReturnsMatrix:
    """``ln(P_t / P_{t-1})`` per asset; the first date is consumed."""
    p = np.asarray(prices, dtype=float)
    if p.shape[0] < 2:
        raise InsufficientData("need at least two price rows")
    if np.any(p <= 0):
        raise NonPositivePrice("prices must be positive")
    return ReturnsMatrix(prices.dates[1:], prices.assets, np.diff(np.log(p), axis=0))


def load_ff_industry(path: str | PathLike) -> ReturnsMatrix:
    """Load a Kenneth French daily industry-portfolio file.

    Only the first block of ``YYYYMMDD`` rows is read (later blocks hold other
    weightings or annual averages). Percent returns are divided by 100 and
    rows containing the -99.99 / -999 missing sentinels are dropped.
    """
    with open(path, newline="", encoding="latin-1") as fh:
        lines = fh.read().splitlines()
    start = next((i for i, ln in enumerate(lines) if _FF_ROW.match(ln)), None)
    if start is None:
        raise UnrecognizedLayout("no YYYYMMDD data block found", path=path)
    header_line = next((lines[j] for j in range(start - 1, -1, -1) if lines[j].strip()), "")
    header = [h.strip() for h in header_line.split(",")]
    if len(header) > 1 and not header[0]:
        assets = header[1:]
    else:
        assets = None

    dates, rows, dropped = [], [], 0
    i = start
    while i < len(lines) and _FF_ROW.match(lines[i]):
        cells = lines[i].split(",")
        lineno = i + 1
        try:
            date = parse_date(cells[0])
        except ValueError:
            raise ParseError(f"bad date {cells[0]!r}", path=path, row=lineno) from None
        try:
            vals = [float(c) for c in cells[1:] if c.strip()]
        except ValueError as exc:
            raise ParseError(str(exc), path=path, row=lineno) from None
        if assets is None:
            assets = [f"asset{k + 1}" for k in range(len(vals))]
        if len(vals) != len(assets):
            raise ParseError(f"expected {len(assets)} values, found {len(vals)}", path=path, row=lineno)
        i += 1
        if any(v <= _FF_SENTINEL for v in vals):
            dropped += 1
            continue
        if dates and date <= dates[-1]:
            raise UnsortedDates(f"date {cells[0]} out of order", path=path, row=lineno)
        dates.append(date)
        rows.append(vals)
    if dropped:
        logger.info("%s: dropped %d row(s) with missing-value sentinels", path, dropped)
    if not rows:
        raise UnrecognizedLayout("data block contains no usable rows", path=path)
    values = np.array(rows, dtype=float) / 100.0
    return ReturnsMatrix(np.array(dates, dtype="datetime64[D]"), tuple(assets), values, meta={"dropped_rows": dropped})


def synthetic_dates(n: int, start: str = "2000-01-03") -> NDArray[np.datetime64]:
    """``n`` consecutive business days starting at ``start``."""
    first = np.busday_offset(np.datetime64(start, "D"), 0, roll="forward")
    return np.busday_offset(first, np.arange(n))


def simulate_t(n: int, params: TStudentParams, seed: int, assets: Sequence[str] | None = None) -> ReturnsMatrix:
    """Draw ``n`` rows from the multivariate t with location ``mu`` and scatter ``sigma``.

    ``X = mu + Z * sqrt(nu / W)`` with ``Z ~ N(0, sigma)`` and ``W ~ chi2(nu)``,
    using NumPy's PCG64 generator seeded with ``seed``. Normals are drawn first
    (``n * d`` standard normals, row-major) and then ``n`` chi-square variates.
    """
    if n < 1:
        raise InsufficientData("n must be >= 1")
    L = cholesky(params.sigma)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, params.d)) @ L.T
    w = rng.chisquare(params.nu, size=n)
    x = params.mu + z * np.sqrt(params.nu / w)[:, None]
    names = tuple(assets) if assets is not None else tuple(f"x{k + 1}" for k in range(params.d))
    return ReturnsMatrix(synthetic_dates(n), names, x)


@dataclass(frozen=True)
class DescriptiveStats:
    """Per-asset moments and their cross-asset averages.

    Kurtosis is the non-excess (Pearson) version; skewness and kurtosis are
    ``nan`` for constant columns and the averages skip those.
    """

    T: int
    N: int
    mean: NDArray[np.float64]
    sd: NDArray[np.float64]
    skew: NDArray[np.float64]
    kurt: NDArray[np.float64]

    @property
    def avg_mean(self) -> float:
        return float(np.mean(self.mean))

    @property
    def avg_sd(self) -> float:
        return float(np.mean(self.sd))

    @property
    def avg_skew(self) -> float:
        return float(np.nanmean(self.skew)) if np.any(np.isfinite(self.skew)) else math.nan

    @property
    def avg_kurt(self) -> float:
        return float(np.nanmean(self.kurt)) if np.any(np.isfinite(self.kurt)) else math.nan


def descriptive_stats(r: ArrayLike) -> DescriptiveStats:
    x = np.asarray(r, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    T, N = x.shape
    if T < 4:
        raise InsufficientData(f"need at least 4 observations, got {T}")
    mean = x.mean(axis=0)
    constant = np.ptp(x, axis=0) == 0
    sd = np.where(constant, 0.0, x.std(axis=0, ddof=1))
    skew = np.full(N, np.nan)
    kurt = np.full(N, np.nan)
    live = ~constant
    if live.any():
        skew[live] = stats.skew(x[:, live], axis=0, bias=True)
        kurt[live] = stats.kurtosis(x[:, live], axis=0, fisher=False, bias=True)
    return DescriptiveStats(T=T, N=N, mean=mean, sd=sd, skew=skew, kurt=kurt)


def as_values(r: ArrayLike) -> NDArray[np.float64]:
    x = np.asarray(r, dtype=float)
    return x[:, None] if x.ndim == 1 else x
