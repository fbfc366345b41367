"""Minimum-variance weights, rolling-window backtests and performance metrics."""

from __future__ import annotations

import json
import logging
import math
import os
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.linalg import LinAlgError

from .data import ReturnsMatrix, as_values, format_float
from .errors import (
    Bankruptcy,
    DegenerateDenominator,
    DimensionMismatch,
    InsufficientData,
    KindMismatch,
    NotPositiveDefinite,
    TgpmError,
)
from .gpm import GpmEstimate, GpmKind, estimate
from .numerics import frobenius_distance
from .variance_test import MIN_LENGTH, VarianceTestResult, lw_variance_test

logger = logging.getLogger(__name__)

FALLBACK_POLICIES = ("hold-previous", "skip-window", "fail")
AGGREGATIONS = ("compound", "simple-sum")


class BacktestError(TgpmError, RuntimeError):
    """An estimator failed on a window under the ``fail`` policy."""

    def __init__(self, message: str, window_index: int):
        super().__init__(f"window {window_index}: {message}")
        self.window_index = window_index


def mv_weights(precision: ArrayLike) -> NDArray[np.float64]:
    """Minimum-variance weights ``P 1 / (1' P 1)`` for a precision-like matrix.

    ``P`` need not be positive definite; only ``1' P 1`` must be clearly
    non-zero (relative to ``sum |P|``).
    """
    p = np.asarray(precision, dtype=float)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got {p.shape}")
    if not np.all(np.isfinite(p)):
        raise DegenerateDenominator("precision matrix has non-finite entries")
    row = p.sum(axis=1)
    denom = row.sum()
    scale = np.abs(p).sum()
    if not abs(denom) > 1e-12 * scale:
        raise DegenerateDenominator(f"1'P1 = {denom:.3g} is negligible against scale {scale:.3g}")
    w = row / denom
    return w


def aggregate_returns(block: ArrayLike, how: str = "compound") -> NDArray[np.float64]:
    """Collapse a ``(tau, N)`` block of daily returns into one return per asset."""
    block = as_values(block)
    if how == "compound":
        return np.prod(1.0 + block, axis=0) - 1.0
    if how == "simple-sum":
        return block.sum(axis=0)
    raise ValueError(f"unknown aggregation {how!r}; choose from {AGGREGATIONS}")


def value_at_risk(returns: ArrayLike, level: float = 0.95) -> float:
    """Empirical ``1 - level`` quantile (inverse-CDF definition) of ``returns``.

    Returned as the return level itself, so a loss shows up negative.
    """
    r = np.sort(np.asarray(returns, dtype=float).ravel())
    if r.size == 0:
        raise InsufficientData("no returns")
    # 1-based rank ceil((1 - level) * M); the epsilon absorbs 0.05 * M rounding up.
    k = max(1, math.ceil((1.0 - level) * r.size - 1e-9))
    return float(r[k - 1])


def turnover(weights: ArrayLike) -> float:
    """Average total turnover; the first period trades nothing."""
    w = np.asarray(weights, dtype=float)
    if w.shape[0] == 0:
        raise InsufficientData("no weights")
    return float(np.abs(np.diff(w, axis=0)).sum() / w.shape[0])


@dataclass(frozen=True)
class PortfolioMetrics:
    M: int
    mean: float
    variance: float
    sharpe: float
    turnover: float
    var95: float
    annualization_factor: float

    @property
    def ann_mean(self) -> float:
        return self.annualization_factor * self.mean

    @property
    def ann_variance(self) -> float:
        return self.annualization_factor * self.variance

    @property
    def ann_sharpe(self) -> float:
        return self.ann_mean / math.sqrt(self.ann_variance) if self.ann_variance > 0 else math.nan

    def to_dict(self) -> dict:
        return {
            "M": self.M,
            "mean": self.mean,
            "variance": self.variance,
            "sharpe": self.sharpe,
            "turnover": self.turnover,
            "var95": self.var95,
            "annualization_factor": self.annualization_factor,
            "ann_mean": self.ann_mean,
            "ann_variance": self.ann_variance,
            "ann_sharpe": self.ann_sharpe,
        }


def compute_metrics(
    weights: ArrayLike,
    period_returns: ArrayLike,
    annualization_factor: float,
) -> PortfolioMetrics:
    """Out-of-sample mean, variance (divisor M - 1), Sharpe ratio, turnover and VaR.

    ``weights[t]`` is held over the period whose asset returns are
    ``period_returns[t]``.
    """
    w = np.asarray(weights, dtype=float)
    r = np.asarray(period_returns, dtype=float)
    if w.shape != r.shape or w.ndim != 2:
        raise DimensionMismatch(f"weights {w.shape} and returns {r.shape} must be aligned (M, N)")
    M = w.shape[0]
    if M < 2:
        raise InsufficientData(f"need at least 2 out-of-sample periods, got {M}")
    port = np.einsum("ij,ij->i", w, r)
    mean = float(port.mean())
    var = float(np.sum((port - mean) ** 2) / (M - 1))
    sd = math.sqrt(var)
    return PortfolioMetrics(
        M=M,
        mean=mean,
        variance=var,
        sharpe=mean / sd if sd > 0 else math.nan,
        turnover=turnover(w),
        var95=value_at_risk(port),
        annualization_factor=float(annualization_factor),
    )


def wealth_curve(portfolio_returns: ArrayLike, initial: float = 1.0, on_bankruptcy: str = "raise") -> NDArray[np.float64]:
    """Compounded wealth ``W_t = W_{t-1} (1 + r_t)``, starting at ``initial``.

    A return of -100% or worse raises :class:`Bankruptcy`, or with
    ``on_bankruptcy="zero"`` pins the curve at zero from that period on.
    """
    if not initial > 0:
        raise ValueError("initial wealth must be positive")
    r = np.asarray(portfolio_returns, dtype=float).ravel()
    ruined = np.flatnonzero(r <= -1.0)
    if ruined.size:
        if on_bankruptcy == "raise":
            raise Bankruptcy(f"return {r[ruined[0]]:.4g} at period {ruined[0]}")
        r = r.copy()
        r[ruined[0]:] = -1.0
    return initial * np.concatenate([[1.0], np.cumprod(1.0 + r)])


def stability_series(estimates: Sequence[GpmEstimate]) -> NDArray[np.float64]:
    """Frobenius distances between consecutive estimates of one estimator."""
    if len(estimates) < 2:
        raise InsufficientData("need at least two estimates")
    kind, dim = estimates[0].kind, estimates[0].dim
    for e in estimates[1:]:
        if e.kind is not kind:
            raise KindMismatch(f"{e.kind.value} estimate among {kind.value} estimates")
        if e.dim != dim:
            raise DimensionMismatch(f"dim {e.dim} among dim {dim} estimates")
    return np.array(
        [frobenius_distance(prev.matrix, cur.matrix) for prev, cur in zip(estimates[:-1], estimates[1:])]
    )


@dataclass(frozen=True)
class BacktestConfig:
    """Rolling-window protocol.

    ``annualization_factor`` defaults to ``252 / tau`` (periods per year).
    """

    window_size: int = 250
    rebalance_period: int = 21
    nu_list: tuple[float, ...] = (6.0,)
    estimators: tuple[str, ...] = ("inv", "signed", "abs", "taylor")
    region_threshold: float | None = None
    region_pair: tuple[int, int] = (0, 1)
    annualization_factor: float | None = None
    fallback_policy: str = "hold-previous"
    aggregate: str = "compound"
    demean: bool = True
    scatter_rescale: bool = False
    seed: int = 0
    lw_reps: int = 4999
    run_tests: bool = True

    def __post_init__(self):
        if self.window_size < 2:
            raise ValueError("window_size must be >= 2")
        if self.rebalance_period < 1:
            raise ValueError("rebalance_period must be >= 1")
        if self.fallback_policy not in FALLBACK_POLICIES:
            raise ValueError(f"fallback_policy must be one of {FALLBACK_POLICIES}")
        if self.aggregate not in AGGREGATIONS:
            raise ValueError(f"aggregate must be one of {AGGREGATIONS}")
        kinds = tuple(GpmKind.parse(e).flag for e in self.estimators)
        if "region" in kinds and self.region_threshold is None:
            raise ValueError("region estimator requires region_threshold")
        object.__setattr__(self, "estimators", kinds)
        object.__setattr__(self, "nu_list", tuple(float(v) for v in self.nu_list))

    @property
    def factor(self) -> float:
        if self.annualization_factor is not None:
            return float(self.annualization_factor)
        return 252.0 / self.rebalance_period

    def labels(self) -> list[tuple[str, str, float | None]]:
        """``(label, kind flag, nu)`` for every estimator run, in report order."""
        out = []
        for kind in self.estimators:
            if kind == "inv":
                out.append(("inv", kind, None))
            else:
                out.extend((f"{kind}_nu{_nu_tag(nu)}", kind, nu) for nu in self.nu_list)
        return out

    def to_dict(self) -> dict:
        return {
            "window_size": self.window_size,
            "rebalance_period": self.rebalance_period,
            "nu_list": list(self.nu_list),
            "estimators": list(self.estimators),
            "region_threshold": self.region_threshold,
            "region_pair": list(self.region_pair),
            "annualization_factor": self.factor,
            "fallback_policy": self.fallback_policy,
            "aggregate": self.aggregate,
            "demean": self.demean,
            "scatter_rescale": self.scatter_rescale,
            "seed": self.seed,
            "lw_reps": self.lw_reps,
        }


def _nu_tag(nu: float) -> str:
    return str(int(nu)) if float(nu).is_integer() else format(nu, "g")


def n_windows(T: int, window_size: int, rebalance_period: int) -> int:
    """Number of complete out-of-sample periods, ``floor((T - ws) / tau)``."""
    return max(0, (T - window_size) // rebalance_period)


@dataclass
class EstimatorRun:
    """Everything a backtest records for one estimator (and one ``nu``)."""

    label: str
    kind: str
    nu: float | None
    window_index: list[int] = field(default_factory=list)
    weights: list[NDArray[np.float64]] = field(default_factory=list)
    asset_returns: list[NDArray[np.float64]] = field(default_factory=list)
    estimates: list[GpmEstimate] = field(default_factory=list)
    estimate_windows: list[int] = field(default_factory=list)
    fallbacks: list[dict] = field(default_factory=list)
    metrics: PortfolioMetrics | None = None
    wealth: NDArray[np.float64] | None = None
    bankrupt: bool = False
    stability: NDArray[np.float64] | None = None
    test: VarianceTestResult | None = None
    test_notice: str | None = None

    @property
    def portfolio_returns(self) -> NDArray[np.float64]:
        if not self.weights:
            return np.empty(0)
        return np.einsum("ij,ij->i", np.array(self.weights), np.array(self.asset_returns))

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "kind": GpmKind.parse(self.kind).value,
            "nu": self.nu,
            "periods": len(self.window_index),
            "metrics": None if self.metrics is None else self.metrics.to_dict(),
            "variance_test_vs_inv": None if self.test is None else self.test.to_dict(),
            "variance_test_notice": self.test_notice,
            "fallbacks": self.fallbacks,
            "bankrupt": self.bankrupt,
            "final_wealth": None if self.wealth is None else float(self.wealth[-1]),
            "mean_stability": None
            if self.stability is None or self.stability.size == 0
            else float(self.stability.mean()),
            "weights": [
                {"window_index": k, "weights": w.tolist()} for k, w in zip(self.window_index, self.weights)
            ],
        }


@dataclass
class BacktestReport:
    config: BacktestConfig
    assets: tuple[str, ...]
    T: int
    M: int
    window_dates: list[tuple[str, str]]
    runs: dict[str, EstimatorRun]

    def __getitem__(self, label: str) -> EstimatorRun:
        return self.runs[label]

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "T": self.T,
            "N": len(self.assets),
            "M": self.M,
            "assets": list(self.assets),
            "estimators": {label: run.to_dict() for label, run in self.runs.items()},
        }

    def to_json(self) -> str:
        return json.dumps(_clean(self.to_dict()), indent=2, sort_keys=False, allow_nan=False) + "\n"

    def files(self) -> dict[str, str]:
        """File name -> content for the report JSON and the per-estimator CSVs."""
        out = {"report.json": self.to_json()}
        for label, run in self.runs.items():
            port = run.portfolio_returns
            out[f"returns_{label}.csv"] = _csv(
                ["window_index", "portfolio_return"], ([k, r] for k, r in zip(run.window_index, port))
            )
            wealth = run.wealth if run.wealth is not None else np.empty(0)
            out[f"wealth_{label}.csv"] = _csv(["step", "wealth"], enumerate(wealth))
            stab = run.stability if run.stability is not None else np.empty(0)
            out[f"stability_{label}.csv"] = _csv(
                ["window_index", "frobenius_distance"], zip(run.estimate_windows[1:], stab)
            )
            out[f"weights_{label}.csv"] = _csv(
                ["window_index", *self.assets], ([k, *w] for k, w in zip(run.window_index, run.weights))
            )
        return out

    def table(self) -> str:
        """Plain-text summary in the layout of the usual results table."""
        head = f"{'estimator':<16}{'ann.var':>14}{'ann.mean':>14}{'SR':>12}{'VaR95':>12}{'TO':>10}"
        lines = [head]
        for label, run in self.runs.items():
            m = run.metrics
            if m is None:
                lines.append(f"{label:<16}{'(too few periods)':>40}")
                continue
            stars = run.test.stars if run.test is not None else ""
            lines.append(
                f"{label:<16}{m.ann_variance:>11.6f}{stars:<3}{m.ann_mean:>14.6f}"
                f"{m.sharpe:>12.5f}{m.var95:>12.5f}{m.turnover:>10.4f}"
            )
        return "\n".join(lines)


def _clean(obj):
    """Replace non-finite floats by ``None`` so the JSON stays standard."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def _csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(str(v) if isinstance(v, (int, np.integer)) else format_float(v) for v in row))
    return "\n".join(lines) + "\n"


_ESTIMATION_ERRORS = (NotPositiveDefinite, DegenerateDenominator, InsufficientData, LinAlgError, FloatingPointError)


def rolling_backtest(r: ReturnsMatrix | ArrayLike, config: BacktestConfig) -> BacktestReport:
    """Rolling-window minimum-variance backtest over every configured estimator.

    Window ``k`` estimates on rows ``[k tau, k tau + ws)`` and holds the
    resulting weights over rows ``[k tau + ws, k tau + ws + tau)``, whose daily
    returns are aggregated per asset (compounded by default).
    """
    values = as_values(r)
    T, N = values.shape
    ws, tau = config.window_size, config.rebalance_period
    if T < ws + tau:
        raise InsufficientData(f"T = {T} is shorter than window + holding period = {ws + tau}")
    if ws <= N:
        warnings.warn(f"window size {ws} does not exceed the number of assets {N}", stacklevel=2)
    M = n_windows(T, ws, tau)
    assets = r.assets if isinstance(r, ReturnsMatrix) else tuple(f"x{k + 1}" for k in range(N))
    dates = r.dates if isinstance(r, ReturnsMatrix) else None

    runs = {label: EstimatorRun(label, kind, nu) for label, kind, nu in config.labels()}
    window_dates = []
    for k in range(M):
        lo, hi = k * tau, k * tau + ws
        window = values[lo:hi]
        held = aggregate_returns(values[hi:hi + tau], config.aggregate)
        if dates is not None:
            window_dates.append((str(dates[lo]), str(dates[hi - 1])))
        for run in runs.values():
            try:
                est = estimate(
                    run.kind,
                    window,
                    run.nu,
                    region_threshold=config.region_threshold,
                    pair=config.region_pair,
                    demean=config.demean,
                    scatter_rescale=config.scatter_rescale,
                )
                run.estimates.append(est)
                run.estimate_windows.append(k)
                w = mv_weights(est.matrix)
            except _ESTIMATION_ERRORS as exc:
                if config.fallback_policy == "fail":
                    raise BacktestError(f"{run.label}: {exc}", k) from exc
                run.fallbacks.append({"window_index": k, "reason": f"{type(exc).__name__}: {exc}"})
                if config.fallback_policy == "skip-window":
                    continue
                w = run.weights[-1] if run.weights else np.full(N, 1.0 / N)
            run.window_index.append(k)
            run.weights.append(w)
            run.asset_returns.append(held)

    reference = runs.get("inv")
    for run in runs.values():
        _summarize(run, config)
    if reference is not None and config.run_tests:
        for run in runs.values():
            if run is not reference:
                _compare(run, reference, config)
    return BacktestReport(config, tuple(assets), T, M, window_dates, runs)


def _summarize(run: EstimatorRun, config: BacktestConfig) -> None:
    port = run.portfolio_returns
    if len(run.weights) >= 2:
        run.metrics = compute_metrics(np.array(run.weights), np.array(run.asset_returns), config.factor)
    try:
        run.wealth = wealth_curve(port)
    except Bankruptcy:
        run.bankrupt = True
        run.wealth = wealth_curve(port, on_bankruptcy="zero")
    run.stability = stability_series(run.estimates) if len(run.estimates) >= 2 else np.empty(0)


def _compare(run: EstimatorRun, reference: EstimatorRun, config: BacktestConfig) -> None:
    common = sorted(set(run.window_index) & set(reference.window_index))
    if len(common) < MIN_LENGTH:
        run.test_notice = f"variance test skipped: {len(common)} paired periods (< {MIN_LENGTH})"
        return
    a = dict(zip(run.window_index, run.portfolio_returns))
    b = dict(zip(reference.window_index, reference.portfolio_returns))
    try:
        run.test = lw_variance_test(
            [a[k] for k in common], [b[k] for k in common], seed=config.seed, reps=config.lw_reps
        )
    except TgpmError as exc:
        run.test_notice = f"variance test skipped: {exc}"


def write_report(report: BacktestReport, outdir: str | os.PathLike) -> list[str]:
    """Write every report file into ``outdir`` atomically; returns the paths."""
    os.makedirs(outdir, exist_ok=True)
    paths = []
    for name, content in report.files().items():
        path = os.path.join(outdir, name)
        tmp = path + ".tmp"
        with open(tmp, "w", newline="") as fh:
            fh.write(content)
        os.replace(tmp, path)
        paths.append(path)
    return paths
