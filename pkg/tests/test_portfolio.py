import json
import math
import warnings

import numpy as np
import pytest
from scipy import optimize

from tgpm.data import ReturnsMatrix, synthetic_dates
from tgpm.errors import Bankruptcy, DegenerateDenominator, DimensionMismatch, InsufficientData, KindMismatch
from tgpm.gpm import GpmEstimate, GpmKind, estimate
from tgpm.numerics import frobenius_distance, invert_spd
from tgpm.portfolio import (
    BacktestConfig,
    BacktestError,
    aggregate_returns,
    compute_metrics,
    mv_weights,
    n_windows,
    rolling_backtest,
    stability_series,
    turnover,
    value_at_risk,
    wealth_curve,
    write_report,
)

from conftest import random_spd


def panel(rng, T, N, scale=0.01):
    return ReturnsMatrix(synthetic_dates(T), tuple(f"a{k}" for k in range(N)), scale * rng.standard_t(5, size=(T, N)))


def quiet(**kw):
    return BacktestConfig(run_tests=False, **kw)


class TestWeights:
    def test_identity(self):
        np.testing.assert_allclose(mv_weights(np.eye(3)), np.full(3, 1 / 3), rtol=1e-15)

    def test_diagonal(self):
        np.testing.assert_allclose(mv_weights(invert_spd(np.diag([1.0, 4.0]))), [0.8, 0.2], rtol=1e-14)

    def test_kkt_oracle(self, rng):
        for _ in range(50):
            d = int(rng.integers(2, 9))
            sigma = random_spd(rng, d, jitter=0.5)
            kkt = np.block([[2 * sigma, np.ones((d, 1))], [np.ones((1, d)), np.zeros((1, 1))]])
            w_ref = np.linalg.solve(kkt, np.r_[np.zeros(d), 1.0])[:d]
            assert np.abs(mv_weights(invert_spd(sigma)) - w_ref).max() < 1e-8

    def test_numeric_minimizer(self, rng):
        sigma = random_spd(rng, 6)
        res = optimize.minimize(
            lambda w: w @ sigma @ w,
            np.full(6, 1 / 6),
            jac=lambda w: 2 * sigma @ w,
            constraints=[{"type": "eq", "fun": lambda w: w.sum() - 1, "jac": lambda w: np.ones(6)}],
            method="SLSQP",
            options={"ftol": 1e-15, "maxiter": 500},
        )
        np.testing.assert_allclose(mv_weights(invert_spd(sigma)), res.x, atol=1e-6)

    def test_scaling_invariance(self, rng):
        for _ in range(20):
            p = random_spd(rng, 5)
            assert np.abs(mv_weights(7.3 * p) - mv_weights(p)).max() <= 1e-12

    def test_budget(self, rng):
        for _ in range(20):
            p = rng.normal(size=(5, 5))
            p = p + p.T
            try:
                w = mv_weights(p)
            except DegenerateDenominator:
                continue
            assert abs(w.sum() - 1) <= 1e-10

    def test_degenerate(self):
        with pytest.raises(DegenerateDenominator):
            mv_weights(np.array([[1.0, -1.0], [-1.0, 1.0]]))
        with pytest.raises(DegenerateDenominator):
            mv_weights(np.array([[np.nan, 0.0], [0.0, 1.0]]))
        with pytest.raises(DimensionMismatch):
            mv_weights(np.ones((2, 3)))


class TestMetrics:
    def test_hand_example(self):
        w = np.array([[0.5, 0.5], [0.5, 0.5]])
        r = np.array([[0.02, 0.04], [0.00, 0.02]])
        m = compute_metrics(w, r, 12.0)
        assert m.M == 2
        assert m.mean == pytest.approx(0.02, abs=1e-15)
        assert m.variance == pytest.approx(0.0002, abs=1e-15)
        assert m.turnover == 0.0
        assert m.sharpe == pytest.approx(0.02 / math.sqrt(0.0002))

    def test_flip_turnover(self):
        w = np.array([[1.0, 0.0], [0.0, 1.0]])
        assert turnover(w) == pytest.approx(2.0 / 2)
        assert np.abs(np.diff(w, axis=0)).sum() == 2.0

    def test_var_and_variance_oracles(self, rng):
        M = 1000
        w = rng.dirichlet(np.ones(4), size=M)
        r = 0.05 * rng.standard_t(4, size=(M, 4))
        m = compute_metrics(w, r, 12.0)
        port = np.einsum("ij,ij->i", w, r)
        assert m.var95 == np.sort(port)[49]
        mean = sum(port) / M
        assert abs(m.variance - sum((p - mean) ** 2 for p in port) / (M - 1)) <= 1e-12

    def test_var_rank(self):
        r = np.arange(1, 41, dtype=float)  # 0.05 * 40 = 2 -> second smallest
        assert value_at_risk(r) == 2.0
        assert value_at_risk(np.arange(1, 42, dtype=float)) == 3.0
        assert value_at_risk([5.0]) == 5.0

    def test_annualization(self, rng):
        w = rng.dirichlet(np.ones(3), size=30)
        m = compute_metrics(w, rng.normal(size=(30, 3)), 12.0)
        assert m.ann_variance == 12.0 * m.variance
        assert m.ann_variance / m.variance == pytest.approx(12.0, rel=1e-15)
        assert m.ann_mean == 12.0 * m.mean
        assert m.ann_sharpe == pytest.approx(m.sharpe * math.sqrt(12.0))

    def test_errors(self):
        with pytest.raises(InsufficientData):
            compute_metrics(np.ones((1, 2)) / 2, np.zeros((1, 2)), 12.0)
        with pytest.raises(DimensionMismatch):
            compute_metrics(np.ones((3, 2)), np.zeros((3, 3)), 12.0)

    def test_aggregation(self):
        block = np.array([[0.1, 0.0], [-0.1, 0.02]])
        np.testing.assert_allclose(aggregate_returns(block), [1.1 * 0.9 - 1, 0.02])
        np.testing.assert_allclose(aggregate_returns(block, "simple-sum"), [0.0, 0.02])
        with pytest.raises(ValueError):
            aggregate_returns(block, "mean")


class TestWealth:
    def test_flat(self):
        np.testing.assert_array_equal(wealth_curve(np.zeros(4), 2.0), np.full(5, 2.0))

    def test_example(self):
        np.testing.assert_allclose(wealth_curve([0.1, -0.1]), [1.0, 1.1, 0.99], rtol=1e-15)

    def test_product_oracle(self, rng):
        r = rng.normal(0, 0.05, size=200)
        w = wealth_curve(r)
        assert len(w) == 201
        assert abs(w[-1] - math.prod(1 + v for v in r)) <= 1e-12

    def test_bankruptcy(self):
        with pytest.raises(Bankruptcy):
            wealth_curve([0.1, -1.0, 0.2])
        np.testing.assert_allclose(wealth_curve([0.1, -1.2, 0.2], on_bankruptcy="zero"), [1, 1.1, 0, 0])
        with pytest.raises(ValueError):
            wealth_curve([0.0], initial=0.0)


def est(m, kind=GpmKind.SIGNED):
    return GpmEstimate(np.asarray(m, dtype=float), kind, 6.0, 10)


class TestStability:
    def test_identical(self):
        assert np.all(stability_series([est(np.eye(3))] * 4) == 0)

    def test_sqrt_two(self):
        out = stability_series([est(np.eye(2)), est(np.zeros((2, 2)))])
        np.testing.assert_allclose(out, [math.sqrt(2)], rtol=1e-15)

    def test_composition(self, rng):
        mats = [random_spd(rng, 4) for _ in range(6)]
        out = stability_series([est(m) for m in mats])
        np.testing.assert_array_equal(out, [frobenius_distance(a, b) for a, b in zip(mats, mats[1:])])

    def test_errors(self):
        with pytest.raises(KindMismatch):
            stability_series([est(np.eye(2)), est(np.eye(2), GpmKind.ABS)])
        with pytest.raises(DimensionMismatch):
            stability_series([est(np.eye(2)), est(np.eye(3))])
        with pytest.raises(InsufficientData):
            stability_series([est(np.eye(2))])


class TestBacktest:
    def test_window_accounting(self):
        for T, ws, tau in [(5400, 250, 21), (5400, 170, 21), (25100, 250, 21), (271, 250, 21), (300, 10, 7)]:
            M = n_windows(T, ws, tau)
            assert M * tau + ws <= T < (M + 1) * tau + ws
        assert n_windows(25100, 250, 21) == 1183
        assert n_windows(5400, 250, 21) == 245

    def test_single_window(self, rng):
        r = panel(rng, 60 + 5, 3)
        rep = rolling_backtest(r, quiet(window_size=60, rebalance_period=5, estimators=("inv", "signed")))
        assert rep.M == 1
        assert len(rep["inv"].weights) == 1 and rep["inv"].metrics is None

    def test_too_short(self, rng):
        with pytest.raises(InsufficientData):
            rolling_backtest(panel(rng, 50, 3), quiet(window_size=40, rebalance_period=21))

    def test_series_lengths_and_budget(self, rng):
        r = panel(rng, 600, 5)
        cfg = quiet(window_size=100, rebalance_period=20, nu_list=(3.0, 6.0), estimators=("inv", "signed", "abs", "taylor"))
        rep = rolling_backtest(r, cfg)
        assert rep.M == 25
        assert list(rep.runs) == ["inv", "signed_nu3", "signed_nu6", "abs_nu3", "abs_nu6", "taylor_nu3", "taylor_nu6"]
        for run in rep.runs.values():
            assert len(run.weights) == rep.M
            assert len(run.stability) == rep.M - 1
            assert len(run.wealth) == rep.M + 1
            assert all(abs(w.sum() - 1) <= 1e-10 for w in run.weights)

    def test_identical_estimators_identical_results(self, rng):
        r = panel(rng, 400, 4)
        rep = rolling_backtest(r, quiet(window_size=80, rebalance_period=20, estimators=("signed", "signed")))
        runs = list(rep.runs.values())
        assert len(runs) == 1  # duplicate labels collapse
        cfg = quiet(window_size=80, rebalance_period=20, nu_list=(6.0, 6.0), estimators=("signed",))
        rep = rolling_backtest(r, cfg)
        a = rolling_backtest(r, quiet(window_size=80, rebalance_period=20, estimators=("signed",)))
        np.testing.assert_array_equal(rep["signed_nu6"].portfolio_returns, a["signed_nu6"].portfolio_returns)
        assert rep["signed_nu6"].metrics == a["signed_nu6"].metrics

    def test_matches_manual_loop(self, rng):
        r = panel(rng, 300, 3)
        rep = rolling_backtest(r, quiet(window_size=100, rebalance_period=25, estimators=("inv",)))
        x = r.values
        for k in range(rep.M):
            w = mv_weights(invert_spd(np.cov(x[25 * k:25 * k + 100], rowvar=False)))
            np.testing.assert_allclose(rep["inv"].weights[k], w, rtol=1e-10)
            held = np.prod(1 + x[25 * k + 100:25 * k + 125], axis=0) - 1
            np.testing.assert_allclose(rep["inv"].asset_returns[k], held, rtol=1e-14)

    def test_no_look_ahead(self, rng):
        r = panel(rng, 400, 4)
        cfg = quiet(window_size=100, rebalance_period=20, estimators=("inv", "signed", "abs", "taylor"))
        base = rolling_backtest(r, cfg)
        for k in (0, 5, base.M - 1):
            cut = k * 20 + 100
            x = r.values.copy()
            x[cut:] = rng.normal(size=x[cut:].shape)
            pert = rolling_backtest(ReturnsMatrix(r.dates, r.assets, x), cfg)
            for label in base.runs:
                for j in range(k + 1):
                    assert np.array_equal(base[label].weights[j], pert[label].weights[j])

    def test_fallback_policies(self, rng):
        x = rng.normal(0, 0.01, size=(200, 3))
        x[:60, 2] = x[:60, 0]  # first windows are singular
        r = ReturnsMatrix(synthetic_dates(200), ("a", "b", "c"), x)
        base = dict(window_size=50, rebalance_period=10, estimators=("inv",))
        hold = rolling_backtest(r, quiet(**base))
        assert hold.M == 15
        assert len(hold["inv"].weights) == 15
        assert [f["window_index"] for f in hold["inv"].fallbacks] == [0, 1]
        np.testing.assert_array_equal(hold["inv"].weights[0], np.full(3, 1 / 3))
        skip = rolling_backtest(r, quiet(fallback_policy="skip-window", **base))
        assert skip["inv"].window_index == list(range(2, 15))
        with pytest.raises(BacktestError) as info:
            rolling_backtest(r, quiet(fallback_policy="fail", **base))
        assert info.value.window_index == 0

    def test_hold_previous_keeps_last(self, rng):
        x = rng.normal(0, 0.01, size=(200, 3))
        x[100:150, 2] = x[100:150, 1]  # window 5 (rows 50..99 + 50) spans the collinear block fully
        r = ReturnsMatrix(synthetic_dates(200), ("a", "b", "c"), x)
        rep = rolling_backtest(r, quiet(window_size=50, rebalance_period=50, estimators=("inv",)))
        run = rep["inv"]
        assert [f["window_index"] for f in run.fallbacks] == [2]
        np.testing.assert_array_equal(run.weights[2], run.weights[1])

    def test_warns_small_window(self, rng):
        with pytest.warns(UserWarning):
            rolling_backtest(panel(rng, 60, 5), quiet(window_size=5, rebalance_period=5, estimators=("signed",), fallback_policy="skip-window"))

    def test_variance_test_attached(self, rng):
        r = panel(rng, 600, 4)
        cfg = BacktestConfig(window_size=100, rebalance_period=20, estimators=("inv", "signed"), seed=3, lw_reps=999)
        rep = rolling_backtest(r, cfg)
        t = rep["signed_nu6"].test
        assert t is not None and 0 < t.p_value <= 1 and t.seed == 3
        assert rep["inv"].test is None

    def test_variance_test_notice(self, rng):
        cfg = BacktestConfig(window_size=100, rebalance_period=20, estimators=("inv", "signed"), seed=3, lw_reps=999)
        rep = rolling_backtest(panel(rng, 200, 3), cfg)
        assert rep["signed_nu6"].test is None
        assert "skipped" in rep["signed_nu6"].test_notice

    def test_report_files(self, rng, tmp_path):
        r = panel(rng, 400, 3)
        rep = rolling_backtest(r, quiet(window_size=100, rebalance_period=20, estimators=("inv", "abs")))
        paths = write_report(rep, tmp_path)
        names = sorted(p.name for p in tmp_path.iterdir())
        assert names == sorted(
            ["report.json"] + [f"{k}_{l}.csv" for k in ("returns", "wealth", "stability", "weights") for l in ("inv", "abs_nu6")]
        )
        assert len(paths) == len(names)
        doc = json.loads((tmp_path / "report.json").read_text())
        assert doc["M"] == rep.M == 15
        assert doc["config"]["annualization_factor"] == 252.0 / 20
        lines = (tmp_path / "weights_inv.csv").read_text().splitlines()
        assert lines[0] == "window_index,a0,a1,a2"
        assert len(lines) == 1 + rep.M
        vals = [float(v) for v in (tmp_path / "returns_abs_nu6.csv").read_text().splitlines()[1].split(",")]
        assert vals[1] == rep["abs_nu6"].portfolio_returns[0]
        assert "inv" in rep.table()

    def test_config_validation(self):
        with pytest.raises(ValueError):
            BacktestConfig(window_size=1)
        with pytest.raises(ValueError):
            BacktestConfig(rebalance_period=0)
        with pytest.raises(ValueError):
            BacktestConfig(estimators=("region",))
        with pytest.raises(ValueError):
            BacktestConfig(fallback_policy="ignore")
        assert BacktestConfig(rebalance_period=21).factor == 12.0
        assert BacktestConfig(annualization_factor=252.0).factor == 252.0
