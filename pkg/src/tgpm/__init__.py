"""Generalized precision matrices for t-Student returns and minimum-variance backtests."""

from .data import (
    PricePanel,
    ReturnsMatrix,
    descriptive_stats,
    load_ff_industry,
    load_price_csv,
    load_returns_csv,
    log_returns,
    simulate_t,
    write_returns_csv,
)
from .errors import (
    Bankruptcy,
    DegenerateDenominator,
    DegenerateVariance,
    DimensionMismatch,
    EmptyRegion,
    InsufficientData,
    KindMismatch,
    NonFiniteDensity,
    NonPositivePrice,
    NotPositiveDefinite,
    ParseError,
    UnrecognizedLayout,
    UnsortedDates,
)
from .gpm import (
    GpmEstimate,
    GpmKind,
    estimate,
    estimate_gpm,
    estimate_gpm_abs,
    estimate_gpm_region,
    estimate_gpm_taylor,
    gpm_gaussian,
    standardize,
    taylor_gpm,
)
from .ldf import (
    LdfGrid,
    TStudentParams,
    ldf_gaussian,
    ldf_grid,
    ldf_numeric,
    ldf_t_exact,
    ldf_t_taylor,
    t_log_density,
)
from .numerics import (
    MomentSummary,
    cholesky,
    frobenius_distance,
    inv_sqrt_spd,
    invert_spd,
    mahalanobis,
    mori_kurtosis,
    sample_moments,
)
from .portfolio import (
    BacktestConfig,
    BacktestReport,
    compute_metrics,
    mv_weights,
    rolling_backtest,
    stability_series,
    wealth_curve,
    write_report,
)
from .variance_test import VarianceTestResult, lw_variance_test

__version__ = "0.1.0"
