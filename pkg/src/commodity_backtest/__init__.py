"""Deterministic backtests of news-sentiment and forecast-driven strategies on monthly commodity prices."""

__version__ = "0.1.0"

from .errors import BacktestError, ComputationError, ConfigError, DataError, InsufficientDataError
from .ingest import (
    TOPICS,
    DailyBar,
    HeadlineRecord,
    MonthlySeries,
    impute_missing,
    load_headlines,
    load_prices,
    resample_monthly,
    simple_returns,
)
from .sentiment import HeadlineFilter, filter_headlines, label_to_score, monthly_score
from .strategy import PortfolioPath, SignalSeries, buy_and_hold, price_signal, price_signals, sentiment_signal, simulate
from .evaluation import StrategyReport, cumulative_return, hit_rate, report_from_path, sharpe
from .regimes import classify_regimes, regime_report, regime_thresholds, rolling_volatility
from .forecast import ForecasterSpec, build_windows, grid_search, point_metrics, walk_forward
from .topics import enumerate_topic_subsets, event_type_report, source_comparison, topic_portfolio
