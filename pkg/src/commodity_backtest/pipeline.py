"""Glue between a RunConfig and the library modules."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

from .config import RunConfig
from .errors import ConfigError, DataError, InsufficientDataError
from .forecast import (
    TABULAR,
    PredictionSeries,
    load_external_predictions,
    make_dataset_builder,
    point_metrics,
    walk_forward,
)
from .ingest import HeadlineRecord, MonthlySeries, impute_missing, load_headlines, load_prices, resample_monthly, simple_returns
from .sentiment import monthly_score
from .strategy import PortfolioPath, SignalSeries, buy_and_hold, price_signals, sentiment_signal, simulate
from .topics import tradable_months


@dataclass
class MarketData:
    monthly: dict[str, MonthlySeries]
    returns: MonthlySeries
    headlines: list[HeadlineRecord] = field(default_factory=list)

    @property
    def closes(self) -> MonthlySeries:
        return self.monthly["close"]


@dataclass
class StrategyRun:
    kind: str
    signals: SignalSeries
    path: PortfolioPath
    predictions: Optional[PredictionSeries] = None
    metadata: dict = field(default_factory=dict)


def load_market(cfg: RunConfig, need_headlines: bool = False) -> MarketData:
    if cfg.prices is None:
        raise ConfigError("data.prices is required")
    bars = impute_missing(load_prices(cfg.prices, cfg.price_schema))
    if not bars:
        raise DataError(f"{cfg.prices}: no price rows")
    monthly = resample_monthly(bars, cfg.close_rule, cfg.feature_rule)
    returns = simple_returns(monthly["close"], allow_gaps=cfg.allow_gaps)
    headlines = []
    if cfg.headlines is not None:
        headlines = load_headlines(cfg.headlines)
    elif need_headlines:
        raise ConfigError("data.headlines is required for this strategy")
    return MarketData(monthly, returns, headlines)


def _single_source(cfg: RunConfig) -> str:
    if len(cfg.filter.sources) != 1:
        raise ConfigError("the combined strategy needs exactly one filter source for its sentiment feature")
    return next(iter(cfg.filter.sources))


def predictions_for(cfg: RunConfig, kind: str, data: MarketData) -> PredictionSeries:
    if cfg.predictions is not None:
        return PredictionSeries(load_external_predictions(cfg.predictions), cfg.forecaster)
    spec = cfg.forecaster
    if spec is None:
        raise ConfigError(f"strategy {kind!r} needs [forecaster] or data.predictions")
    if kind == "combined" and spec.feature_set == TABULAR:
        spec = replace(spec, feature_set=f"{TABULAR}+{_single_source(cfg)}")
    if spec.family == "external":
        return walk_forward(spec, None)
    builder = make_dataset_builder(data.monthly, data.headlines, cfg.feature_columns)
    dataset = builder(spec.feature_set, spec.window_len)
    return walk_forward(spec, dataset, cfg.initial_train, cfg.train_mode)


def run_strategy(cfg: RunConfig, kind: str, data: MarketData) -> StrategyRun:
    tradable = tradable_months(data.returns)
    preds = None
    meta: dict = {"strategy": kind}
    if kind == "buy_and_hold":
        signals = buy_and_hold(data.returns)
    elif kind == "sentiment_only":
        if cfg.headlines is None:
            raise ConfigError("sentiment_only needs data.headlines")
        sent = monthly_score(data.headlines, cfg.filter)
        signals = sentiment_signal(sent, tradable, cfg.hold_last_signal)
        meta["filter"] = {
            "sources": sorted(cfg.filter.sources),
            "topics": sorted(cfg.filter.topics),
            "event_types": sorted(cfg.filter.event_types),
        }
        meta["hold_last_signal"] = cfg.hold_last_signal
    elif kind in ("price_based", "combined"):
        preds = predictions_for(cfg, kind, data)
        raw = price_signals(preds.entries, data.closes)
        keep = set(tradable)
        signals = SignalSeries({m: v for m, v in raw.entries.items() if m in keep}, "price_based")
        if preds.spec is not None:
            meta["forecaster"] = {
                "name": preds.spec.name,
                "family": preds.spec.family,
                "feature_set": preds.spec.feature_set,
                "window": preds.spec.window_len,
                "hyperparams": preds.spec.hyperparams_key(),
            }
        meta["prediction_source"] = "external" if cfg.predictions is not None else "walk_forward"
        meta["warnings"] = list(preds.warnings)
        try:
            pm = point_metrics(data.closes, preds)
            meta["point_metrics"] = {"r2": pm.r2, "rmse": pm.rmse, "mae": pm.mae, "n": pm.n}
        except InsufficientDataError:
            meta["point_metrics"] = None
    else:
        raise ConfigError(f"unknown strategy {kind!r}")
    path = simulate(signals, data.returns, cfg.cost_per_switch)
    meta["cost_per_switch"] = cfg.cost_per_switch
    meta["risk_free"] = cfg.risk_free
    return StrategyRun(kind, signals, path, preds, meta)
