"""Run configuration loaded from a TOML file.

Relative data paths resolve against the directory holding the config file.
See ``demo/worked_examples/config.toml`` in the repository for an annotated example.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .forecast import DEFAULT_INITIAL_TRAIN, TRAIN_MODES, ForecasterSpec
from .regimes import DEFAULT_FRACTIONS
from .sentiment import HeadlineFilter
from .topics import DEFAULT_SIZE_RANGE

STRATEGIES = ("sentiment_only", "price_based", "combined", "buy_and_hold")
CONFIG_ENV = "COMMODITY_BACKTEST_CONFIG"

_SECTIONS = {"data", "ingest", "strategy", "filter", "forecaster", "evaluation", "regimes", "topics", "grid", "output"}


@dataclass
class GridConfig:
    templates: list[ForecasterSpec] = field(default_factory=list)
    grids: dict[str, dict[str, list]] = field(default_factory=dict)
    feature_sets: list[str] = field(default_factory=lambda: ["tabular"])
    windows: list[int] = field(default_factory=lambda: [1, 3, 6, 12])


@dataclass
class RunConfig:
    prices: Optional[Path] = None
    headlines: Optional[Path] = None
    predictions: Optional[Path] = None
    volatility: Optional[Path] = None
    price_schema: dict[str, str] = field(default_factory=dict)
    close_rule: str = "last"
    feature_rule: str = "mean"
    allow_gaps: bool = False
    feature_columns: Optional[list[str]] = None

    strategy: str = "sentiment_only"
    hold_last_signal: bool = False
    filter: HeadlineFilter = field(default_factory=HeadlineFilter)

    forecaster: Optional[ForecasterSpec] = None
    initial_train: int = DEFAULT_INITIAL_TRAIN
    train_mode: str = "expanding"

    risk_free: float = 0.0
    cost_per_switch: float = 0.0
    regime_fractions: tuple[float, float] = DEFAULT_FRACTIONS
    vol_window: int = 6
    regime_strategies: Optional[list[str]] = None
    subset_sizes: tuple[int, int] = DEFAULT_SIZE_RANGE
    benchmark_source: Optional[str] = None
    per_topic: bool = True

    grid: GridConfig = field(default_factory=GridConfig)
    out_dir: Path = Path("out")
    workers: int = 1

    def validate(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.train_mode not in TRAIN_MODES:
            raise ConfigError(f"train_mode must be one of {TRAIN_MODES}")
        for name in ("prices", "headlines", "predictions", "volatility"):
            p = getattr(self, name)
            if p is not None and not p.exists():
                raise ConfigError(f"{name} file not found: {p}")
        lo, hi = self.subset_sizes
        if not 1 <= lo <= hi:
            raise ConfigError(f"invalid subset sizes {self.subset_sizes}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")


def _path(base: Path, value: Optional[str]) -> Optional[Path]:
    if value is None:
        return None
    p = Path(value)
    return p if p.is_absolute() else base / p


def _spec(section: Mapping[str, Any], base: Path) -> ForecasterSpec:
    hp = dict(section.get("hyperparams", {}))
    if "path" in hp:
        hp["path"] = str(_path(base, hp["path"]))
    return ForecasterSpec(
        family=section.get("family", "persistence"),
        hyperparams=hp,
        feature_set=section.get("feature_set", "tabular"),
        window_len=int(section.get("window", 1)),
        name=section.get("name", ""),
    )


def parse_config(raw: Mapping[str, Any], base: Path = Path(".")) -> RunConfig:
    unknown = set(raw) - _SECTIONS
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    data = raw.get("data", {})
    ingest = raw.get("ingest", {})
    strat = raw.get("strategy", {})
    flt = raw.get("filter", {})
    fc = raw.get("forecaster")
    ev = raw.get("evaluation", {})
    reg = raw.get("regimes", {})
    top = raw.get("topics", {})
    grid = raw.get("grid", {})
    out = raw.get("output", {})

    try:
        cfg = RunConfig(
            prices=_path(base, data.get("prices")),
            headlines=_path(base, data.get("headlines")),
            predictions=_path(base, data.get("predictions")),
            volatility=_path(base, data.get("volatility")),
            price_schema=dict(ingest.get("schema", {})),
            close_rule=ingest.get("close_rule", "last"),
            feature_rule=ingest.get("feature_rule", "mean"),
            allow_gaps=bool(ingest.get("allow_gaps", False)),
            feature_columns=ingest.get("feature_columns"),
            strategy=strat.get("kind", "sentiment_only"),
            hold_last_signal=bool(strat.get("hold_last_signal", False)),
            filter=HeadlineFilter(
                sources=frozenset(flt.get("sources", [])),
                topics=frozenset(flt.get("topics", [])),
                event_types=frozenset(flt.get("event_types", [])),
            ),
            forecaster=_spec(fc, base) if fc is not None else None,
            initial_train=int((fc or {}).get("initial_train", DEFAULT_INITIAL_TRAIN)),
            train_mode=(fc or {}).get("train_mode", "expanding"),
            risk_free=float(ev.get("risk_free", 0.0)),
            cost_per_switch=float(ev.get("cost_per_switch", 0.0)),
            regime_fractions=tuple(reg.get("fractions", DEFAULT_FRACTIONS)),
            vol_window=int(reg.get("window", 6)),
            regime_strategies=reg.get("strategies"),
            subset_sizes=tuple(top.get("subset_sizes", DEFAULT_SIZE_RANGE)),
            benchmark_source=top.get("benchmark_source"),
            per_topic=bool(top.get("per_topic", True)),
            grid=GridConfig(
                templates=[_spec(t, base) for t in grid.get("families", [])],
                grids={t.get("name") or t.get("family", "persistence"): dict(t.get("grid", {})) for t in grid.get("families", [])},
                feature_sets=list(grid.get("feature_sets", ["tabular"])),
                windows=[int(w) for w in grid.get("windows", [1, 3, 6, 12])],
            ),
            out_dir=_path(base, out.get("dir", "out")),
            workers=int(out.get("workers", 1)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config value: {exc}") from None
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(raw, path.parent)
