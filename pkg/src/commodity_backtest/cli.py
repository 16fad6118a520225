"""Command-line entry point.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 computation error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .config import CONFIG_ENV, STRATEGIES, RunConfig, load_config
from .errors import BacktestError, ComputationError, ConfigError, DataError
from .evaluation import report_from_path
from .forecast import TABULAR, grid_search, load_external_predictions, make_dataset_builder, runs_to_csv
from .ingest import TOPICS, MonthlySeries, load_headlines, load_prices
from .regimes import partition_from_returns, partition_with_fractions, regime_report
from .sentiment import HeadlineFilter
from .strategy import path_to_csv, plot_data_tsv
from .topics import (
    candidate_count,
    enumerate_topic_subsets,
    event_type_report,
    has_topic_labels,
    source_comparison,
)
from .pipeline import load_market, run_strategy

logger = logging.getLogger("commodity_backtest")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_COMPUTE = 0, 1, 2, 3


def write_outputs(out_dir: Path, files: dict[str, str]) -> list[Path]:
    """Write every file to a temp name first, then rename them all into place."""
    out_dir.mkdir(parents=True, exist_ok=True)
    staged = []
    try:
        for name, text in files.items():
            fd, tmp = tempfile.mkstemp(prefix=f".{name}.", dir=out_dir)
            staged.append((tmp, out_dir / name))
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(text)
    except BaseException:
        for tmp, _ in staged:
            os.unlink(tmp)
        raise
    for tmp, final in staged:
        os.replace(tmp, final)
    return [final for _, final in staged]


def _json(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _report_dict(report) -> Optional[dict]:
    return None if report is None else report.to_dict()


def _pct(x: Optional[float]) -> str:
    return "n/a" if x is None else f"{100 * x:.2f}%"


def _num(x: Optional[float]) -> str:
    return "n/a" if x is None else f"{x:.4f}"


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_backtest(cfg: RunConfig) -> dict[str, str]:
    data = load_market(cfg, need_headlines=cfg.strategy in ("sentiment_only", "combined"))
    run = run_strategy(cfg, cfg.strategy, data)
    report = report_from_path(run.path, cfg.risk_free, run.metadata)
    files = {
        "report.json": report.to_json(),
        "path.csv": path_to_csv(run.path),
        "plot.tsv": plot_data_tsv(run.path, data.closes),
    }
    if run.predictions is not None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["month", "predicted_close"])
        for m, v in run.predictions.entries.items():
            w.writerow([m, repr(v)])
        files["predictions.csv"] = buf.getvalue()
    print(f"strategy: {cfg.strategy}")
    print(f"months: {report.n_months}")
    print(f"cumulative return: {_pct(report.cumulative_return)}")
    print(f"sharpe (monthly): {_num(report.sharpe)}  annualized: {_num(report.sharpe_annualized)}")
    print(f"hit rate: {_num(report.hit_rate)}  p-value: {_num(report.p_value)}")
    return files


def _volatility_override(path: Path) -> MonthlySeries:
    rows = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"month", "volatility"} <= set(reader.fieldnames):
            raise DataError(f"{path}: expected columns month,volatility")
        for row in reader:
            try:
                rows.append((row["month"].strip(), float(row["volatility"])))
            except ValueError:
                raise DataError(f"{path}:{reader.line_num}: non-numeric volatility") from None
    return MonthlySeries(sorted(rows), "volatility")


def cmd_regimes(cfg: RunConfig) -> dict[str, str]:
    strategies = cfg.regime_strategies or list(dict.fromkeys([cfg.strategy, "buy_and_hold"]))
    bad = [s for s in strategies if s not in STRATEGIES]
    if bad:
        raise ConfigError(f"unknown regime strategies {bad}")
    data = load_market(cfg, need_headlines=any(s in ("sentiment_only", "combined") for s in strategies))
    if cfg.volatility is not None:
        vol = _volatility_override(cfg.volatility)
        partition = partition_with_fractions(vol, cfg.regime_fractions)
    else:
        partition = partition_from_returns(data.returns, cfg.vol_window, cfg.regime_fractions)
    t1, t2 = partition.thresholds

    reports = {}
    table = io.StringIO()
    w = csv.writer(table, lineterminator="\n")
    w.writerow(["strategy", "regime", "n_months", "sharpe", "sharpe_se", "sharpe_annualized", "status"])
    for kind in strategies:
        run = run_strategy(cfg, kind, data)
        per = regime_report(run.path, partition, cfg.risk_free)
        reports[kind] = {k: v.to_dict() for k, v in per.items()}
        for regime, rep in per.items():
            w.writerow([kind, regime, rep.n_months, _csv_num(rep.sharpe), _csv_num(rep.sharpe_se), _csv_num(rep.sharpe_annualized), rep.status])

    print(f"thresholds: low/medium {100 * t1:.2f}%  medium/high {100 * t2:.2f}%")
    print("months per regime: " + ", ".join(f"{k}={v}" for k, v in partition.counts.items()))
    payload = {"thresholds": [t1, t2], "fractions": list(cfg.regime_fractions), "counts": partition.counts, "reports": reports}
    return {
        "regimes.csv": partition.to_csv(),
        "regime_reports.json": _json(payload),
        "regime_table.csv": table.getvalue(),
    }


def _csv_num(x: Optional[float]) -> str:
    return "" if x is None else repr(x)


def cmd_topics(cfg: RunConfig) -> dict[str, str]:
    if cfg.headlines is None:
        raise ConfigError("data.headlines is required for topics")
    data = load_market(cfg, need_headlines=True)
    if not has_topic_labels(data.headlines):
        raise DataError("no headline carries a topic label; the topic column is empty or absent")
    base = HeadlineFilter(sources=cfg.filter.sources, event_types=cfg.filter.event_types)
    search = enumerate_topic_subsets(
        data.headlines, data.returns, size_range=cfg.subset_sizes, base_filter=base,
        risk_free=cfg.risk_free, cost_per_switch=cfg.cost_per_switch, workers=cfg.workers,
    )
    expected = candidate_count(len(TOPICS), cfg.subset_sizes)
    if search.n_candidates != expected:
        raise ComputationError(f"enumerated {search.n_candidates} subsets, expected {expected}")
    events = event_type_report(data.headlines, data.returns, base, per_topic=cfg.per_topic, risk_free=cfg.risk_free)
    events_json = {k: _report_dict(v) for k, v in events.items() if k != "by_topic"}
    if "by_topic" in events:
        events_json["by_topic"] = {t: {k: _report_dict(v) for k, v in d.items()} for t, d in events["by_topic"].items()}
    sources = sorted(cfg.filter.sources) or None
    comparison = source_comparison(data.headlines, data.returns, sources, cfg.benchmark_source, cfg.risk_free)

    best = search.best
    print(f"candidates: {search.n_candidates}")
    if best is not None:
        print(f"best subset: {', '.join(best.subset)}")
        print(f"best sharpe: {_num(best.sharpe)} over {best.n_months} months")
    return {
        "subsets.csv": search.to_csv(),
        "event_types.json": _json(events_json),
        "source_matrix.csv": comparison.to_csv(),
        "source_reports.json": _json({s: r.to_dict() for s, r in comparison.overall.items()}),
    }


def cmd_grid(cfg: RunConfig) -> dict[str, str]:
    g = cfg.grid
    if not g.templates:
        raise ConfigError("[grid] needs at least one [[grid.families]] entry")
    data = load_market(cfg, need_headlines=any(fs != TABULAR for fs in g.feature_sets))
    builder = make_dataset_builder(data.monthly, data.headlines, cfg.feature_columns)
    result = grid_search(g.templates, g.grids, builder, g.feature_sets, g.windows, cfg.initial_train, cfg.train_mode, cfg.workers)
    print(f"cells: {result.n_cells}")
    print(f"best-per-group rows: {len(result.best)}")
    for r in result.best:
        m = r.metrics
        r2 = "n/a" if m is None or m.r2 is None else f"{m.r2:.4f}"
        rmse = "n/a" if m is None else f"{m.rmse:.4f}"
        print(f"  {r.spec.name:<16} {r.spec.source:<12} w={r.spec.window_len:<3} r2={r2} rmse={rmse} {r.spec.hyperparams_key()}")
    return {"grid_cells.csv": runs_to_csv(result.cells), "grid_best.csv": runs_to_csv(result.best)}


def cmd_validate(cfg: RunConfig) -> dict[str, str]:
    if cfg.prices is None and cfg.headlines is None and cfg.predictions is None:
        raise ConfigError("nothing to validate: no data paths configured")
    if cfg.prices is not None:
        bars = load_prices(cfg.prices, cfg.price_schema)
        feats = sorted(bars[0].features) if bars else []
        print(f"prices: {len(bars)} rows, features: {', '.join(feats) or 'none'}")
    if cfg.headlines is not None:
        heads = load_headlines(cfg.headlines)
        print(f"headlines: {len(heads)} rows, sources: {', '.join(sorted({h.source for h in heads})) or 'none'}")
    if cfg.predictions is not None:
        preds = load_external_predictions(cfg.predictions)
        print(f"predictions: {len(preds)} months")
    if cfg.volatility is not None:
        vol = _volatility_override(cfg.volatility)
        print(f"volatility: {len(vol)} months")
    print("ok")
    return {}


COMMANDS = {
    "backtest": cmd_backtest,
    "regimes": cmd_regimes,
    "topics": cmd_topics,
    "grid": cmd_grid,
    "validate": cmd_validate,
}


# ---------------------------------------------------------------------------
# argument handling
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _subset_sizes(text: str) -> tuple[int, int]:
    for sep in ("-", ":", ","):
        if sep in text:
            lo, hi = text.split(sep, 1)
            return int(lo), int(hi)
    k = int(text)
    return k, k


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="commodity-backtest", description="Backtest sentiment and forecast trading strategies on monthly prices.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help=f"TOML run configuration (default: ${CONFIG_ENV})")
    p.add_argument("--out-dir", help="output directory (overrides output.dir)")
    p.add_argument("--strategy", choices=STRATEGIES)
    p.add_argument("--source", help="restrict headlines to one source")
    p.add_argument("--window", type=int, help="forecaster window length in months")
    p.add_argument("--subset-sizes", help="topic subset size range, e.g. 2-11")
    p.add_argument("--workers", type=int, help="parallel workers for grid and subset evaluation")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    if args.out_dir:
        cfg.out_dir = Path(args.out_dir)
    if args.strategy:
        cfg.strategy = args.strategy
    if args.source:
        src = args.source.lower()
        cfg.filter = HeadlineFilter(sources=frozenset({src}), topics=cfg.filter.topics, event_types=cfg.filter.event_types)
        cfg.grid.feature_sets = [TABULAR, f"{TABULAR}+{src}"]
    if args.window is not None:
        if cfg.forecaster is not None:
            cfg.forecaster = replace(cfg.forecaster, window_len=args.window)
        cfg.grid.windows = [args.window]
    if args.subset_sizes:
        try:
            cfg.subset_sizes = _subset_sizes(args.subset_sizes)
        except ValueError:
            raise ConfigError(f"bad --subset-sizes {args.subset_sizes!r}; use e.g. 2-11") from None
    if args.workers is not None:
        cfg.workers = args.workers
    return cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
        config_path = args.config or os.environ.get(CONFIG_ENV)
        if not config_path:
            raise ConfigError(f"no config given; pass --config or set {CONFIG_ENV}")
        cfg = apply_overrides(load_config(config_path), args)
        cfg.validate()
        files = COMMANDS[args.command](cfg)
        if files:
            written = write_outputs(cfg.out_dir, files)
            for p in written:
                print(f"wrote {p}")
        return EXIT_OK
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except BacktestError as exc:
        print(f"computation error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
