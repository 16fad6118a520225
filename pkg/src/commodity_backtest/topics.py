"""Topic- and event-filtered sentiment portfolios and exhaustive topic-subset search.

A topic portfolio trades only in months where at least one matching
headline exists; other months carry no position and contribute no return.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DataError
from .evaluation import RiskFree, StrategyReport, report_from_path, summarize
from .ingest import EVENT_TYPES, TOPICS, UNLABELED, HeadlineRecord, MonthlySeries, prev_month
from .sentiment import ALL_PASS, HeadlineFilter, monthly_score
from .strategy import PortfolioPath, sentiment_signal, simulate

DEFAULT_SIZE_RANGE = (1, len(TOPICS) - 1)


def _with(base: HeadlineFilter, **changes) -> HeadlineFilter:
    return HeadlineFilter(
        sources=changes.get("sources", base.sources),
        topics=changes.get("topics", base.topics),
        event_types=changes.get("event_types", base.event_types),
    )


def tradable_months(returns: MonthlySeries) -> list[str]:
    """Months ``t`` whose next-month return is known."""
    return [prev_month(m) for m in returns]


def sentiment_portfolio(
    headlines: Sequence[HeadlineRecord],
    flt: HeadlineFilter,
    returns: MonthlySeries,
    risk_free: RiskFree = 0.0,
    cost_per_switch: float = 0.0,
    metadata: Optional[dict] = None,
) -> tuple[StrategyReport, PortfolioPath]:
    """Sentiment-only strategy over the months that have matching headlines."""
    sent = monthly_score(headlines, flt).restrict(tradable_months(returns))
    path = simulate(sentiment_signal(sent), returns, cost_per_switch)
    return report_from_path(path, risk_free, metadata), path


def topic_portfolio(
    headlines: Sequence[HeadlineRecord],
    topic_set: Iterable[str],
    returns: MonthlySeries,
    base_filter: HeadlineFilter = ALL_PASS,
    risk_free: RiskFree = 0.0,
    cost_per_switch: float = 0.0,
) -> StrategyReport:
    topics = frozenset(topic_set)
    if not topics:
        raise DataError("topic set must be non-empty")
    meta = {"topics": [t for t in TOPICS if t in topics]}
    report, _ = sentiment_portfolio(headlines, _with(base_filter, topics=topics), returns, risk_free, cost_per_switch, meta)
    return report


# ---------------------------------------------------------------------------
# subset search
# ---------------------------------------------------------------------------

@dataclass
class SubsetResult:
    subset: tuple[str, ...]
    sharpe: Optional[float]
    n_months: int
    report: StrategyReport


@dataclass
class SubsetSearch:
    n_candidates: int
    results: list[SubsetResult]

    @property
    def best(self) -> Optional[SubsetResult]:
        return self.results[0] if self.results else None

    def to_csv(self, limit: Optional[int] = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["rank", "subset", "sharpe", "n_months", "cum_return"])
        for i, r in enumerate(self.results[:limit], 1):
            cum = r.report.cumulative_return
            w.writerow([i, "|".join(r.subset), "" if r.sharpe is None else repr(r.sharpe), r.n_months, "" if cum is None else repr(cum)])
        return buf.getvalue()


def candidate_count(n_topics: int, size_range: tuple[int, int]) -> int:
    lo, hi = size_range
    return sum(math.comb(n_topics, k) for k in range(lo, hi + 1))


class TopicCountCache:
    """Per-topic monthly (positive, negative, total) headline counts.

    A subset's monthly score is then a ratio of summed counts, so no
    headline is rescanned per subset.
    """

    def __init__(self, headlines: Sequence[HeadlineRecord], returns: MonthlySeries, universe: Sequence[str] = TOPICS, base_filter: HeadlineFilter = ALL_PASS):
        self.universe = tuple(universe)
        self.signal_months = tradable_months(returns)
        self.realized_months = returns.months()
        self.next_returns = np.asarray(returns.values(), dtype=float)
        pos = {t: i for i, t in enumerate(self.universe)}
        col = {m: j for j, m in enumerate(self.signal_months)}
        counts = np.zeros((len(self.universe), len(self.signal_months), 3), dtype=np.int64)
        for h in headlines:
            if h.topic not in pos or not base_filter.matches(h):
                continue
            j = col.get(h.month)
            if j is None:
                continue
            c = counts[pos[h.topic], j]
            if h.sentiment_label == "positive":
                c[0] += 1
            elif h.sentiment_label == "negative":
                c[1] += 1
            c[2] += 1
        self.counts = counts
        self._index = pos

    def evaluate(self, subset: Sequence[str], risk_free: RiskFree = 0.0, cost_per_switch: float = 0.0) -> SubsetResult:
        idx = sorted(self._index[t] for t in subset)
        c = self.counts[idx].sum(axis=0)
        active = c[:, 2] > 0
        signal = np.sign(c[:, 0] - c[:, 1])
        sel = np.flatnonzero(active)
        positions = signal[sel]
        asset = self.next_returns[sel]
        period = positions * asset
        if cost_per_switch:
            prior = np.zeros_like(positions)
            has_prev = sel > 0
            prev_idx = sel[has_prev] - 1
            prior[has_prev] = np.where(active[prev_idx], signal[prev_idx], 0)
            period = period - cost_per_switch * np.abs(positions - prior)
        months = [self.realized_months[j] for j in sel]
        names = tuple(self.universe[i] for i in idx)
        report = summarize(period.tolist(), positions.tolist(), asset.tolist(), risk_free, months, {"topics": list(names)})
        return SubsetResult(names, report.sharpe, len(sel), report)


def _subset_rank(r: SubsetResult, order: dict[str, int]):
    return (r.sharpe is None, -(r.sharpe or 0.0), len(r.subset), tuple(order[t] for t in r.subset))


def enumerate_topic_subsets(
    headlines: Sequence[HeadlineRecord],
    returns: MonthlySeries,
    universe: Sequence[str] = TOPICS,
    size_range: tuple[int, int] = DEFAULT_SIZE_RANGE,
    base_filter: HeadlineFilter = ALL_PASS,
    risk_free: RiskFree = 0.0,
    cost_per_switch: float = 0.0,
    workers: int = 1,
) -> SubsetSearch:
    """Evaluate every topic subset whose size lies in ``size_range``.

    The default range, 1 to ``len(universe) - 1``, covers all non-empty
    proper subsets. Results are ranked by Sharpe descending, then smaller
    subsets, then canonical topic order; undefined Sharpe ratios rank last.
    """
    lo, hi = size_range
    if not 1 <= lo <= hi <= len(universe):
        raise DataError(f"subset sizes must satisfy 1 <= min <= max <= {len(universe)}, got {size_range}")
    cache = TopicCountCache(headlines, returns, universe, base_filter)
    subsets = [s for k in range(lo, hi + 1) for s in itertools.combinations(cache.universe, k)]

    def run(s):
        return cache.evaluate(s, risk_free, cost_per_switch)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, subsets, chunksize=64))
    else:
        results = [run(s) for s in subsets]
    order = {t: i for i, t in enumerate(cache.universe)}
    results.sort(key=lambda r: _subset_rank(r, order))
    return SubsetSearch(len(subsets), results)


# ---------------------------------------------------------------------------
# event types and sources
# ---------------------------------------------------------------------------

def _has_any(headlines: Sequence[HeadlineRecord], flt: HeadlineFilter) -> bool:
    return any(flt.matches(h) for h in headlines)


def event_type_report(
    headlines: Sequence[HeadlineRecord],
    returns: MonthlySeries,
    base_filter: HeadlineFilter = ALL_PASS,
    per_topic: bool = False,
    risk_free: RiskFree = 0.0,
) -> dict:
    """Forward-looking vs occurred portfolios; an absent class maps to ``None``.

    With ``per_topic`` the same split is repeated inside every topic under
    the ``"by_topic"`` key.
    """

    def split(flt: HeadlineFilter) -> dict[str, Optional[StrategyReport]]:
        out = {}
        for et in EVENT_TYPES:
            f = _with(flt, event_types=frozenset({et}))
            if not _has_any(headlines, f):
                out[et] = None
                continue
            meta = {"event_type": et, "topics": sorted(f.topics)}
            out[et], _ = sentiment_portfolio(headlines, f, returns, risk_free, metadata=meta)
        return out

    result: dict = split(base_filter)
    if per_topic:
        result["by_topic"] = {t: split(_with(base_filter, topics=frozenset({t}))) for t in TOPICS}
    return result


def improvement_pct(other: Optional[float], benchmark: Optional[float]) -> Optional[float]:
    """Relative Sharpe change versus the benchmark, scaled by ``|benchmark|``."""
    if other is None or benchmark is None or benchmark == 0.0:
        return None
    return (other - benchmark) / abs(benchmark) * 100.0


@dataclass
class SourceComparison:
    sources: list[str]
    benchmark: str
    sharpe: dict[str, dict[str, Optional[float]]]  # topic -> source -> Sharpe
    overall: dict[str, StrategyReport] = field(default_factory=dict)

    def improvement(self, topic: str, source: str) -> Optional[float]:
        row = self.sharpe[topic]
        return improvement_pct(row.get(source), row.get(self.benchmark))

    def to_csv(self) -> str:
        others = [s for s in self.sources if s != self.benchmark]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["topic"] + [f"{s}_sharpe" for s in self.sources] + [f"{s}_vs_{self.benchmark}_pct" for s in others])
        fmt = lambda v: "" if v is None else repr(v)
        for topic, row in self.sharpe.items():
            w.writerow([topic] + [fmt(row.get(s)) for s in self.sources] + [fmt(self.improvement(topic, s)) for s in others])
        return buf.getvalue()


def source_comparison(
    headlines: Sequence[HeadlineRecord],
    returns: MonthlySeries,
    sources: Optional[Sequence[str]] = None,
    benchmark: Optional[str] = None,
    risk_free: RiskFree = 0.0,
) -> SourceComparison:
    """Sharpe of every (topic, source) portfolio plus per-source all-topic rows.

    The ``all_topics`` row holds each source's unfiltered portfolio. Cells
    without any matching headline are ``None``.
    """
    if sources is None:
        sources = sorted({h.source for h in headlines})
    sources = [s.lower() for s in sources]
    if not sources:
        raise DataError("no sources to compare")
    benchmark = (benchmark or sources[0]).lower()
    if benchmark not in sources:
        raise DataError(f"benchmark source {benchmark!r} not among {sources}")

    sharpe: dict[str, dict[str, Optional[float]]] = {"all_topics": {}}
    overall = {}
    for s in sources:
        f = HeadlineFilter(sources=frozenset({s}))
        report, _ = sentiment_portfolio(headlines, f, returns, risk_free, metadata={"source": s})
        overall[s] = report
        sharpe["all_topics"][s] = report.sharpe
    for t in TOPICS:
        row = {}
        for s in sources:
            f = HeadlineFilter(sources=frozenset({s}), topics=frozenset({t}))
            row[s] = sentiment_portfolio(headlines, f, returns, risk_free)[0].sharpe if _has_any(headlines, f) else None
        sharpe[t] = row
    return SourceComparison(sources, benchmark, sharpe, overall)


def has_topic_labels(headlines: Iterable[HeadlineRecord]) -> bool:
    return any(h.topic != UNLABELED for h in headlines)
