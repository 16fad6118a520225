"""Loading, imputation and monthly resampling of price and headline tables.

Month keys are canonical ``YYYY-MM`` strings throughout the package; they
sort lexicographically in calendar order, which the rest of the code relies on.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Callable, Iterable, Iterator, Mapping, Optional

from .errors import DataError

SENTIMENT_LABELS = ("positive", "neutral", "negative")

TOPICS = (
    "price_movement",
    "environmental",
    "market_analysis",
    "production_output",
    "macroeconomic",
    "inventory_stocks",
    "demand_outlook",
    "supply_disruption",
    "company_news",
    "trade_policy",
    "geopolitical",
    "other",
)
EVENT_TYPES = ("forward_looking", "occurred")
UNLABELED = "unlabeled"

_MONTH_RE = re.compile(r"^(\d{4})-(\d{2})$")


# ---------------------------------------------------------------------------
# month keys
# ---------------------------------------------------------------------------

def month_key(d: date) -> str:
    return f"{d.year:04d}-{d.month:02d}"


def parse_month(key: str) -> tuple[int, int]:
    m = _MONTH_RE.match(key)
    if not m or not 1 <= int(m.group(2)) <= 12:
        raise DataError(f"invalid month key {key!r}; expected YYYY-MM")
    return int(m.group(1)), int(m.group(2))


def month_index(key: str) -> int:
    """Months since year 0, so consecutive months differ by exactly 1."""
    y, m = parse_month(key)
    return y * 12 + (m - 1)


def month_from_index(idx: int) -> str:
    return f"{idx // 12:04d}-{idx % 12 + 1:02d}"


def shift_month(key: str, n: int) -> str:
    return month_from_index(month_index(key) + n)


def next_month(key: str) -> str:
    return shift_month(key, 1)


def prev_month(key: str) -> str:
    return shift_month(key, -1)


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DailyBar:
    """One trading day. ``None`` marks a missing value before imputation."""

    date: date
    close: Optional[float]
    features: Mapping[str, Optional[float]] = field(default_factory=dict)


@dataclass(frozen=True)
class HeadlineRecord:
    date: date
    source: str
    text: str
    sentiment_label: str
    topic: str = UNLABELED
    event_type: str = UNLABELED

    def __post_init__(self):
        if self.sentiment_label not in SENTIMENT_LABELS:
            raise DataError(f"invalid sentiment label {self.sentiment_label!r}")
        if self.topic != UNLABELED and self.topic not in TOPICS:
            raise DataError(f"invalid topic {self.topic!r}")
        if self.event_type != UNLABELED and self.event_type not in EVENT_TYPES:
            raise DataError(f"invalid event type {self.event_type!r}")

    @property
    def month(self) -> str:
        return month_key(self.date)


class MonthlySeries:
    """Ordered, possibly sparse mapping of month key to value.

    A month absent from the series is *missing*, which is distinct from a
    stored value of 0.
    """

    __slots__ = ("_entries", "label")

    def __init__(self, entries: Mapping[str, float] | Iterable[tuple[str, float]] = (), label: str = ""):
        items = list(entries.items()) if isinstance(entries, Mapping) else list(entries)
        prev = None
        for key, _ in items:
            parse_month(key)
            if prev is not None and key <= prev:
                raise DataError(f"month keys must be strictly increasing ({prev} then {key})")
            prev = key
        self._entries = {k: float(v) for k, v in items}
        self.label = label

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, month: str) -> bool:
        return month in self._entries

    def __getitem__(self, month: str) -> float:
        return self._entries[month]

    def __iter__(self) -> Iterator[str]:
        return iter(self._entries)

    def __eq__(self, other) -> bool:
        if not isinstance(other, MonthlySeries):
            return NotImplemented
        return self._entries == other._entries and self.label == other.label

    def __repr__(self) -> str:
        return f"MonthlySeries({self.label!r}, {len(self)} months)"

    def get(self, month: str, default: Optional[float] = None) -> Optional[float]:
        return self._entries.get(month, default)

    def months(self) -> list[str]:
        return list(self._entries)

    def values(self) -> list[float]:
        return list(self._entries.values())

    def items(self) -> list[tuple[str, float]]:
        return list(self._entries.items())

    def to_dict(self) -> dict[str, float]:
        return dict(self._entries)

    def is_contiguous(self) -> bool:
        idx = [month_index(m) for m in self._entries]
        return all(b - a == 1 for a, b in zip(idx, idx[1:]))

    def restrict(self, months: Iterable[str]) -> "MonthlySeries":
        keep = set(months)
        return MonthlySeries([(m, v) for m, v in self._entries.items() if m in keep], self.label)


# ---------------------------------------------------------------------------
# price table
# ---------------------------------------------------------------------------

def _parse_float(raw: str, column: str, line: int, path) -> Optional[float]:
    raw = raw.strip()
    if raw == "":
        return None
    try:
        value = float(raw)
    except ValueError:
        raise DataError(f"{path}:{line}: non-numeric value {raw!r} in column {column!r}") from None
    if not math.isfinite(value):
        raise DataError(f"{path}:{line}: non-finite value {raw!r} in column {column!r}")
    return value


def _parse_date(raw: str, line: int, path) -> date:
    try:
        return date.fromisoformat(raw.strip())
    except ValueError:
        raise DataError(f"{path}:{line}: malformed date {raw!r}") from None


def load_prices(path, schema: Optional[Mapping[str, str]] = None) -> list[DailyBar]:
    """Read a daily price CSV into bars sorted by date.

    ``schema`` maps the canonical names ``date`` and ``close`` to the file's
    column headers; every other column is treated as a named feature. An
    empty cell is a missing value.
    """
    schema = dict(schema or {})
    date_col = schema.get("date", "date")
    close_col = schema.get("close", "close")
    path = Path(path)
    if not path.exists():
        raise DataError(f"price file not found: {path}")

    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        for col in (date_col, close_col):
            if col not in header:
                raise DataError(f"{path}: missing required column {col!r}")
        di, ci = header.index(date_col), header.index(close_col)
        feature_cols = [(i, h) for i, h in enumerate(header) if i not in (di, ci)]

        bars = []
        seen: dict[date, int] = {}
        for row in reader:
            line = reader.line_num
            if not any(cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{line}: expected {len(header)} fields, got {len(row)}")
            d = _parse_date(row[di], line, path)
            if d in seen:
                raise DataError(f"{path}:{line}: duplicate date {d.isoformat()} (first seen on line {seen[d]})")
            seen[d] = line
            close = _parse_float(row[ci], close_col, line, path)
            features = {name: _parse_float(row[i], name, line, path) for i, name in feature_cols}
            bars.append(DailyBar(d, close, features))

    bars.sort(key=lambda b: b.date)
    return bars


def impute_missing(bars: list[DailyBar]) -> list[DailyBar]:
    """Forward-fill then backward-fill every column independently."""
    if not bars:
        return []
    names = list(bars[0].features)
    columns = {"close": [b.close for b in bars]}
    for name in names:
        columns[name] = [b.features.get(name) for b in bars]

    for name, col in columns.items():
        if all(v is None for v in col):
            raise DataError(f"column {name!r} has no non-missing values")
        last = None
        for i, v in enumerate(col):
            if v is None:
                col[i] = last
            else:
                last = v
        first = next(v for v in col if v is not None)
        for i, v in enumerate(col):
            if v is not None:
                break
            col[i] = first

    out = []
    for i, b in enumerate(bars):
        close = columns["close"][i]
        if close <= 0:
            raise DataError(f"non-positive close {close} on {b.date.isoformat()}")
        out.append(DailyBar(b.date, close, {n: columns[n][i] for n in names}))
    return out


def _mean(xs):
    return math.fsum(xs) / len(xs)


AGGREGATORS: dict[str, Callable[[list[float]], float]] = {
    "last": lambda xs: xs[-1],
    "first": lambda xs: xs[0],
    "mean": _mean,
    "max": max,
    "min": min,
}


def resample_monthly(bars: list[DailyBar], close_rule: str = "last", feature_rule: str = "mean") -> dict[str, MonthlySeries]:
    """Aggregate imputed daily bars into one monthly series per column.

    The returned dict has key ``"close"`` plus one key per feature column.
    """
    for rule in (close_rule, feature_rule):
        if rule not in AGGREGATORS:
            raise DataError(f"unknown aggregation rule {rule!r}; choose from {sorted(AGGREGATORS)}")
    if not bars:
        return {"close": MonthlySeries(label="close")}

    names = list(bars[0].features)
    buckets: dict[str, dict[str, list[float]]] = {}
    for b in sorted(bars, key=lambda b: b.date):
        if b.close is None or any(b.features.get(n) is None for n in names):
            raise DataError(f"missing value on {b.date.isoformat()}; impute before resampling")
        bucket = buckets.setdefault(month_key(b.date), {"close": [], **{n: [] for n in names}})
        bucket["close"].append(b.close)
        for n in names:
            bucket[n].append(b.features[n])

    months = sorted(buckets)
    out = {"close": MonthlySeries([(m, AGGREGATORS[close_rule](buckets[m]["close"])) for m in months], "close")}
    for n in names:
        out[n] = MonthlySeries([(m, AGGREGATORS[feature_rule](buckets[m][n])) for m in months], n)
    return out


def simple_returns(prices: MonthlySeries, allow_gaps: bool = False) -> MonthlySeries:
    """Month-over-month simple returns keyed to the later month.

    With ``allow_gaps`` a return is produced only for months whose previous
    calendar month is present, instead of rejecting the series.
    """
    if len(prices) < 2:
        raise DataError("at least two months of prices are needed for returns")
    if not allow_gaps and not prices.is_contiguous():
        raise DataError("price series has gaps; returns require contiguous months")
    items = prices.items()
    out = [
        (m1, p1 / p0 - 1.0)
        for (m0, p0), (m1, p1) in zip(items, items[1:])
        if month_index(m1) - month_index(m0) == 1
    ]
    if not out:
        raise DataError("no two consecutive months of prices")
    return MonthlySeries(out, f"{prices.label}_return" if prices.label else "return")


# ---------------------------------------------------------------------------
# headline table
# ---------------------------------------------------------------------------

def _norm_label(raw: str) -> str:
    return re.sub(r"[\s\-]+", "_", raw.strip().lower())


def load_headlines(path) -> list[HeadlineRecord]:
    """Read a labeled headline CSV.

    Required columns: ``date``, ``source``, ``text``, ``sentiment``. The
    optional ``topic`` and ``event_type`` columns default to ``unlabeled``
    when absent or empty. Topic names are accepted in either canonical form
    (``price_movement``) or display form (``Price Movement``).
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"headline file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty file")
        fields = [f.strip() for f in reader.fieldnames]
        reader.fieldnames = fields
        for col in ("date", "source", "text", "sentiment"):
            if col not in fields:
                raise DataError(f"{path}: missing required column {col!r}")

        records = []
        for row in reader:
            line = reader.line_num
            d = _parse_date(row["date"] or "", line, path)
            label = _norm_label(row["sentiment"] or "")
            if label not in SENTIMENT_LABELS:
                raise DataError(f"{path}:{line}: sentiment must be one of {SENTIMENT_LABELS}, got {row['sentiment']!r}")
            topic = _norm_label(row.get("topic") or "") or UNLABELED
            if topic not in TOPICS and topic != UNLABELED:
                raise DataError(f"{path}:{line}: unknown topic {row['topic']!r}")
            event = _norm_label(row.get("event_type") or "") or UNLABELED
            if event not in EVENT_TYPES and event != UNLABELED:
                raise DataError(f"{path}:{line}: unknown event_type {row['event_type']!r}")
            source = (row["source"] or "").strip().lower()
            if not source:
                raise DataError(f"{path}:{line}: empty source")
            records.append(HeadlineRecord(d, source, row["text"] or "", label, topic, event))
    records.sort(key=lambda r: r.date)
    return records
