"""Headline label scoring, filtering and monthly aggregation."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable

from .errors import DataError
from .ingest import EVENT_TYPES, SENTIMENT_LABELS, TOPICS, HeadlineRecord, MonthlySeries

_SCORES = {"positive": 1, "neutral": 0, "negative": -1}


def label_to_score(label: str) -> int:
    return _SCORES[label]


@dataclass(frozen=True)
class HeadlineFilter:
    """Membership filter; an empty set lets every value through."""

    sources: frozenset[str] = field(default_factory=frozenset)
    topics: frozenset[str] = field(default_factory=frozenset)
    event_types: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "sources", frozenset(s.lower() for s in self.sources))
        object.__setattr__(self, "topics", frozenset(self.topics))
        object.__setattr__(self, "event_types", frozenset(self.event_types))
        bad = self.topics - set(TOPICS)
        if bad:
            raise DataError(f"unknown topics in filter: {sorted(bad)}")
        bad = self.event_types - set(EVENT_TYPES)
        if bad:
            raise DataError(f"unknown event types in filter: {sorted(bad)}")

    def matches(self, rec: HeadlineRecord) -> bool:
        # "unlabeled" is never a member of a non-empty topic/event set
        return (
            (not self.sources or rec.source in self.sources)
            and (not self.topics or rec.topic in self.topics)
            and (not self.event_types or rec.event_type in self.event_types)
        )


ALL_PASS = HeadlineFilter()


def filter_headlines(headlines: Iterable[HeadlineRecord], flt: HeadlineFilter = ALL_PASS) -> list[HeadlineRecord]:
    return [h for h in headlines if flt.matches(h)]


def monthly_counts(headlines: Iterable[HeadlineRecord], flt: HeadlineFilter = ALL_PASS) -> dict[str, tuple[int, int, int]]:
    """Per-month ``(n_positive, n_negative, n_total)`` of matching headlines, sorted by month."""
    counts: dict[str, list[int]] = {}
    for h in headlines:
        if not flt.matches(h):
            continue
        c = counts.setdefault(h.month, [0, 0, 0])
        s = _SCORES[h.sentiment_label]
        if s > 0:
            c[0] += 1
        elif s < 0:
            c[1] += 1
        c[2] += 1
    return {m: tuple(counts[m]) for m in sorted(counts)}


def monthly_score(headlines: Iterable[HeadlineRecord], flt: HeadlineFilter = ALL_PASS, label: str = "sentiment") -> MonthlySeries:
    """Mean of the {-1, 0, +1} label scores per month.

    Months without a matching headline are left out rather than set to 0;
    use :func:`fill_neutral` to coerce them when a dense series is needed.
    """
    counts = monthly_counts(headlines, flt)
    return MonthlySeries([(m, (p - n) / t) for m, (p, n, t) in counts.items()], label)


def fill_neutral(scores: MonthlySeries, months: Iterable[str]) -> MonthlySeries:
    """Dense copy of ``scores`` over ``months`` with missing months set to 0."""
    return MonthlySeries([(m, scores.get(m, 0.0)) for m in sorted(set(months))], scores.label)


def scores_to_csv(headlines: Iterable[HeadlineRecord], flt: HeadlineFilter = ALL_PASS) -> str:
    """Render ``month,score,n_headlines`` CSV text for the filtered headlines."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["month", "score", "n_headlines"])
    for m, (p, n, t) in monthly_counts(headlines, flt).items():
        w.writerow([m, repr((p - n) / t), t])
    return buf.getvalue()


__all__ = [
    "SENTIMENT_LABELS",
    "HeadlineFilter",
    "ALL_PASS",
    "label_to_score",
    "filter_headlines",
    "monthly_counts",
    "monthly_score",
    "fill_neutral",
    "scores_to_csv",
]
