from datetime import date
from pathlib import Path

import numpy as np
import pytest

from commodity_backtest.ingest import TOPICS, HeadlineRecord, MonthlySeries, month_from_index, month_index

DEMO = Path(__file__).resolve().parent.parent / "demo" / "worked_examples"


def months_from(start: str, n: int) -> list[str]:
    i = month_index(start)
    return [month_from_index(i + k) for k in range(n)]


def series(start: str, values, label="") -> MonthlySeries:
    return MonthlySeries(list(zip(months_from(start, len(values)), values)), label)


def headline(month: str, label: str, source="reuters", topic="unlabeled", event_type="unlabeled", day=15, text="h"):
    y, m = map(int, month.split("-"))
    return HeadlineRecord(date(y, m, day), source, text, label, topic, event_type)


def synthetic_corpus(n_months=206, seed=7, per_month=(0, 6), sources=("reuters",)):
    """Random labeled headlines over n_months plus a matching return series."""
    rng = np.random.default_rng(seed)
    months = months_from("2007-01", n_months + 1)
    rets = series(months[1], rng.normal(0.003, 0.05, n_months).tolist(), "return")
    heads = []
    labels = ("positive", "neutral", "negative")
    events = ("forward_looking", "occurred")
    for m in months[:-1]:
        for _ in range(rng.integers(*per_month, endpoint=True)):
            heads.append(headline(
                m,
                labels[rng.integers(3)],
                source=sources[rng.integers(len(sources))],
                topic=TOPICS[rng.integers(len(TOPICS))],
                event_type=events[rng.integers(2)],
                day=int(rng.integers(1, 28)),
            ))
    return heads, rets


@pytest.fixture
def demo_dir():
    return DEMO


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion, then assert it."""

    def check(number, name, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {name}" + (f" ({detail})" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return check


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
