"""Volatility regimes from rolling return dispersion."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import ComputationError
from .evaluation import RiskFree, StrategyReport, summarize
from .ingest import MonthlySeries
from .strategy import PortfolioPath

REGIMES = ("low", "medium", "high")
DEFAULT_FRACTIONS = (0.20, 0.50)


@dataclass
class RegimePartition:
    vol_series: MonthlySeries
    thresholds: tuple[float, float]
    labels: dict[str, str]
    counts: dict[str, int]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["month", "volatility", "regime"])
        for m, v in self.vol_series.items():
            w.writerow([m, repr(v), self.labels[m]])
        return buf.getvalue()


def rolling_volatility(returns: MonthlySeries, window: int = 6, periods_per_year: int = 12) -> MonthlySeries:
    """Trailing sample standard deviation of returns, annualized.

    Month ``t`` is labeled with the deviation of the ``window`` returns
    ending at ``t``; months without a full window are omitted.
    """
    if window < 2:
        raise ComputationError("rolling volatility window must be at least 2")
    months = returns.months()
    r = np.asarray(returns.values(), dtype=float)
    if r.size < window:
        return MonthlySeries(label="volatility")
    scale = math.sqrt(periods_per_year)
    out = []
    for end in range(window - 1, r.size):
        chunk = r[end - window + 1 : end + 1]
        sd = 0.0 if np.ptp(chunk) == 0.0 else float(np.std(chunk, ddof=1))
        out.append((months[end], sd * scale))
    return MonthlySeries(out, "volatility")


def regime_thresholds(vol: MonthlySeries, fractions: tuple[float, float] = DEFAULT_FRACTIONS) -> tuple[float, float]:
    """Cut points at fixed fractions of the observed volatility range."""
    lo_frac, hi_frac = fractions
    if not 0.0 <= lo_frac < hi_frac <= 1.0:
        raise ComputationError(f"regime fractions must satisfy 0 <= low < high <= 1, got {fractions}")
    vals = vol.values()
    if not vals:
        raise ComputationError("empty volatility series")
    v_min, v_max = min(vals), max(vals)
    if v_max == v_min:
        raise ComputationError("volatility range is degenerate (all values equal)")
    span = v_max - v_min
    return v_min + lo_frac * span, v_min + hi_frac * span


def classify(v: float, thresholds: tuple[float, float]) -> str:
    t1, t2 = thresholds
    if v <= t1:
        return "low"
    if v <= t2:
        return "medium"
    return "high"


def classify_regimes(vol: MonthlySeries, thresholds: tuple[float, float]) -> RegimePartition:
    t1, t2 = thresholds
    if not t1 < t2:
        raise ComputationError(f"thresholds must be increasing, got {thresholds}")
    labels = {m: classify(v, thresholds) for m, v in vol.items()}
    counts = {r: 0 for r in REGIMES}
    for lab in labels.values():
        counts[lab] += 1
    return RegimePartition(vol, (t1, t2), labels, counts)


def regime_report(
    path: PortfolioPath,
    partition: RegimePartition,
    risk_free: RiskFree = 0.0,
) -> dict[str, StrategyReport]:
    """One report per regime from the path's returns.

    Each period return is assigned the regime of the month it is realized
    in; returns in unlabeled months are dropped. Regimes with fewer than two
    returns come back with ``status == "insufficient data"``.
    """
    groups: dict[str, list[str]] = {r: [] for r in REGIMES}
    for m in path.period_returns:
        lab = partition.labels.get(m)
        if lab is not None:
            groups[lab].append(m)

    out = {}
    asset = path.asset_returns
    for regime, months in groups.items():
        out[regime] = summarize(
            [path.period_returns[m] for m in months],
            [path.positions[m] for m in months],
            [asset[m] for m in months] if asset is not None else None,
            risk_free,
            months,
            {"regime": regime},
        )
    return out


def partition_from_returns(
    returns: MonthlySeries,
    window: int = 6,
    fractions: tuple[float, float] = DEFAULT_FRACTIONS,
    thresholds: Optional[Union[tuple[float, float], list[float]]] = None,
) -> RegimePartition:
    vol = rolling_volatility(returns, window)
    if thresholds is None:
        return partition_with_fractions(vol, fractions)
    return classify_regimes(vol, tuple(thresholds))


def partition_with_fractions(vol: MonthlySeries, fractions: tuple[float, float] = DEFAULT_FRACTIONS) -> RegimePartition:
    """Threshold and classify; a constant volatility series is all ``low``.

    With no range to split, both cut points collapse onto the single observed
    value and the ``v <= t1`` rule puts every month in the low regime.
    """
    vals = vol.values()
    if vals and min(vals) == max(vals):
        v = vals[0]
        counts = {r: 0 for r in REGIMES}
        counts["low"] = len(vals)
        return RegimePartition(vol, (v, v), {m: "low" for m in vol}, counts)
    return classify_regimes(vol, regime_thresholds(vol, fractions))
