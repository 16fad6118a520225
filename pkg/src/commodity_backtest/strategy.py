"""Position signals and portfolio simulation.

A signal issued for month ``t`` uses information dated up to the end of
``t`` and earns the asset return realized over ``t -> t+1``, which
:func:`simple_returns` keys to month ``t+1``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

from .errors import DataError
from .ingest import MonthlySeries, next_month, prev_month

ORIGINS = ("sentiment_only", "price_based", "buy_and_hold", "custom")
START_VALUE = 100.0


def _sign(x: float) -> int:
    return (x > 0) - (x < 0)


@dataclass
class SignalSeries:
    entries: dict[str, int]
    origin: str = "custom"

    def __post_init__(self):
        bad = {m: v for m, v in self.entries.items() if v not in (-1, 0, 1)}
        if bad:
            raise DataError(f"signal values must be -1, 0 or +1: {bad}")
        self.entries = {m: int(self.entries[m]) for m in sorted(self.entries)}

    def __len__(self):
        return len(self.entries)

    def months(self) -> list[str]:
        return list(self.entries)

    def negated(self) -> "SignalSeries":
        return SignalSeries({m: -v for m, v in self.entries.items()}, self.origin)


@dataclass
class PortfolioPath:
    """Compounded strategy value path.

    ``values`` starts at 100 on the first signal month; every later key is a
    realization month. ``positions`` and ``asset_returns`` are keyed the same
    way as ``period_returns`` and record what earned each period's return.
    """

    values: MonthlySeries
    period_returns: MonthlySeries
    positions: dict[str, int] = field(default_factory=dict)
    asset_returns: Optional[MonthlySeries] = None

    @property
    def final_value(self) -> float:
        vals = self.values.values()
        return vals[-1] if vals else START_VALUE


def sentiment_signal(sent: MonthlySeries, months: Optional[Iterable[str]] = None, hold_last_signal: bool = False) -> SignalSeries:
    """Sign of the monthly sentiment score.

    Without ``months`` the signal covers exactly the months present in
    ``sent``. With a calendar, months lacking a score are flat, or carry the
    last observed position when ``hold_last_signal`` is set.
    """
    if months is None:
        return SignalSeries({m: _sign(v) for m, v in sent.items()}, "sentiment_only")
    out = {}
    last = 0
    for m in sorted(set(months)):
        if m in sent:
            last = _sign(sent[m])
            out[m] = last
        else:
            out[m] = last if hold_last_signal else 0
    return SignalSeries(out, "sentiment_only")


def price_signal(pred_next: float, true_now: float) -> int:
    if pred_next <= 0 or true_now <= 0:
        raise DataError(f"prices must be positive (predicted {pred_next}, current {true_now})")
    return _sign(pred_next - true_now)


def price_signals(predictions: MonthlySeries, closes: MonthlySeries) -> SignalSeries:
    """Signals for every month ``t`` having a close and a prediction for ``t+1``.

    ``predictions`` is keyed by the month being predicted.
    """
    out = {}
    for m, close in closes.items():
        nm = next_month(m)
        if nm in predictions:
            out[m] = price_signal(predictions[nm], close)
    return SignalSeries(out, "price_based")


def buy_and_hold(returns: MonthlySeries) -> SignalSeries:
    return SignalSeries({prev_month(m): 1 for m in returns}, "buy_and_hold")


def simulate(signals: SignalSeries, returns: MonthlySeries, cost_per_switch: float = 0.0) -> PortfolioPath:
    """Compound ``signal_t * R_{t+1}`` from a starting value of 100.

    A linear cost of ``cost_per_switch * |signal_t - signal_{t-1}|`` is
    charged against each period; the position before the first signal, or
    in a month without a signal, is flat. A flat signal whose next return is
    unavailable is dropped; an active one is an error.
    """
    months = signals.months()
    if not months:
        return PortfolioPath(MonthlySeries(label="value"), MonthlySeries(label="strategy_return"), {}, MonthlySeries(label="asset_return"))

    values = [(months[0], START_VALUE)]
    rets, asset, positions = [], [], {}
    v = START_VALUE
    for t in months:
        pos = signals.entries[t]
        realized = next_month(t)
        r_next = returns.get(realized)
        if r_next is None:
            if pos != 0:
                raise DataError(f"no return for {realized} to realize the {t} position {pos:+d}")
            continue
        prior = signals.entries.get(prev_month(t), 0)
        r = pos * r_next
        if cost_per_switch:
            r -= cost_per_switch * abs(pos - prior)
        v *= 1.0 + r
        values.append((realized, v))
        rets.append((realized, r))
        asset.append((realized, r_next))
        positions[realized] = pos

    return PortfolioPath(
        MonthlySeries(values, "value"),
        MonthlySeries(rets, "strategy_return"),
        positions,
        MonthlySeries(asset, "asset_return"),
    )


def path_to_csv(path: PortfolioPath) -> str:
    """``month,value,period_return,signal`` rows; ``signal`` is the position that earned the row's return."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["month", "value", "period_return", "signal"])
    for m, v in path.values.items():
        if m in path.period_returns:
            w.writerow([m, repr(v), repr(path.period_returns[m]), path.positions[m]])
        else:
            w.writerow([m, repr(v), "", ""])
    return buf.getvalue()


def plot_data_tsv(path: PortfolioPath, closes: Mapping[str, float] | MonthlySeries) -> str:
    """``month<TAB>portfolio_value<TAB>price_index`` with the price rebased to 100 at the path start."""
    months = path.values.months()
    if not months:
        return "month\tportfolio_value\tprice_index\n"
    base = closes[months[0]]
    lines = ["month\tportfolio_value\tprice_index"]
    for m, v in path.values.items():
        idx = repr(START_VALUE * closes[m] / base) if m in closes else ""
        lines.append(f"{m}\t{v!r}\t{idx}")
    return "\n".join(lines) + "\n"
