"""Performance statistics for strategy returns and directional signals."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Mapping, Optional, Sequence, Union

import numpy as np
from scipy import stats

from .errors import ComputationError, InsufficientDataError
from .ingest import MonthlySeries, next_month
from .strategy import PortfolioPath, SignalSeries

MONTHS_PER_YEAR = 12
OK = "ok"
INSUFFICIENT = "insufficient data"
UNDEFINED_SHARPE = "undefined sharpe"

RiskFree = Union[float, MonthlySeries]


@dataclass(frozen=True)
class SharpeResult:
    """Monthly Sharpe ratio with its asymptotic standard error.

    All three fields are ``None`` when the return series has zero
    dispersion.
    """

    sr: Optional[float]
    se: Optional[float]
    sr_annualized: Optional[float]

    @property
    def defined(self) -> bool:
        return self.sr is not None


@dataclass(frozen=True)
class HitRate:
    rate: float
    n_active: int
    hits: int
    p_value: float


@dataclass
class StrategyReport:
    cumulative_return: Optional[float]
    sharpe: Optional[float]
    sharpe_se: Optional[float]
    sharpe_annualized: Optional[float]
    hit_rate: Optional[float]
    p_value: Optional[float]
    n_months: int
    mean_return: Optional[float]
    stdev_return: Optional[float]
    n_active: int = 0
    status: str = OK
    metadata: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def _values(returns) -> list[float]:
    if isinstance(returns, MonthlySeries):
        return returns.values()
    return [float(r) for r in returns]


def cumulative_return(period_returns: MonthlySeries | Sequence[float]) -> float:
    """Total compounded growth, ``prod(1 + R_t) - 1``."""
    rs = _values(period_returns)
    if not rs:
        raise InsufficientDataError("cumulative return needs at least one period")
    if any(r <= -1.0 for r in rs):
        raise ComputationError("a period return of -100% or worse wipes out the portfolio")
    return math.prod(1.0 + r for r in rs) - 1.0


def _risk_free_array(risk_free: RiskFree, months: Optional[Sequence[str]], n: int) -> np.ndarray:
    if isinstance(risk_free, MonthlySeries):
        if months is None:
            raise ComputationError("a monthly risk-free series needs month-keyed returns")
        missing = [m for m in months if m not in risk_free]
        if missing:
            raise ComputationError(f"risk-free rate missing for {missing[:3]}")
        return np.array([risk_free[m] for m in months])
    return np.full(n, float(risk_free))


def sharpe(period_returns: MonthlySeries | Sequence[float], risk_free_monthly: RiskFree = 0.0) -> SharpeResult:
    """Sharpe ratio of monthly returns using the sample (n-1) standard deviation.

    With a constant risk-free rate this is ``(mean - rf) / s``; a monthly
    risk-free series is subtracted month by month before averaging.
    """
    months = period_returns.months() if isinstance(period_returns, MonthlySeries) else None
    r = np.asarray(_values(period_returns), dtype=float)
    n = r.size
    if n < 2:
        raise InsufficientDataError(f"Sharpe ratio needs at least 2 returns, got {n}")
    rf = _risk_free_array(risk_free_monthly, months, n)
    return _sharpe_arrays(r, rf)


def _sharpe_arrays(r: np.ndarray, rf: np.ndarray) -> SharpeResult:
    n = r.size
    s = 0.0 if np.ptp(r) == 0.0 else float(np.std(r, ddof=1))
    if s == 0.0:
        return SharpeResult(None, None, None)
    if np.ptp(rf) == 0.0:
        sr = (float(np.mean(r)) - float(rf[0])) / s
    else:
        sr = float(np.mean(r - rf)) / s
    return SharpeResult(sr, sharpe_standard_error(sr, n), sr * math.sqrt(MONTHS_PER_YEAR))


def sharpe_standard_error(sr: float, n: int) -> float:
    return math.sqrt((1.0 + sr * sr / 2.0) / n)


def binomial_p_value(hits: int, n: int) -> float:
    """Two-sided exact binomial test of ``hits ~ Binomial(n, 0.5)``.

    Sums the probability of every outcome no more likely than the observed
    one; with p = 0.5 the distribution is symmetric so this is twice the
    smaller tail.
    """
    if n < 1 or not 0 <= hits <= n:
        raise ComputationError(f"invalid binomial test: {hits} hits of {n}")
    tail = min(hits, n - hits)
    if 2 * tail == n:
        return 1.0
    return min(1.0, 2.0 * float(stats.binom.cdf(tail, n, 0.5)))


def _hits(positions: Sequence[int], asset_returns: Sequence[float]) -> tuple[int, int]:
    n_active = hits = 0
    for pos, r in zip(positions, asset_returns):
        if pos == 0:
            continue
        n_active += 1
        # a zero return is never a hit
        if (pos > 0 and r > 0) or (pos < 0 and r < 0):
            hits += 1
    return hits, n_active


def hit_rate(signals: SignalSeries, returns: MonthlySeries) -> HitRate:
    """Directional accuracy of active signals against the next month's return."""
    positions, realized = [], []
    for m, pos in signals.entries.items():
        nm = next_month(m)
        if pos != 0 and nm in returns:
            positions.append(pos)
            realized.append(returns[nm])
    hits, n_active = _hits(positions, realized)
    if n_active == 0:
        raise InsufficientDataError("no active signal months with a realized next return")
    return HitRate(hits / n_active, n_active, hits, binomial_p_value(hits, n_active))


def summarize(
    period_returns: Sequence[float],
    positions: Optional[Sequence[int]] = None,
    asset_returns: Optional[Sequence[float]] = None,
    risk_free: RiskFree = 0.0,
    months: Optional[Sequence[str]] = None,
    metadata: Optional[Mapping[str, Any]] = None,
) -> StrategyReport:
    """Build a full report from aligned per-period arrays.

    ``positions`` and ``asset_returns`` feed the hit-rate statistics; when
    omitted those fields stay ``None``.
    """
    r = np.asarray(period_returns, dtype=float)
    n = int(r.size)
    meta = dict(metadata or {})
    if n == 0:
        return StrategyReport(None, None, None, None, None, None, 0, None, None, 0, INSUFFICIENT, meta)

    cum = cumulative_return(r.tolist())
    mean = float(np.mean(r))
    rate = p = None
    n_active = 0
    if positions is not None and asset_returns is not None:
        hits, n_active = _hits(positions, asset_returns)
        if n_active:
            rate = hits / n_active
            p = binomial_p_value(hits, n_active)

    if n < 2:
        return StrategyReport(cum, None, None, None, rate, p, n, mean, None, n_active, INSUFFICIENT, meta)

    rf = _risk_free_array(risk_free, months, n)
    sr = _sharpe_arrays(r, rf)
    status = OK if sr.defined else UNDEFINED_SHARPE
    return StrategyReport(
        cum, sr.sr, sr.se, sr.sr_annualized, rate, p, n, mean, float(np.std(r, ddof=1)), n_active, status, meta
    )


def report_from_path(path: PortfolioPath, risk_free: RiskFree = 0.0, metadata: Optional[Mapping[str, Any]] = None) -> StrategyReport:
    months = path.period_returns.months()
    asset = path.asset_returns
    return summarize(
        path.period_returns.values(),
        [path.positions[m] for m in months],
        [asset[m] for m in months] if asset is not None else None,
        risk_free,
        months,
        metadata,
    )
