"""Independent reference implementations used only by the tests.

Everything here is written in plain Python (fractions, explicit loops) so
that it shares no code path with the package's numpy/scipy routines.
"""

import math
from fractions import Fraction


def binomial_two_sided(k, n):
    """Exact two-sided p-value: total probability of outcomes no likelier than k."""
    pmf = [Fraction(math.comb(n, i), 2**n) for i in range(n + 1)]
    observed = pmf[k]
    return float(sum(p for p in pmf if p <= observed))


def mean(xs):
    return math.fsum(xs) / len(xs)


def sample_std(xs):
    m = mean(xs)
    return math.sqrt(math.fsum((x - m) ** 2 for x in xs) / (len(xs) - 1))


def sharpe(xs, rf=0.0):
    return (mean(xs) - rf) / sample_std(xs)


def cumulative(xs):
    v = Fraction(1)
    for x in xs:
        v *= 1 + Fraction(x)
    return float(v - 1)


def r2_rmse_mae(y, yhat):
    n = len(y)
    ybar = mean(y)
    sse = math.fsum((a - b) ** 2 for a, b in zip(y, yhat))
    sst = math.fsum((a - ybar) ** 2 for a in y)
    return 1 - sse / sst, math.sqrt(sse / n), math.fsum(abs(a - b) for a, b in zip(y, yhat)) / n


def ar1_least_squares(xs, ys):
    """Closed-form simple regression y = c + a*x."""
    n = len(xs)
    mx, my = sum(xs) / n, sum(ys) / n
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    sxx = sum((x - mx) ** 2 for x in xs)
    a = sxy / sxx
    return my - a * mx, a
