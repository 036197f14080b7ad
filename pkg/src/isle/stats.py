"""AUROC, paired one-tailed t-test and the Shapiro-Wilk W test (AS R94)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import Sequence, Tuple

import numpy as np

__all__ = [
    "AurocResult",
    "TTestResult",
    "UndefinedAurocError",
    "DegenerateTestError",
    "auroc",
    "auroc_summary",
    "betainc_regularized",
    "t_cdf",
    "paired_t_test_one_tailed",
    "shapiro_wilk",
]

_NORMAL = NormalDist()


class UndefinedAurocError(ValueError):
    """Labels contain a single class, so no positive/negative pairs exist."""


class DegenerateTestError(ValueError):
    """Paired differences have zero variance; the t statistic is undefined."""


@dataclass(frozen=True)
class AurocResult:
    per_label: Tuple[float, ...]
    mean: float
    std: float


@dataclass(frozen=True)
class TTestResult:
    t_statistic: float
    dof: int
    p_value: float


def auroc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Mann-Whitney AUROC: (concordant + 0.5 * tied) / (P * N).

    Computed from midranks, which counts exactly the same pairs as the
    all-pairs definition in O(n log n).
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = int(y.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAurocError("AUROC needs at least one positive and one negative label")

    order = np.argsort(s, kind="mergesort")
    sorted_s = s[order]
    # midranks (1-based) for tied groups
    boundaries = np.flatnonzero(np.diff(sorted_s)) + 1
    starts = np.concatenate([[0], boundaries])
    ends = np.concatenate([boundaries, [s.size]])
    mid = (starts + ends + 1) / 2.0
    ranks = np.empty(s.size)
    ranks[order] = np.repeat(mid, ends - starts)

    # sum of positive ranks minus its minimum is 2x the concordance count in half-units
    u2 = 2.0 * ranks[pos].sum() - n_pos * (n_pos + 1)
    return float(u2 / (2.0 * n_pos * n_neg))


def auroc_summary(per_label: Sequence[float]) -> AurocResult:
    v = np.asarray(per_label, dtype=np.float64)
    std = float(v.std(ddof=1)) if v.size > 1 else 0.0
    return AurocResult(tuple(float(x) for x in v), float(v.mean()), std)


# -- t distribution ----------------------------------------------------------


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    tiny = 1e-300
    eps = 1e-16
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 10000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def betainc_regularized(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and 0 <= x <= 1."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    ln_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    # the continued fraction converges fast only on one side of the mean
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_cdf(t: float, dof: float) -> float:
    """Student-t CDF via I_{v/(v+t^2)}(v/2, 1/2)."""
    if dof <= 0:
        raise ValueError("dof must be positive")
    if math.isinf(t):
        return 1.0 if t > 0 else 0.0
    if t == 0.0:
        return 0.5
    x = dof / (dof + t * t)
    tail = 0.5 * betainc_regularized(dof / 2.0, 0.5, x)
    return tail if t < 0 else 1.0 - tail


def paired_t_test_one_tailed(candidate, reference) -> TTestResult:
    """H1: mean(candidate) < mean(reference). Small p means the candidate is worse."""
    c = np.asarray(candidate, dtype=np.float64)
    r = np.asarray(reference, dtype=np.float64)
    if c.shape != r.shape or c.ndim != 1:
        raise ValueError("candidate and reference must be 1-D vectors of equal length")
    n = c.size
    if n < 2:
        raise ValueError("paired t-test needs at least 2 pairs")
    e = c - r
    if np.all(e == e[0]):
        raise DegenerateTestError("paired differences have zero variance")
    sd = float(e.std(ddof=1))
    t = float(e.mean()) / (sd / math.sqrt(n))
    p = min(1.0, max(0.0, t_cdf(t, n - 1)))
    return TTestResult(t, n - 1, p)


# -- Shapiro-Wilk (Royston 1995, AS R94) -------------------------------------

_C1 = (0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056)
_C2 = (0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633)
_C3 = (0.544, -0.39978, 0.025054, -6.714e-4)
_C4 = (1.3822, -0.77857, 0.062767, -0.0020322)
_C5 = (-1.5861, -0.31082, -0.083751, 0.0038915)
_C6 = (-0.4803, -0.082676, 0.0030302)
_G = (-2.273, 0.459)


def _poly(cc, x):
    # cc[0] + cc[1]*x + cc[2]*x**2 + ...
    out = 0.0
    for c in reversed(cc):
        out = out * x + c
    return out


def _swilk_coefficients(n: int) -> np.ndarray:
    """Upper-half weights a_1..a_{n//2} (positive, a_1 largest)."""
    nn2 = n // 2
    a = np.zeros(nn2)
    if n == 3:
        a[0] = math.sqrt(0.5)
        return a
    an25 = n + 0.25
    m = np.array([_NORMAL.inv_cdf((i - 0.375) / an25) for i in range(1, nn2 + 1)])
    summ2 = 2.0 * float(np.sum(m * m))
    ssumm2 = math.sqrt(summ2)
    rsn = 1.0 / math.sqrt(n)
    a1 = _poly(_C1, rsn) - m[0] / ssumm2
    if n > 5:
        i1 = 2
        a2 = -m[1] / ssumm2 + _poly(_C2, rsn)
        fac = math.sqrt(
            (summ2 - 2.0 * m[0] ** 2 - 2.0 * m[1] ** 2) / (1.0 - 2.0 * a1 ** 2 - 2.0 * a2 ** 2)
        )
        a[1] = a2
    else:
        i1 = 1
        fac = math.sqrt((summ2 - 2.0 * m[0] ** 2) / (1.0 - 2.0 * a1 ** 2))
    a[0] = a1
    a[i1:] = -m[i1:] / fac
    return a


def shapiro_wilk(sample) -> Tuple[float, float]:
    """Return (W, p) for 3 <= n <= 5000."""
    x = np.sort(np.asarray(sample, dtype=np.float64))
    n = x.size
    if not 3 <= n <= 5000:
        raise ValueError(f"Shapiro-Wilk needs 3 <= n <= 5000, got {n}")
    rng = x[-1] - x[0]
    if rng <= 0:
        raise ValueError("sample has zero range")
    # scale by the range, as AS R94 does, to keep sums well conditioned
    x = (x - x[0]) / rng
    a = _swilk_coefficients(n)
    nn2 = n // 2
    num = float(np.dot(a, x[::-1][:nn2] - x[:nn2]))
    ssq = float(np.sum((x - x.mean()) ** 2))
    w = min(1.0, num * num / ssq)
    return w, _swilk_pvalue(w, n)


def _swilk_pvalue(w: float, n: int) -> float:
    if n == 3:
        # exact null distribution for n = 3
        pw = (6.0 / math.pi) * (math.asin(math.sqrt(w)) - math.pi / 3.0)
        return max(pw, 0.0)
    w1 = 1.0 - w
    if w1 <= 0.0:
        return 1.0
    y = math.log(w1)
    xx = math.log(n)
    if n <= 11:
        gamma = _poly(_G, n)
        if y >= gamma:
            return 1e-99
        y = -math.log(gamma - y)
        m = _poly(_C3, n)
        s = math.exp(_poly(_C4, n))
    else:
        m = _poly(_C5, xx)
        s = math.exp(_poly(_C6, xx))
    return 0.5 * math.erfc((y - m) / s / math.sqrt(2.0))
