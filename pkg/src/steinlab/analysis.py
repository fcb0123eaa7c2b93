"""Bound evaluators: Gronwall-type inequalities, the stability certificate,
the double-exponential particle schedule and constant calibration."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate as sp_integrate
from scipy import stats

INT64_MAX = 2**63 - 1
LOG_INT64_MAX = math.log(INT64_MAX)


@dataclass
class NormSeries:
    times: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape or self.times.ndim != 1:
            raise ValueError("times and values must be 1-D arrays of equal length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0):
            raise ValueError("values must be finite and nonnegative")

    def __len__(self):
        return self.times.size

    def scaled(self, factor: float) -> "NormSeries":
        return NormSeries(self.times, self.values * factor, dict(self.meta))


def riccati_bound(alpha: float, C: float, t: float) -> float:
    """alpha / (1 - C t alpha), or ``math.inf`` (blow-up) once the denominator is <= 0."""
    if alpha < 0 or C <= 0 or t < 0:
        raise ValueError("need alpha >= 0, C > 0, t >= 0")
    denom = 1.0 - C * t * alpha
    if denom <= 0:
        return math.inf
    return alpha / denom


@dataclass
class GronwallVerdict:
    passed: bool
    worst_margin: float
    worst_index: int
    bound: np.ndarray


def gronwall_backward_check(times, f, g, h, C: float, rtol: float = 1e-12) -> GronwallVerdict:
    """Check f(t) <= h(t) exp(C int_t^T g) at every sample (trapezoid rule for the integral).

    The margin is bound - f; the verdict allows a relative slack ``rtol``
    of the bound for rounding.
    """
    t = np.asarray(times, dtype=float)
    f, g, h = (np.broadcast_to(np.asarray(a, dtype=float), t.shape) for a in (f, g, h))
    if C < 0:
        raise ValueError("C must be nonnegative")
    if np.any(np.diff(t) <= 0):
        raise ValueError("times must be strictly increasing")
    if np.any(f < 0) or np.any(g < 0) or np.any(h < 0):
        raise ValueError("samples must be nonnegative")
    if np.any(np.diff(h) > 0):
        raise ValueError("h must be nonincreasing")
    cum = sp_integrate.cumulative_trapezoid(g, t, initial=0.0)
    tail = cum[-1] - cum
    bound = h * np.exp(C * tail)
    margin = bound - f
    k = int(np.argmin(margin))
    passed = bool(np.all(margin >= -rtol * np.maximum(bound, 1e-300)))
    return GronwallVerdict(passed, float(margin[k]), k, bound)


def stability_bound(m0: float, C: float, t):
    """B(t) = C (t+1) m0 / (1 - C (t+1) t m0); ``inf`` where the denominator is <= 0."""
    t = np.asarray(t, dtype=float)
    denom = 1.0 - C * (t + 1) * t * m0
    with np.errstate(divide="ignore"):
        return np.where(denom > 0, C * (t + 1) * m0 / np.where(denom > 0, denom, 1.0), np.inf)


def stability_horizon(N: float, C: float) -> float:
    """t* = sqrt(N / (2C)) - 1, the end of the guaranteed regime when m0 <= 1/N."""
    return math.sqrt(N / (2 * C)) - 1


@dataclass
class StabilityVerdict:
    passed: bool
    C: float
    m0: float
    bound: np.ndarray
    in_regime: np.ndarray
    failures: list
    horizon: float | None = None
    horizon_check: bool | None = None

    def as_dict(self) -> dict:
        return {
            "passed": self.passed, "C": self.C, "m0": self.m0,
            "n_in_regime": int(self.in_regime.sum()),
            "first_failure": self.failures[0] if self.failures else None,
            "horizon": self.horizon, "horizon_check": self.horizon_check,
        }


def stability_certificate(series: NormSeries, C: float, N: int | None = None) -> StabilityVerdict:
    """Compare a distance series with the stability bound inside the regime 1 - C(t+1)t m0 >= 1/2.

    With ``N`` given, also reports the horizon t* and, when m0 <= 1/N,
    whether the series stayed below sqrt(2/C)/sqrt(N) up to t*.
    """
    if C <= 0:
        raise ValueError("C must be positive")
    m0 = float(series.values[0])
    if m0 <= 0:
        raise ValueError("the first value must be positive")
    t = series.times - series.times[0]
    denom = 1.0 - C * (t + 1) * t * m0
    regime = denom >= 0.5
    bound = stability_bound(m0, C, t)
    bad = np.flatnonzero(regime & (series.values > bound))
    horizon = check = None
    if N is not None:
        horizon = stability_horizon(N, C)
        if m0 <= 1.0 / N:
            upto = t <= horizon
            check = bool(np.all(series.values[upto] <= math.sqrt(2.0 / C) / math.sqrt(N)))
    return StabilityVerdict(bad.size == 0, C, m0, bound, regime, bad.tolist(), horizon, check)


def calibrate_stability_constant(series_list, c_max: float = 1e6, rtol: float = 1e-6) -> float:
    """Smallest C (to relative ``rtol``) for which every series passes the certificate.

    Passing is monotone in C: the bound grows with C and the regime shrinks.
    C below 1 always fails at t = 0, so the search starts there.
    """
    def ok(c):
        return all(stability_certificate(s, c).passed for s in series_list)

    lo, hi = 1.0, 1.0
    if ok(lo):
        return lo
    while not ok(hi):
        hi *= 2
        if hi > c_max:
            raise ValueError("no calibration constant below c_max")
    lo = hi / 2
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class ScheduleValue:
    n: int
    overflow: bool


def double_exp_schedule(C: float, t: float) -> ScheduleValue:
    """N(t) = ceil(exp(2 C exp(C t))), saturating at 2^63 - 1."""
    if C <= 0 or t < 0:
        raise ValueError("need C > 0 and t >= 0")
    try:
        log_n = 2 * C * math.exp(C * t)
    except OverflowError:
        return ScheduleValue(INT64_MAX, True)
    if log_n >= LOG_INT64_MAX:
        return ScheduleValue(INT64_MAX, True)
    return ScheduleValue(min(INT64_MAX, math.ceil(math.exp(log_n))), False)


def schedule_time(C: float, n: int) -> float:
    """Largest t with double_exp_schedule(C, t) <= n; needs n >= exp(2C)."""
    log_n = math.log(n)
    if log_n < 2 * C:
        raise ValueError(f"N={n} lies below the schedule start exp(2C)")
    return math.log(log_n / (2 * C)) / C


def schedule_pairs(C: float, n_values) -> list:
    """(t, N) pairs on the schedule for the given particle counts, skipping those below its start."""
    out = []
    for n in sorted(set(int(v) for v in n_values)):
        if math.log(n) >= 2 * C:
            out.append((schedule_time(C, n), n))
    return out


def wasserstein_growth_envelope(C: float, t):
    """C exp(C exp(C t)), the amplification factor of the Wasserstein stability inequality."""
    return C * np.exp(C * np.exp(C * np.asarray(t, dtype=float)))


def calibrate_wasserstein_constant(times, ratios, c_max: float = 50.0, rtol: float = 1e-6) -> float:
    """Smallest C with ratios <= C exp(C exp(C t)) at every sample (monotone in C)."""
    t = np.asarray(times, dtype=float)
    r = np.asarray(ratios, dtype=float)

    def ok(c):
        return bool(np.all(r <= wasserstein_growth_envelope(c, t)))

    lo, hi = 0.0, 1e-3
    while not ok(hi):
        lo, hi = hi, hi * 2
        if hi > c_max:
            raise ValueError("no calibration constant below c_max")
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def fit_departure_time(series: NormSeries, factor: float = 2.0):
    """First time the series exceeds factor * values[0], linearly interpolated; None if never."""
    if factor <= 1:
        raise ValueError("factor must exceed 1")
    level = factor * series.values[0]
    above = np.flatnonzero(series.values > level)
    if above.size == 0:
        return None
    k = int(above[0])
    if k == 0:
        return float(series.times[0])
    t0, t1 = series.times[k - 1], series.times[k]
    v0, v1 = series.values[k - 1], series.values[k]
    return float(t0 + (level - v0) * (t1 - t0) / (v1 - v0))


def censored_median(values) -> float:
    """Median with None (no event) counted as +inf."""
    arr = np.array([math.inf if v is None else float(v) for v in values])
    if arr.size == 0:
        raise ValueError("empty sample")
    arr.sort()
    m = arr.size // 2
    if arr.size % 2:
        return float(arr[m])
    # midpoint of the two central values; inf if either is censored
    return float(0.5 * (arr[m - 1] + arr[m]))


def lipschitz_ratios(series_times, distances):
    """d_k / |t_{k+1} - t_k| for distances between adjacent snapshots."""
    dt = np.diff(np.asarray(series_times, dtype=float))
    return np.asarray(distances, dtype=float) / dt


def trend_test(times, values):
    """One-sided Spearman test for an increasing trend; returns (rho, p)."""
    res = stats.spearmanr(times, values, alternative="greater")
    return float(res.statistic), float(res.pvalue)
