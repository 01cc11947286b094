"""Empirical distribution helpers used by the acceptance gates."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize, stats

KS_C99 = 1.63  # asymptotic 1% critical constant of the Kolmogorov distribution


class BracketError(ValueError):
    pass


@dataclass(frozen=True)
class EmpiricalSample:
    values: np.ndarray
    tag: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.sort(np.asarray(self.values, dtype=float).ravel())
        if v.size < 1:
            raise ValueError("empty sample")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.size

    def cdf(self, x):
        return np.searchsorted(self.values, x, side="right") / self.n


def ks_one_sample(sample, cdf: Callable) -> float:
    """sup |F_n - F| for a continuous reference CDF."""
    x = np.sort(np.asarray(sample, dtype=float).ravel())
    n = x.size
    f = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))


def ks_two_sample(a, b) -> float:
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    return float(stats.ks_2samp(a, b).statistic)


def ks_critical(n: int, m: int | None = None, c: float = KS_C99) -> float:
    """1% critical value, one-sample when ``m`` is None."""
    if m is None:
        return c / np.sqrt(n)
    return c * np.sqrt((n + m) / (n * m))


def moment_band(sample, k: int = 1) -> tuple[float, float]:
    """Estimate of E[X^k] and its standard error."""
    x = np.asarray(sample, dtype=float).ravel() ** k
    return float(x.mean()), float(x.std(ddof=1) / np.sqrt(x.size))


def variance_band(sample) -> tuple[float, float]:
    """Sample variance and its standard error from the fourth central moment."""
    x = np.asarray(sample, dtype=float).ravel()
    n = x.size
    c = x - x.mean()
    s2 = c @ c / (n - 1)
    m4 = np.mean(c**4)
    return float(s2), float(np.sqrt(max(m4 - s2**2, 0.0) / n))


def bisect(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-10) -> float:
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        raise BracketError(f"no sign change on [{lo}, {hi}]")
    return float(optimize.bisect(f, lo, hi, xtol=tol, maxiter=400))
