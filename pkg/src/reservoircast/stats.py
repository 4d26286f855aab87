"""Forecast error metrics and a one-sample Student t-test.

The t-test p-value needs the regularized incomplete beta function, which is
implemented here with the modified Lentz continued-fraction evaluation so the
package has no runtime dependency on scipy.special for its statistics (scipy
serves as an independent oracle in the tests).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

__all__ = [
    "TTestResult",
    "mae",
    "mse",
    "regularized_incomplete_beta",
    "t_test_one_sample",
]

_MAX_CF_ITER = 300
_CF_EPS = 1e-15
_CF_TINY = 1e-300


def _paired(pred, target) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise ConfigError(f"shape mismatch: pred {p.shape} vs target {t.shape}")
    if p.size == 0:
        raise ConfigError("cannot score empty arrays")
    return p, t


def mse(pred, target) -> float:
    """Mean squared error over all elements."""
    p, t = _paired(pred, target)
    return float(np.mean((p - t) ** 2))


def mae(pred, target) -> float:
    """Mean absolute error over all elements."""
    p, t = _paired(pred, target)
    return float(np.mean(np.abs(p - t)))


def _beta_cf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz method)."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _CF_TINY:
        d = _CF_TINY
    d = 1.0 / d
    f = d
    for m in range(1, _MAX_CF_ITER + 1):
        m2 = 2 * m
        # even step
        num = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + num * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + num / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        f *= d * c
        # odd step
        num = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + num * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + num / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        delta = d * c
        f *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return f
    raise ConfigError(
        f"incomplete beta continued fraction did not converge for a={a}, b={b}, x={x}"
    )


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b), the regularized incomplete beta function."""
    if a <= 0.0 or b <= 0.0:
        raise ConfigError(f"shape parameters must be positive, got a={a}, b={b}")
    if not 0.0 <= x <= 1.0:
        raise ConfigError(f"x must lie in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_front = (
        a * math.log(x)
        + b * math.log1p(-x)
        - (math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b))
    )
    front = math.exp(ln_front)
    # the continued fraction converges fast only below the distribution mean;
    # above it, evaluate the mirrored tail and use I_x(a,b) = 1 - I_{1-x}(b,a)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cf(a, b, x) / a
    return 1.0 - front * _beta_cf(b, a, 1.0 - x) / b


@dataclass(frozen=True)
class TTestResult:
    statistic: float
    pvalue: float
    df: int


def t_test_one_sample(sample, popmean: float = 0.0) -> TTestResult:
    """Two-sided one-sample Student t-test of mean(sample) against popmean.

    The two-sided p-value is I_u(df/2, 1/2) with u = df / (df + t^2), the
    standard survival identity for the t distribution.  A zero-variance
    sample gives p = 1 when its value equals popmean and p = 0 otherwise.
    """
    x = np.asarray(sample, dtype=np.float64).ravel()
    if x.size < 2:
        raise ConfigError(f"t-test needs at least 2 observations, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ConfigError("sample contains non-finite values")
    n = x.size
    df = n - 1
    delta = float(x.mean()) - float(popmean)
    sd = float(x.std(ddof=1))
    if sd == 0.0:
        if delta == 0.0:
            return TTestResult(statistic=0.0, pvalue=1.0, df=df)
        return TTestResult(statistic=math.copysign(math.inf, delta), pvalue=0.0, df=df)
    t = delta / (sd / math.sqrt(n))
    pvalue = regularized_incomplete_beta(0.5 * df, 0.5, df / (df + t * t))
    return TTestResult(statistic=t, pvalue=pvalue, df=df)
