"""Attractor-geometry metrics: correlation dimension and Shannon entropy.

The correlation dimension D2 is estimated with the Grassberger-Procaccia
method: count the fraction of point pairs closer than eps (the correlation
sum), then fit the slope of ln C(eps) against ln eps over a band of scales.
Pair distances are computed exactly (all N*(N-1)/2 Euclidean pairs); no
approximate neighbor structures are used.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .errors import ConfigError

__all__ = [
    "D2Estimate",
    "correlation_sum",
    "delay_embedding",
    "estimate_d2",
    "shannon_entropy",
]


def delay_embedding(series: np.ndarray, dim: int = 3, delay: int = 1) -> np.ndarray:
    """Embed a scalar series into R^dim with coordinates u[t], u[t+delay], ...

    Returns an array of shape (len(series) - (dim - 1) * delay, dim).
    """
    u = np.asarray(series, dtype=np.float64).ravel()
    if dim < 1:
        raise ConfigError(f"embedding dim must be >= 1, got {dim}")
    if delay < 1:
        raise ConfigError(f"delay must be >= 1, got {delay}")
    n = u.size - (dim - 1) * delay
    if n < 2:
        raise ConfigError(
            f"series of length {u.size} too short for dim={dim}, delay={delay}"
        )
    return np.stack([u[j * delay: j * delay + n] for j in range(dim)], axis=1)


def _pair_distances(points: np.ndarray) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2:
        raise ConfigError(f"points must be 2-D (n_points, dim), got shape {pts.shape}")
    if pts.shape[0] < 2:
        raise ConfigError(f"need at least 2 points, got {pts.shape[0]}")
    if not np.all(np.isfinite(pts)):
        raise ConfigError("points contain non-finite values")
    d = pdist(pts)
    d.sort()
    return d


def correlation_sum(points: np.ndarray, eps) -> np.ndarray | float:
    """Fraction of point pairs with Euclidean distance strictly below eps."""
    d = _pair_distances(points)
    eps_arr = np.atleast_1d(np.asarray(eps, dtype=np.float64))
    c = np.searchsorted(d, eps_arr, side="left") / d.size
    return float(c[0]) if np.isscalar(eps) or np.ndim(eps) == 0 else c


@dataclass(frozen=True)
class D2Estimate:
    dimension: float
    r2: float
    eps: np.ndarray
    corr: np.ndarray


def estimate_d2(
    points: np.ndarray,
    n_eps: int = 12,
    eps_lo_pct: float = 0.5,
    eps_hi_pct: float = 10.0,
) -> D2Estimate:
    """Correlation dimension from the slope of ln C(eps) vs ln eps.

    The eps grid is log-spaced between the given percentiles of the nonzero
    pair distances, so the fit band adapts to the attractor's scale.  The
    p-th distance percentile is the radius where C(eps) ~ p/100, so the
    defaults fit the scaling region C in [0.005, 0.1] and stay below the
    finite-size saturation that flattens the slope on bounded sets.
    """
    if n_eps < 2:
        raise ConfigError(f"n_eps must be >= 2, got {n_eps}")
    if not 0.0 <= eps_lo_pct < eps_hi_pct <= 100.0:
        raise ConfigError(
            f"need 0 <= eps_lo_pct < eps_hi_pct <= 100, got {eps_lo_pct}, {eps_hi_pct}"
        )
    d = _pair_distances(points)
    nonzero = d[d > 0.0]
    if nonzero.size == 0:
        raise ConfigError("all points coincide; correlation dimension is undefined")
    lo = float(np.percentile(nonzero, eps_lo_pct))
    hi = float(np.percentile(nonzero, eps_hi_pct))
    if not lo < hi:
        raise ConfigError(
            f"degenerate eps band [{lo}, {hi}]; distances have too little spread"
        )
    eps = np.geomspace(lo, hi, n_eps)
    corr = np.searchsorted(d, eps, side="left") / d.size
    keep = corr > 0.0
    if keep.sum() < 2:
        raise ConfigError("correlation sum vanishes over the eps band; too few points")
    x = np.log(eps[keep])
    y = np.log(corr[keep])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float((resid**2).sum()) / ss_tot
    return D2Estimate(dimension=float(slope), r2=r2, eps=eps, corr=corr)


def shannon_entropy(values: np.ndarray, bins: int = 64) -> float:
    """Shannon entropy (nats) of an equal-width histogram over the data range.

    A constant signal occupies a single bin and has zero entropy.
    """
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size == 0:
        raise ConfigError("cannot compute entropy of an empty array")
    if not np.all(np.isfinite(x)):
        raise ConfigError("values contain non-finite entries")
    if bins < 1:
        raise ConfigError(f"bins must be >= 1, got {bins}")
    if x.max() == x.min():
        return 0.0
    counts, _ = np.histogram(x, bins=bins)
    p = counts[counts > 0] / x.size
    return float(-(p * np.log(p)).sum())
