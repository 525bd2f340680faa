"""Gaussian location-mixture estimates of the regression error density.

The density places one Gaussian component at every model residual. The
global form shares one standard deviation b across components; the
localized form widens the component at residual j to
tau * (1 + tau_eps * |residual_j|), so far-out residuals get flatter
kernels. Setting tau_eps = 0 makes the two forms identical.

The leave-one-out pseudo-likelihood evaluates each residual against
the mixture formed by the other n-1 components; it is the likelihood
the Bayesian bandwidth sampler maximizes over.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, ndtr

__all__ = [
    "GlobalKernelDensity",
    "LocalizedKernelDensity",
    "PredictionInterval",
    "density_at",
    "loo_log_likelihood",
    "cdf_at",
    "quantile",
    "prediction_interval",
    "density_curve",
]

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)
_QUANTILE_GRID = np.linspace(-10.0, 10.0, 1001)


def _check_residuals(residuals) -> np.ndarray:
    r = np.asarray(residuals, dtype=float)
    if r.ndim != 1 or r.size == 0:
        raise ValueError("residuals must be a nonempty 1-d array")
    if not np.all(np.isfinite(r)):
        raise ValueError("residuals must be finite")
    return r


@dataclass(frozen=True)
class GlobalKernelDensity:
    """Location mixture with a single bandwidth b."""

    residuals: np.ndarray
    b: float

    def __post_init__(self):
        object.__setattr__(self, "residuals", _check_residuals(self.residuals))
        if self.b <= 0:
            raise ValueError("bandwidth b must be positive")

    def bandwidths(self) -> np.ndarray:
        return np.full(self.residuals.size, float(self.b))


@dataclass(frozen=True)
class LocalizedKernelDensity:
    """Location mixture with per-residual bandwidth tau*(1+tau_eps*|e_j|)."""

    residuals: np.ndarray
    tau: float
    tau_eps: float

    def __post_init__(self):
        object.__setattr__(self, "residuals", _check_residuals(self.residuals))
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if not 0.0 <= self.tau_eps <= 1.0:
            raise ValueError("tau_eps must lie in [0, 1]")

    def bandwidths(self) -> np.ndarray:
        return self.tau * (1.0 + self.tau_eps * np.abs(self.residuals))


@dataclass(frozen=True)
class PredictionInterval:
    lower: float
    upper: float
    level: float

    def __post_init__(self):
        if self.lower > self.upper:
            raise ValueError("interval bounds out of order")


def density_at(d, eps):
    """Mixture density at eps (scalar or array); underflow-safe at the tails."""
    e = np.asarray(eps, dtype=float)
    b = d.bandwidths()
    u = (e[..., None] - d.residuals) / b
    vals = np.exp(-0.5 * u * u) / (b * np.sqrt(2.0 * np.pi))
    out = vals.mean(axis=-1)
    return float(out) if np.isscalar(eps) or e.ndim == 0 else out


def loo_log_likelihood(residuals, b: float | None = None, *,
                       tau: float | None = None,
                       tau_eps: float | None = None) -> float:
    """Leave-one-out log pseudo-likelihood of the residual sample.

    Pass ``b`` for the global form, or ``tau`` and ``tau_eps`` for the
    localized one. Each residual is scored against the mixture of the
    other n-1 components, in log space; complete underflow of any inner
    sum yields -inf (a sampler rejection), never an exception.
    """
    r = _check_residuals(residuals)
    n = r.size
    if n < 2:
        raise ValueError("need at least 2 residuals")
    if (b is None) == (tau is None):
        raise ValueError("pass exactly one of b or (tau, tau_eps)")
    if b is not None:
        if b <= 0:
            raise ValueError("bandwidth b must be positive")
        bw = np.full(n, float(b))
    else:
        if tau is None or tau_eps is None:
            raise ValueError("localized form needs both tau and tau_eps")
        if tau <= 0 or not 0.0 <= tau_eps <= 1.0:
            raise ValueError("need tau > 0 and tau_eps in [0, 1]")
        bw = tau * (1.0 + tau_eps * np.abs(r))

    with np.errstate(divide="ignore", over="ignore"):
        u = (r[:, None] - r[None, :]) / bw[None, :]
        log_terms = -0.5 * u * u - np.log(bw)[None, :] - _LOG_SQRT_2PI
        np.fill_diagonal(log_terms, -np.inf)
        row = logsumexp(log_terms, axis=1) - np.log(n - 1)
    total = float(row.sum())
    return total if np.isfinite(total) else -np.inf


def cdf_at(d, eps):
    """Mixture CDF, exact per component."""
    e = np.asarray(eps, dtype=float)
    b = d.bandwidths()
    out = ndtr((e[..., None] - d.residuals) / b).mean(axis=-1)
    return float(out) if np.isscalar(eps) or e.ndim == 0 else out


def quantile(d, p: float) -> float:
    """Inverse CDF by scanning a fixed grid on [-10, 10] (1001 points)
    and interpolating linearly between the bracketing points."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie strictly between 0 and 1")
    cdf = cdf_at(d, _QUANTILE_GRID)
    idx = int(np.searchsorted(cdf, p))
    if idx <= 0:
        return float(_QUANTILE_GRID[0])
    if idx >= _QUANTILE_GRID.size:
        return float(_QUANTILE_GRID[-1])
    c0, c1 = cdf[idx - 1], cdf[idx]
    g0, g1 = _QUANTILE_GRID[idx - 1], _QUANTILE_GRID[idx]
    if c1 <= c0:
        return float(g1)
    frac = (p - c0) / (c1 - c0)
    return float(g0 + frac * (g1 - g0))


def prediction_interval(d, point_forecast: float, level: float) -> PredictionInterval:
    """Pointwise interval: forecast plus the (1-level)/2 and (1+level)/2
    quantiles of the error density."""
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie strictly between 0 and 1")
    lo = quantile(d, (1.0 - level) / 2.0)
    hi = quantile(d, (1.0 + level) / 2.0)
    return PredictionInterval(
        lower=float(point_forecast + lo),
        upper=float(point_forecast + hi),
        level=float(level),
    )


def density_curve(d, grid=None) -> tuple[np.ndarray, np.ndarray]:
    """(eps, density) pairs for export; defaults to the quantile grid."""
    g = _QUANTILE_GRID if grid is None else np.asarray(grid, dtype=float)
    return g, density_at(d, g)
