"""Regression estimators on functional covariates.

Three estimators are provided, all sharing the same Gaussian-kernel
Nadaraya-Watson machinery over curve semi-metrics:

* FPLM: partial linear model: one functional covariate enters linearly
  through an integral term, a second one nonparametrically through a
  kernel smoother on partial residuals.
* FNP: fully nonparametric kernel regression on one functional
  covariate.
* FPCR: ordinary least squares on leading FPCA scores.

Module-level ``fit_*``/``predict_*`` functions hold the actual logic;
the sklearn-style estimator classes wrap them.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .functional import (
    FpcaResult,
    FunctionalSample,
    Grid,
    as_functional_sample,
    derivative,
    fit_bsplines,
    fpca,
    inner_product,
)
from .semimetrics import (
    DistanceMatrix,
    SemiMetricSpec,
    TrainedSemiMetric,
    train_semimetric,
)

__all__ = [
    "NwWeights",
    "WeightMatrix",
    "nw_weights",
    "weight_matrix",
    "FplmFit",
    "FnpFit",
    "FpcrFit",
    "fit_fplm",
    "predict_fplm",
    "fit_fnp",
    "predict_fnp",
    "fit_fpcr",
    "predict_fpcr",
    "FplmRegressor",
    "FnpRegressor",
    "FpcrRegressor",
]


# ---------------------------------------------------------------------------
# Nadaraya-Watson weights


class NwWeights(NamedTuple):
    weights: np.ndarray
    fell_back: bool  # True when every kernel value underflowed to zero


def nw_weights(distance_row, h: float) -> NwWeights:
    """Gaussian-kernel weights w_i = K(d_i/h) / sum_j K(d_j/h).

    When every kernel value underflows to zero the weights fall back to
    a uniform distribution over the minimal-distance entries, and the
    ``fell_back`` flag is set.
    """
    d = np.asarray(distance_row, dtype=float)
    if h <= 0:
        raise ValueError("bandwidth h must be positive")
    if d.size == 0 or not np.all(np.isfinite(d)) or np.any(d < 0):
        raise ValueError("distances must be finite and nonnegative")
    k = np.exp(-0.5 * (d / h) ** 2)
    s = k.sum()
    if s == 0.0:
        w = (d == d.min()).astype(float)
        return NwWeights(w / w.sum(), True)
    return NwWeights(k / s, False)


@dataclass(frozen=True)
class WeightMatrix:
    """Row-stochastic kernel weight matrix over training curves."""

    values: np.ndarray
    h: float

    def __post_init__(self):
        if np.any(self.values < 0):
            raise ValueError("weights must be nonnegative")
        if not np.allclose(self.values.sum(axis=1), 1.0, atol=1e-12):
            raise ValueError("weight rows must sum to 1")


def _kernel_rows(d2: np.ndarray, h: float) -> np.ndarray:
    # d2 holds squared distances; keeping them squared saves a sqrt/square
    # round-trip in the sampler's inner loop
    return np.exp(d2 * (-0.5 / (h * h)))


def _weight_rows(d2: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Row-normalized kernel weights for rows of squared distances.

    Returns (weights, fell_back_mask). Underflowed rows fall back to a
    uniform distribution over their minimal-distance entries.
    """
    k = _kernel_rows(d2, h)
    s = k.sum(axis=1)
    dead = s == 0.0
    if np.any(dead):
        rows = np.where(dead)[0]
        mins = d2[rows].min(axis=1)
        mask = d2[rows] == mins[:, None]
        k[rows] = mask.astype(float)
        s[rows] = k[rows].sum(axis=1)
    return k / s[:, None], dead


def weight_matrix(distances: DistanceMatrix, h: float) -> WeightMatrix:
    """Full in-sample weight matrix W_h (diagonal included)."""
    if h <= 0:
        raise ValueError("bandwidth h must be positive")
    w, _ = _weight_rows(distances.values**2, h)
    return WeightMatrix(values=w, h=float(h))


def _loo_weight_rows(d2: np.ndarray, h: float) -> np.ndarray:
    """Self-excluded weight rows on an in-sample squared-distance matrix.

    Row i distributes weight over j != i; used for the residuals that
    feed the error-density likelihood, where keeping the self-weight
    would let an interpolating bandwidth fake a perfect fit.
    """
    k = _kernel_rows(d2, h)
    np.fill_diagonal(k, 0.0)
    s = k.sum(axis=1)
    dead = s == 0.0
    if np.any(dead):
        rows = np.where(dead)[0]
        d2_off = d2[rows].copy()
        d2_off[np.arange(len(rows)), rows] = np.inf
        mins = d2_off.min(axis=1)
        mask = d2_off == mins[:, None]
        k[rows] = mask.astype(float)
        s[rows] = k[rows].sum(axis=1)
    return k / s[:, None]


# ---------------------------------------------------------------------------
# FPLM


@dataclass(frozen=True)
class FplmFit:
    """Fitted functional partial linear model.

    ``fitted + residuals == y`` exactly. ``loo_residuals`` come from the
    self-excluded kernel stage and are the ones the Bayesian likelihood
    consumes; the exported error density is built on ``residuals``.
    """

    grid: Grid
    spec: SemiMetricSpec
    h: float
    n_pc_beta: int
    beta_hat: np.ndarray
    y: np.ndarray
    linear_part: np.ndarray
    partial_residuals: np.ndarray  # y - <X, beta>, smoothed by the NW stage
    fitted: np.ndarray
    residuals: np.ndarray
    loo_residuals: np.ndarray
    semimetric_state: TrainedSemiMetric
    fve: float


def _pick_n_components(
    sample: FunctionalSample, n_pc: int | None, cap: int = 10, fve_target: float = 0.99
) -> tuple[FpcaResult, int, float]:
    """FPCA plus the retained-component rule.

    Explicit ``n_pc`` wins; otherwise the smallest K reaching the
    variance-explained target, capped. Components with numerically zero
    eigenvalues are never retained (they would make the score
    cross-product singular); reductions are warned about.
    """
    n, m = sample.n, sample.m
    upper = min(n - 1, m)
    want = max(1, min(n_pc, upper) if n_pc is not None else min(cap, upper))
    if n_pc is not None and n_pc > upper:
        warnings.warn(
            f"n_pc_beta={n_pc} exceeds the sample rank bound {upper}; using {upper}"
        )
    basis = fpca(sample, K=want)
    w = sample.grid.quadrature_weights()
    centered = sample.values - sample.values.mean(axis=0)
    total_var = float(np.einsum("ij,j,ij->", centered, w, centered)) / n
    positive = basis.eigenvalues > max(basis.eigenvalues[0], 1e-300) * 1e-10
    n_usable = int(positive.sum())  # 0 for a variation-free sample
    if n_pc is not None:
        k = min(want, n_usable)
        if k < want:
            warnings.warn(
                f"score cross-product singular beyond {k} components; "
                f"n_pc_beta reduced from {want}"
            )
    elif total_var <= 0:
        k = n_usable
    else:
        fve = np.cumsum(basis.eigenvalues) / total_var
        reaching = np.nonzero(fve >= fve_target)[0]
        k = int(reaching[0]) + 1 if reaching.size else want
        k = min(k, n_usable)
    explained = float(np.sum(basis.eigenvalues[:k]) / total_var) if total_var > 0 else 1.0
    return basis, k, explained


def fit_fplm(
    X: FunctionalSample,
    Z: FunctionalSample,
    y,
    h: float,
    spec: SemiMetricSpec = SemiMetricSpec.derivative(2),
    n_pc_beta: int | None = None,
    semimetric_state: TrainedSemiMetric | None = None,
    distances: DistanceMatrix | None = None,
) -> FplmFit:
    """Fit the partial linear model at a fixed kernel bandwidth.

    The kernel stage smooths over distances between the Z curves; the
    linear coefficient curve is estimated by regressing the partially
    smoothed response on leading FPCA scores of the partially smoothed
    X curves, realizing the generalized inverse.

    ``semimetric_state``/``distances`` accept precomputed training
    state so a sampler can refit at many bandwidths cheaply.
    """
    X = as_functional_sample(X)
    Z = as_functional_sample(Z)
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or len(y) != X.n or X.n != Z.n:
        raise ValueError("X, Z and y must agree on the number of observations")
    if h <= 0:
        raise ValueError("bandwidth h must be positive")

    state = semimetric_state if semimetric_state is not None else train_semimetric(spec, Z)
    D = distances if distances is not None else state.pairwise()
    d2 = D.values**2

    W, _ = _weight_rows(d2, h)
    Xt = X.values - W @ X.values
    yt = y - W @ y

    basis, k, fve = _pick_n_components(FunctionalSample(X.grid, Xt), n_pc_beta)
    scores = basis.scores[:, :k]
    coef, _, rank, _ = np.linalg.lstsq(scores, yt, rcond=None)
    if rank < k:
        warnings.warn(f"score regression rank {rank} < {k}; trailing components dropped")
        coef, _, _, _ = np.linalg.lstsq(scores[:, :rank], yt, rcond=None)
        k = rank
        scores = scores[:, :k]
    beta_hat = coef @ basis.eigenfunctions[:k]

    linear = inner_product(X.values, beta_hat, X.grid)
    partial = y - linear
    m_fitted = W @ partial
    fitted = linear + m_fitted
    residuals = y - fitted

    W_loo = _loo_weight_rows(d2, h)
    loo_residuals = partial - W_loo @ partial

    return FplmFit(
        grid=X.grid,
        spec=state.spec,
        h=float(h),
        n_pc_beta=k,
        beta_hat=beta_hat,
        y=y,
        linear_part=linear,
        partial_residuals=partial,
        fitted=fitted,
        residuals=residuals,
        loo_residuals=loo_residuals,
        semimetric_state=state,
        fve=fve,
    )


def predict_fplm(fit: FplmFit, X_new, Z_new) -> np.ndarray:
    """Out-of-sample predictions: linear term plus kernel smoothing of
    the training partial residuals at each new Z curve."""
    X_new = as_functional_sample(X_new, fit.grid)
    Z_new = as_functional_sample(Z_new, fit.semimetric_state.grid)
    d_new = fit.semimetric_state.to_new(Z_new)
    W_new, _ = _weight_rows(d_new**2, fit.h)
    return inner_product(X_new.values, fit.beta_hat, fit.grid) + W_new @ fit.partial_residuals


# ---------------------------------------------------------------------------
# FNP


@dataclass(frozen=True)
class FnpFit:
    """Fitted functional Nadaraya-Watson regression."""

    spec: SemiMetricSpec
    h: float
    y: np.ndarray
    fitted: np.ndarray
    residuals: np.ndarray
    loo_residuals: np.ndarray
    semimetric_state: TrainedSemiMetric


def fit_fnp(
    curves: FunctionalSample,
    y,
    h: float,
    spec: SemiMetricSpec = SemiMetricSpec.derivative(2),
    semimetric_state: TrainedSemiMetric | None = None,
    distances: DistanceMatrix | None = None,
) -> FnpFit:
    """Kernel regression of y on one functional covariate; fitted values
    keep the self-weight, loo_residuals exclude it."""
    curves = as_functional_sample(curves)
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or len(y) != curves.n:
        raise ValueError("curves and y must agree on the number of observations")
    if h <= 0:
        raise ValueError("bandwidth h must be positive")
    state = semimetric_state if semimetric_state is not None else train_semimetric(spec, curves)
    D = distances if distances is not None else state.pairwise()
    d2 = D.values**2
    W, _ = _weight_rows(d2, h)
    fitted = W @ y
    loo = y - _loo_weight_rows(d2, h) @ y
    return FnpFit(
        spec=state.spec,
        h=float(h),
        y=y,
        fitted=fitted,
        residuals=y - fitted,
        loo_residuals=loo,
        semimetric_state=state,
    )


def predict_fnp(fit: FnpFit, new_curves) -> np.ndarray:
    new_curves = as_functional_sample(new_curves, fit.semimetric_state.grid)
    d_new = fit.semimetric_state.to_new(new_curves)
    W_new, _ = _weight_rows(d_new**2, fit.h)
    return W_new @ fit.y


# ---------------------------------------------------------------------------
# FPCR


@dataclass(frozen=True)
class FpcrFit:
    """OLS of y on an intercept and leading FPCA scores of X."""

    basis: FpcaResult
    n_components: int
    intercept: float
    coef: np.ndarray
    fitted: np.ndarray
    residuals: np.ndarray


def fit_fpcr(X: FunctionalSample, y, n_components: int | None = None) -> FpcrFit:
    X = as_functional_sample(X)
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or len(y) != X.n:
        raise ValueError("X and y must agree on the number of observations")
    basis, k, _ = _pick_n_components(X, n_components)
    if k == 0:
        raise ValueError("X carries no variation; the score design is rank deficient")
    design = np.column_stack([np.ones(X.n), basis.scores[:, :k]])
    coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < k + 1:
        raise ValueError("rank-deficient score design; reduce n_components")
    fitted = design @ coef
    return FpcrFit(
        basis=basis,
        n_components=k,
        intercept=float(coef[0]),
        coef=coef[1:],
        fitted=fitted,
        residuals=y - fitted,
    )


def predict_fpcr(fit: FpcrFit, X_new) -> np.ndarray:
    X_new = as_functional_sample(X_new, fit.basis.grid)
    scores = fit.basis.project(X_new.values)[:, : fit.n_components]
    return fit.intercept + scores @ fit.coef


# ---------------------------------------------------------------------------
# sklearn-style wrappers


def _spec_of(semimetric) -> SemiMetricSpec:
    if isinstance(semimetric, SemiMetricSpec):
        return semimetric
    return SemiMetricSpec.parse(semimetric)


def derive_first_derivative(X: FunctionalSample) -> FunctionalSample:
    """Default Z: first derivative of the spline-smoothed X curves."""
    return derivative(fit_bsplines(X), 1)


class FplmRegressor(RegressorMixin, BaseEstimator):
    """Functional partial linear regression at a fixed bandwidth.

    Parameters
    ----------
    bandwidth : float
        Kernel bandwidth of the nonparametric stage.
    semimetric : str or SemiMetricSpec
        Distance on the Z curves, e.g. ``"deriv:2"`` or ``"fpca:3"``.
    n_pc_beta : int or None
        Scores carrying the linear coefficient curve; None picks the
        smallest number explaining 99% of partially smoothed X variance
        (capped at 10).
    grid : array-like or None
        Abscissae of the curves; unit interval when omitted.
    """

    def __init__(self, bandwidth=1.0, semimetric="deriv:2", n_pc_beta=None, grid=None):
        self.bandwidth = bandwidth
        self.semimetric = semimetric
        self.n_pc_beta = n_pc_beta
        self.grid = grid

    def _grid(self, X) -> Grid | None:
        if self.grid is None:
            return None
        return self.grid if isinstance(self.grid, Grid) else Grid(np.asarray(self.grid))

    def fit(self, X, y, Z=None):
        Xs = as_functional_sample(X, self._grid(X))
        Zs = derive_first_derivative(Xs) if Z is None else as_functional_sample(Z, Xs.grid)
        self.z_derived_ = Z is None
        self.result_ = fit_fplm(
            Xs, Zs, y, h=self.bandwidth, spec=_spec_of(self.semimetric),
            n_pc_beta=self.n_pc_beta,
        )
        self.beta_curve_ = self.result_.beta_hat
        return self

    def predict(self, X, Z=None):
        check_is_fitted(self, "result_")
        Xs = as_functional_sample(X, self.result_.grid)
        if Z is None:
            if not self.z_derived_:
                raise ValueError("model was fit with explicit Z; pass Z to predict")
            Zs = derive_first_derivative(Xs)
        else:
            Zs = as_functional_sample(Z, self.result_.semimetric_state.grid)
        return predict_fplm(self.result_, Xs, Zs)


class FnpRegressor(RegressorMixin, BaseEstimator):
    """Functional Nadaraya-Watson regression at a fixed bandwidth."""

    def __init__(self, bandwidth=1.0, semimetric="deriv:2", grid=None):
        self.bandwidth = bandwidth
        self.semimetric = semimetric
        self.grid = grid

    def fit(self, X, y):
        g = None if self.grid is None else (
            self.grid if isinstance(self.grid, Grid) else Grid(np.asarray(self.grid))
        )
        Xs = as_functional_sample(X, g)
        self.result_ = fit_fnp(Xs, y, h=self.bandwidth, spec=_spec_of(self.semimetric))
        return self

    def predict(self, X):
        check_is_fitted(self, "result_")
        return predict_fnp(self.result_, X)


class FpcrRegressor(RegressorMixin, BaseEstimator):
    """Principal-component regression on functional covariates."""

    def __init__(self, n_components=None, grid=None):
        self.n_components = n_components
        self.grid = grid

    def fit(self, X, y):
        g = None if self.grid is None else (
            self.grid if isinstance(self.grid, Grid) else Grid(np.asarray(self.grid))
        )
        Xs = as_functional_sample(X, g)
        self.result_ = fit_fpcr(Xs, y, n_components=self.n_components)
        return self

    def predict(self, X):
        check_is_fitted(self, "result_")
        return predict_fpcr(self.result_, X)
