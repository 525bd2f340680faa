"""Synthetic benchmark: curve generators, error laws, accuracy criteria.

Curves live on 100 equispaced points of [0, pi] and are linear
combinations of cos(2t), sin(4t) and a fixed quadratic, with U(0,1)
coefficients. The regression signal is 10*(a^2 - b^2), a map that only
sees the curve shape through its first two coefficients. The rough
variant adds independent U(-r, r) jitter at every grid point after the
coefficients are drawn, so setting r = 0 reproduces the smooth draw
bit for bit.

The error laws and every reported criterion (AMSE, AMSPE, MISE, KL,
RMSE, RMSPE) live here too, plus the replication and bootstrap studies
that feed the benchmark reports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import t as t_dist

from .bayes import (
    FnpSamplerModel,
    FplmSamplerModel,
    McmcConfig,
    posterior_error_density,
    run_sampler,
)
from .error_density import density_at
from .estimators import (
    derive_first_derivative,
    fit_fpcr,
    predict_fnp,
    predict_fpcr,
    predict_fplm,
)
from .functional import FunctionalSample, Grid

__all__ = [
    "ERROR_KINDS",
    "SimulatedDraw",
    "StudyArm",
    "LongRow",
    "FailureRecord",
    "MetricReport",
    "simulation_grid",
    "simulate_smooth",
    "simulate_rough",
    "attach_errors",
    "draw_errors",
    "true_density",
    "amse_amspe",
    "mise_kl",
    "rmse_rmspe",
    "run_replication_study",
    "bootstrap_study",
]

ERROR_KINDS = ("t5", "skewunimodal", "skewbimodal")

# (weight, mean, sd) triples of the two Gaussian-mixture error laws
_SKEW_UNIMODAL = ((0.2, 0.0, 1.0), (0.2, 0.5, 2.0 / 3.0),
                  (0.6, 13.0 / 12.0, 5.0 / 9.0))
_SKEW_BIMODAL = ((0.75, 0.0, 1.0), (0.25, 1.5, 1.0 / 3.0))

_EVAL_GRID = np.linspace(-10.0, 10.0, 1001)


def simulation_grid(m: int = 100) -> Grid:
    return Grid(np.linspace(0.0, np.pi, m))


@dataclass(frozen=True)
class SimulatedDraw:
    """One synthetic sample; errors/y present once attached."""

    X: FunctionalSample
    Z: FunctionalSample
    g: np.ndarray
    coefficients: np.ndarray
    errors: np.ndarray | None = None
    y: np.ndarray | None = None

    def __post_init__(self):
        if (self.errors is None) != (self.y is None):
            raise ValueError("errors and y must be attached together")
        if self.y is not None and not np.array_equal(
                self.y, self.g + self.errors):
            raise ValueError("y must equal g + errors exactly")


def _curve_values(coef: np.ndarray, t: np.ndarray) -> np.ndarray:
    a, b, c = coef[:, 0:1], coef[:, 1:2], coef[:, 2:3]
    quad = t * t - np.pi * t + 2.0 * np.pi ** 2 / 9.0
    return a * np.cos(2.0 * t) + b * np.sin(4.0 * t) + c * quad


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def simulate_smooth(n: int, seed=0, m: int = 100) -> SimulatedDraw:
    """Smooth curves only; pair with draw_errors / attach_errors."""
    if n < 2:
        raise ValueError("need n >= 2 curves")
    rng = _as_rng(seed)
    grid = simulation_grid(m)
    coef = rng.random((n, 3))
    X = FunctionalSample(grid, _curve_values(coef, grid.points))
    Z = derive_first_derivative(X)
    g = 10.0 * (coef[:, 0] ** 2 - coef[:, 1] ** 2)
    return SimulatedDraw(X=X, Z=Z, g=g, coefficients=coef)


def simulate_rough(n: int, seed=0, m: int = 100,
                   noise_range: float = 0.1) -> SimulatedDraw:
    """Smooth draw plus per-point U(-noise_range, noise_range) jitter.

    Coefficients are drawn before the jitter, so noise_range = 0 gives
    the smooth sample bit-exactly under the same seed.
    """
    if n < 2:
        raise ValueError("need n >= 2 curves")
    if noise_range < 0:
        raise ValueError("noise_range must be nonnegative")
    rng = _as_rng(seed)
    grid = simulation_grid(m)
    coef = rng.random((n, 3))
    jitter = rng.uniform(-noise_range, noise_range, size=(n, grid.m))
    X = FunctionalSample(grid, _curve_values(coef, grid.points) + jitter)
    Z = derive_first_derivative(X)
    g = 10.0 * (coef[:, 0] ** 2 - coef[:, 1] ** 2)
    return SimulatedDraw(X=X, Z=Z, g=g, coefficients=coef)


def draw_errors(kind: str, n: int, seed=0) -> np.ndarray:
    """iid draws from one of the three benchmark error laws."""
    if n < 1:
        raise ValueError("need n >= 1")
    rng = _as_rng(seed)
    if kind == "t5":
        return rng.standard_t(5, size=n)
    if kind == "skewunimodal":
        comps = _SKEW_UNIMODAL
    elif kind == "skewbimodal":
        comps = _SKEW_BIMODAL
    else:
        raise ValueError(f"unknown error kind {kind!r}")
    w = np.array([c[0] for c in comps])
    mu = np.array([c[1] for c in comps])
    sd = np.array([c[2] for c in comps])
    idx = rng.choice(len(comps), size=n, p=w)
    return mu[idx] + sd[idx] * rng.standard_normal(n)


def attach_errors(draw: SimulatedDraw, kind: str, seed=0) -> SimulatedDraw:
    eps = draw_errors(kind, draw.g.size, seed)
    return replace(draw, errors=eps, y=draw.g + eps)


def true_density(kind: str, eps):
    """Exact pdf of the named error law, vectorized over eps."""
    e = np.asarray(eps, dtype=float)
    if kind == "t5":
        out = t_dist.pdf(e, df=5)
    elif kind in ("skewunimodal", "skewbimodal"):
        comps = _SKEW_UNIMODAL if kind == "skewunimodal" else _SKEW_BIMODAL
        out = np.zeros_like(e, dtype=float)
        for w, mu, sd in comps:
            z = (e - mu) / sd
            out = out + w * np.exp(-0.5 * z * z) / (sd * math.sqrt(2 * math.pi))
    else:
        raise ValueError(f"unknown error kind {kind!r}")
    return float(out) if np.isscalar(eps) or e.ndim == 0 else out


def amse_amspe(train_pairs, holdout_pairs) -> tuple[float, float]:
    """Averaged mean squared (prediction) error across replications.

    Each element of the two sequences is a (target, estimate) pair of
    equal-length vectors; the average runs over every element of every
    replication.
    """
    def _avg(pairs):
        if len(pairs) == 0:
            raise ValueError("no replication results")
        sq = []
        for target, estimate in pairs:
            target = np.asarray(target, float)
            estimate = np.asarray(estimate, float)
            if target.shape != estimate.shape:
                raise ValueError("target/estimate shape mismatch")
            sq.append((target - estimate) ** 2)
        return float(np.concatenate(sq).mean())

    return _avg(train_pairs), _avg(holdout_pairs)


def mise_kl(kind: str, density) -> tuple[float, float]:
    """Grid-approximated MISE and cross-entropy KL of a density estimate.

    The estimate may be one of the kernel density objects or a callable
    on a vector of evaluation points. Both criteria sum over the same
    1,001-point grid on [-10, 10] with weight 1/50; the estimate is
    floored at 1e-300 inside the log.
    """
    f = true_density(kind, _EVAL_GRID)
    if callable(density):
        fhat = np.asarray(density(_EVAL_GRID), dtype=float)
    else:
        fhat = density_at(density, _EVAL_GRID)
    mise = float(np.sum((f - fhat) ** 2) / 50.0)
    kl = float(-np.sum(f * np.log(np.maximum(fhat, 1e-300))) / 50.0)
    return mise, kl


def rmse_rmspe(y, y_hat, n_train: int) -> tuple[float, float]:
    """Root mean squared error over the first n_train units and over
    the rest."""
    y = np.asarray(y, float)
    y_hat = np.asarray(y_hat, float)
    if y.shape != y_hat.shape:
        raise ValueError("y and y_hat must have the same length")
    if not 0 < n_train < y.size:
        raise ValueError("n_train must split the sample in two")
    tr = y[:n_train] - y_hat[:n_train]
    te = y[n_train:] - y_hat[n_train:]
    return (float(np.sqrt(np.mean(tr ** 2))),
            float(np.sqrt(np.mean(te ** 2))))


@dataclass(frozen=True)
class StudyArm:
    """One model configuration scored by the studies."""

    name: str
    model: str                     # fplm | fnp | fpcr
    semimetric: str = "deriv:2"
    bandwidth_mode: str = "global"
    n_pc_beta: int | None = None

    def __post_init__(self):
        if self.model not in ("fplm", "fnp", "fpcr"):
            raise ValueError("model must be fplm, fnp or fpcr")


@dataclass(frozen=True)
class LongRow:
    arm: str
    semimetric: str
    density: str
    metric: str
    value: float
    replication: int


@dataclass(frozen=True)
class FailureRecord:
    replication: int
    density: str
    arm: str
    error: str


@dataclass(frozen=True)
class MetricReport:
    """Long-format per-replication rows plus failure records."""

    rows: tuple[LongRow, ...]
    failures: tuple[FailureRecord, ...]
    n_replications: int

    def __post_init__(self):
        for row in self.rows:
            if row.metric in ("mse", "mspe", "mise", "kl", "rmse", "rmspe") \
                    and row.value < 0:
                raise ValueError("criterion values must be nonnegative")

    def aggregate(self, arm: str, metric: str,
                  density: str | None = None) -> float:
        vals = [r.value for r in self.rows
                if r.arm == arm and r.metric == metric
                and (density is None or r.density == density)]
        if not vals:
            raise KeyError(f"no rows for arm={arm!r} metric={metric!r} "
                           f"density={density!r}")
        return float(np.mean(vals))

    def table(self) -> list[dict]:
        """Aggregated records per (arm, semimetric, density, metric)."""
        keys = sorted({(r.arm, r.semimetric, r.density, r.metric)
                       for r in self.rows})
        out = []
        for arm, sm, dens, metric in keys:
            vals = [r.value for r in self.rows
                    if (r.arm, r.semimetric, r.density, r.metric)
                    == (arm, sm, dens, metric)]
            out.append({"arm": arm, "semimetric": sm, "density": dens,
                        "metric": metric, "value": float(np.mean(vals)),
                        "count": len(vals)})
        return out


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def _fit_arm_on_draw(arm: StudyArm, draw: SimulatedDraw,
                     holdout: SimulatedDraw, mcmc: McmcConfig,
                     rng: np.random.Generator):
    """Returns (g_hat_train, g_hat_holdout, density or None)."""
    if arm.model == "fpcr":
        fit = fit_fpcr(draw.X, draw.y)
        return predict_fpcr(fit, draw.X), predict_fpcr(fit, holdout.X), None
    if arm.model == "fplm":
        model = FplmSamplerModel(draw.X, draw.y, Z=draw.Z,
                                 spec=arm.semimetric,
                                 n_pc_beta=arm.n_pc_beta)
    else:
        model = FnpSamplerModel(draw.X, draw.y, spec=arm.semimetric)
    config = replace(mcmc, bandwidth_mode=arm.bandwidth_mode)
    chain = run_sampler(model, config, rng=rng)
    h = float(np.sqrt(chain.h2).mean())
    fit = model.refit(h)
    density = posterior_error_density(chain, fit.residuals)
    if arm.model == "fplm":
        ghat_new = predict_fplm(fit, holdout.X, holdout.Z)
    else:
        ghat_new = predict_fnp(fit, holdout.X)
    return fit.fitted, ghat_new, density


def run_replication_study(arms, densities=ERROR_KINDS, n: int = 100,
                          B: int = 20, seed: int = 0,
                          mcmc: McmcConfig | None = None,
                          holdout_size: int | None = None,
                          dgp: str = "smooth") -> MetricReport:
    """Monte-Carlo accuracy study over B independent replications.

    Per replication and error law: simulate a training sample and a
    fresh holdout of holdout_size (default n) curves, fit every arm,
    and record mse/mspe against the true signal plus mise/kl of the
    estimated error density. A failing (replication, arm) pair is
    recorded and skipped; everything else continues. Deterministic
    under seed.
    """
    arms = tuple(arms)
    if B < 1:
        raise ValueError("B must be >= 1")
    if not arms:
        raise ValueError("need at least one arm")
    if dgp not in ("smooth", "rough"):
        raise ValueError("dgp must be 'smooth' or 'rough'")
    simulate = simulate_smooth if dgp == "smooth" else simulate_rough
    if mcmc is None:
        mcmc = McmcConfig(n_burnin=500, n_iter=2_000)
    eta = n if holdout_size is None else holdout_size
    rows: list[LongRow] = []
    failures: list[FailureRecord] = []
    for b in range(B):
        for di, kind in enumerate(densities):
            train = simulate(n, _stream(seed, b, di, 0))
            train = attach_errors(train, kind, _stream(seed, b, di, 1))
            holdout = simulate(eta, _stream(seed, b, di, 2))
            for ai, arm in enumerate(arms):
                try:
                    ghat, ghat_new, density = _fit_arm_on_draw(
                        arm, train, holdout, mcmc,
                        _stream(seed, b, di, 3 + ai))
                    rows.append(LongRow(arm.name, arm.semimetric, kind,
                                        "mse",
                                        float(np.mean((train.g - ghat) ** 2)),
                                        b))
                    rows.append(LongRow(arm.name, arm.semimetric, kind,
                                        "mspe",
                                        float(np.mean(
                                            (holdout.g - ghat_new) ** 2)),
                                        b))
                    if density is not None:
                        mise, kl = mise_kl(kind, density)
                        rows.append(LongRow(arm.name, arm.semimetric, kind,
                                            "mise", mise, b))
                        rows.append(LongRow(arm.name, arm.semimetric, kind,
                                            "kl", kl, b))
                except Exception as exc:
                    failures.append(FailureRecord(
                        b, kind, arm.name, f"{type(exc).__name__}: {exc}"))
    return MetricReport(rows=tuple(rows), failures=tuple(failures),
                        n_replications=B)


def bootstrap_study(X, y, arms, Z=None, n_boot: int = 100, seed: int = 0,
                    n_train: int = 160,
                    mcmc: McmcConfig | None = None) -> MetricReport:
    """Resampling study on a real dataset.

    Each resample draws len(y) units with replacement, takes the first
    n_train as the learning sample and the rest as the testing sample,
    fits every arm on the learning sample, and records rmse/rmspe
    against the observed responses.
    """
    X = X if isinstance(X, FunctionalSample) else FunctionalSample(
        simulation_grid(np.asarray(X).shape[1]), X)
    y = np.asarray(y, dtype=float)
    if y.size < 2:
        raise ValueError("need at least 2 units")
    if not 0 < n_train < y.size:
        raise ValueError("n_train must split the sample in two")
    if n_boot < 1:
        raise ValueError("n_boot must be >= 1")
    if mcmc is None:
        mcmc = McmcConfig(n_burnin=500, n_iter=2_000)
    Zs = None if Z is None else Z
    rows: list[LongRow] = []
    failures: list[FailureRecord] = []
    for b in range(n_boot):
        rng = _stream(seed, b, 0)
        idx = rng.integers(0, y.size, size=y.size)
        Xb = FunctionalSample(X.grid, X.values[idx])
        yb = y[idx]
        Zb = None if Zs is None else FunctionalSample(Zs.grid, Zs.values[idx])
        tr = slice(0, n_train)
        te = slice(n_train, None)
        X_tr = FunctionalSample(X.grid, Xb.values[tr])
        X_te = FunctionalSample(X.grid, Xb.values[te])
        Z_tr = None if Zb is None else FunctionalSample(Zb.grid, Zb.values[tr])
        Z_te = None if Zb is None else FunctionalSample(Zb.grid, Zb.values[te])
        for ai, arm in enumerate(arms):
            try:
                yhat = _predict_real(arm, X_tr, yb[tr], Z_tr, X_te, Z_te,
                                     mcmc, _stream(seed, b, 1 + ai))
                rmse, rmspe = rmse_rmspe(yb, yhat, n_train)
                rows.append(LongRow(arm.name, arm.semimetric, "data",
                                    "rmse", rmse, b))
                rows.append(LongRow(arm.name, arm.semimetric, "data",
                                    "rmspe", rmspe, b))
            except Exception as exc:
                failures.append(FailureRecord(
                    b, "data", arm.name, f"{type(exc).__name__}: {exc}"))
    return MetricReport(rows=tuple(rows), failures=tuple(failures),
                        n_replications=n_boot)


def _predict_real(arm: StudyArm, X_tr, y_tr, Z_tr, X_te, Z_te,
                  mcmc: McmcConfig, rng) -> np.ndarray:
    """Fitted values on train followed by predictions on test."""
    if arm.model == "fpcr":
        fit = fit_fpcr(X_tr, y_tr)
        return np.concatenate([predict_fpcr(fit, X_tr),
                               predict_fpcr(fit, X_te)])
    if arm.model == "fplm":
        model = FplmSamplerModel(X_tr, y_tr, Z=Z_tr, spec=arm.semimetric,
                                 n_pc_beta=arm.n_pc_beta)
    else:
        model = FnpSamplerModel(X_tr, y_tr, spec=arm.semimetric)
    config = replace(mcmc, bandwidth_mode=arm.bandwidth_mode)
    chain = run_sampler(model, config, rng=rng)
    h = float(np.sqrt(chain.h2).mean())
    fit = model.refit(h)
    if arm.model == "fplm":
        Z_te_eff = (derive_first_derivative(X_te) if Z_te is None else Z_te)
        pred = predict_fplm(fit, X_te, Z_te_eff)
    else:
        pred = predict_fnp(fit, X_te)
    return np.concatenate([fit.fitted, pred])
