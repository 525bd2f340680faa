"""Bayesian bandwidth estimation by adaptive random-walk Metropolis.

The sampler walks on the squared bandwidths, the scale the inverse-Gamma
priors live on. Each iteration sweeps the parameters one at a time: the
smoothing bandwidth of the regression fit first, then the error-density
parameter(s) conditional on it. Proposal scales adapt toward a 0.44
acceptance rate with step sizes shrinking as 1/k, so adaptation
diminishes and the chain stays ergodic.

The likelihood is the leave-one-out kernel pseudo-likelihood of the fit
residuals. Model refits happen only when a smoothing-bandwidth proposal
is evaluated; error-density moves reuse the cached residuals, which is
what keeps a 10,000-iteration run cheap.

Marginal likelihoods for semi-metric comparison come from the candidate
identity: marginal = likelihood * prior / posterior, evaluated at the
posterior mean, with the posterior density estimated by a Gaussian
product kernel over the retained draws.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .error_density import (
    GlobalKernelDensity,
    LocalizedKernelDensity,
    loo_log_likelihood,
    prediction_interval,
    quantile,
)
from .estimators import (
    derive_first_derivative,
    fit_fnp,
    fit_fplm,
    predict_fnp,
    predict_fplm,
)
from .functional import FunctionalSample, Grid, as_functional_sample
from .semimetrics import SemiMetricSpec, train_semimetric

__all__ = [
    "InverseGammaPrior",
    "DEFAULT_PRIOR",
    "McmcConfig",
    "McmcChain",
    "ParameterSummary",
    "PosteriorSummary",
    "FplmSamplerModel",
    "FnpSamplerModel",
    "log_prior",
    "log_posterior",
    "adapt_tuning",
    "run_sampler",
    "diagnostics",
    "autocorrelation",
    "batch_mean_se",
    "inefficiency_factor",
    "chib_marginal_likelihood",
    "select_semimetric",
    "SemiMetricSelection",
    "posterior_error_density",
    "BayesianFplmRegressor",
    "BayesianFnpRegressor",
]

GLOBAL = "global"
LOCALIZED = "localized"


@dataclass(frozen=True)
class InverseGammaPrior:
    """Inverse-Gamma in shape-scale form: density ∝ x^-(shape+1) exp(-scale/x).

    log_pdf keeps the full normalizing constant because marginal
    likelihoods are compared across models."""

    shape: float
    scale: float

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise ValueError("shape and scale must be positive")

    def log_pdf(self, x2: float) -> float:
        if x2 <= 0 or not np.isfinite(x2):
            return -np.inf
        return (self.shape * math.log(self.scale) - gammaln(self.shape)
                - (self.shape + 1.0) * math.log(x2) - self.scale / x2)


DEFAULT_PRIOR = InverseGammaPrior(shape=1.0, scale=0.05)


def log_prior(prior: InverseGammaPrior, x2: float) -> float:
    """Log prior density of a squared bandwidth; -inf off the support."""
    return prior.log_pdf(x2)


@dataclass(frozen=True)
class McmcConfig:
    """Sampler settings. n_iter counts retained draws after n_burnin."""

    n_burnin: int = 1_000
    n_iter: int = 10_000
    target_accept: float = 0.44
    initial_tuning: float = 0.1
    tuning_floor: float = 1e-6
    curve_thin: int = 10
    seed: int = 0
    bandwidth_mode: str = GLOBAL
    prior_h: InverseGammaPrior = DEFAULT_PRIOR
    prior_b: InverseGammaPrior = DEFAULT_PRIOR

    def __post_init__(self):
        if self.n_burnin < 0:
            raise ValueError("n_burnin must be >= 0")
        if self.n_iter < 1:
            raise ValueError("n_iter must be >= 1")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must lie in (0, 1)")
        if self.initial_tuning <= 0:
            raise ValueError("initial_tuning must be positive")
        if self.curve_thin < 1:
            raise ValueError("curve_thin must be >= 1")
        if self.bandwidth_mode not in (GLOBAL, LOCALIZED):
            raise ValueError(
                f"bandwidth_mode must be '{GLOBAL}' or '{LOCALIZED}'")


def adapt_tuning(tau_prev: float, k: int, accepted: bool,
                 xi: float = 0.44, floor: float = 1e-6) -> float:
    """One diminishing-adaptation step of a proposal scale.

    Raises the scale after an acceptance and lowers it after a
    rejection, sized so the expected drift vanishes exactly at
    acceptance rate xi. Floored to stay positive.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if tau_prev <= 0:
        raise ValueError("tau_prev must be positive")
    c = tau_prev / (xi - xi * xi)
    if accepted:
        tau = tau_prev + c * (1.0 - xi) / k
    else:
        tau = tau_prev - c * xi / k
    return max(tau, floor)


class FplmSamplerModel:
    """Partial linear model bound to one dataset and semi-metric.

    Trains the semi-metric once and caches the pairwise distances, so a
    refit at a new bandwidth only redoes the kernel smoothing stage and
    the coefficient-curve regression.
    """

    kind = "fplm"

    def __init__(self, X, y, Z=None, spec: SemiMetricSpec | str = "deriv:2",
                 n_pc_beta: int | None = None, grid: Grid | None = None):
        self.X = as_functional_sample(X, grid)
        self.y = np.asarray(y, dtype=float)
        if self.y.shape != (self.X.n,):
            raise ValueError("y length must match the number of curves")
        if Z is None:
            self.Z = derive_first_derivative(self.X)
        else:
            self.Z = as_functional_sample(Z)
        self.spec = (SemiMetricSpec.parse(spec) if isinstance(spec, str)
                     else spec)
        self.n_pc_beta = n_pc_beta
        self.state = train_semimetric(self.spec, self.Z)
        self.distances = self.state.pairwise()

    @property
    def n(self) -> int:
        return self.X.n

    def refit(self, h: float):
        # proposals legitimately visit degenerate bandwidths; the fit's
        # component-reduction warnings are just noise there
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            return fit_fplm(self.X, self.Z, self.y, h, spec=self.spec,
                            n_pc_beta=self.n_pc_beta,
                            semimetric_state=self.state,
                            distances=self.distances)

    def curves(self, fit) -> dict[str, np.ndarray]:
        return {"beta": fit.beta_hat, "m": fit.fitted - fit.linear_part}


class FnpSamplerModel:
    """Fully nonparametric kernel regression bound to one dataset."""

    kind = "fnp"

    def __init__(self, curves, y, spec: SemiMetricSpec | str = "deriv:2",
                 grid: Grid | None = None):
        self.curves_sample = as_functional_sample(curves, grid)
        self.y = np.asarray(y, dtype=float)
        if self.y.shape != (self.curves_sample.n,):
            raise ValueError("y length must match the number of curves")
        self.spec = (SemiMetricSpec.parse(spec) if isinstance(spec, str)
                     else spec)
        self.state = train_semimetric(self.spec, self.curves_sample)
        self.distances = self.state.pairwise()

    @property
    def n(self) -> int:
        return self.curves_sample.n

    def refit(self, h: float):
        return fit_fnp(self.curves_sample, self.y, h, spec=self.spec,
                       semimetric_state=self.state,
                       distances=self.distances)

    def curves(self, fit) -> dict[str, np.ndarray]:
        return {"m": fit.fitted}


def _density_log_likelihood(residuals: np.ndarray, mode: str,
                            params: tuple[float, ...]) -> float:
    # params holds root-scale values: (b,) or (tau, tau_eps)
    if mode == GLOBAL:
        return loo_log_likelihood(residuals, b=params[0])
    return loo_log_likelihood(residuals, tau=params[0], tau_eps=params[1])


def _density_log_prior(mode: str, prior_b: InverseGammaPrior,
                       sq: tuple[float, ...]) -> float:
    # sq holds (b2,) or (tau2, tau_eps); tau_eps is uniform on [0,1]
    if mode == GLOBAL:
        return prior_b.log_pdf(sq[0])
    if not 0.0 <= sq[1] <= 1.0:
        return -np.inf
    return prior_b.log_pdf(sq[0])


def log_posterior(params, model, prior_h: InverseGammaPrior = DEFAULT_PRIOR,
                  prior_b: InverseGammaPrior = DEFAULT_PRIOR) -> float:
    """Unnormalized log posterior of the squared-parameter vector.

    params is (h2, b2) for a global error density or (h2, tau2, tau_eps)
    for the localized one. Refits the model at sqrt(h2); fit failures
    and likelihood underflow both come back as -inf so a sampler simply
    rejects the move.
    """
    params = tuple(float(p) for p in params)
    if len(params) == 2:
        mode = GLOBAL
        h2, sq = params[0], (params[1],)
    elif len(params) == 3:
        mode = LOCALIZED
        h2, sq = params[0], (params[1], params[2])
    else:
        raise ValueError("params must have length 2 or 3")
    lp = prior_h.log_pdf(h2) + _density_log_prior(mode, prior_b, sq)
    if not np.isfinite(lp):
        return -np.inf
    if sq[0] <= 0:
        return -np.inf
    try:
        fit = model.refit(math.sqrt(h2))
    except (ValueError, FloatingPointError, np.linalg.LinAlgError):
        return -np.inf
    root = (math.sqrt(sq[0]),) if mode == GLOBAL else (math.sqrt(sq[0]), sq[1])
    ll = _density_log_likelihood(fit.loo_residuals, mode, root)
    if not np.isfinite(ll):
        return -np.inf
    return ll + lp


@dataclass
class McmcChain:
    """Retained (post burn-in) draws plus acceptance and tuning traces.

    b2 holds the squared global bandwidth in global mode and the squared
    tau in localized mode; tau_eps is None in global mode. Curve draws
    are thinned; curve means average every retained draw via running
    sums.
    """

    mode: str
    h2: np.ndarray
    b2: np.ndarray
    tau_eps: np.ndarray | None
    log_post: np.ndarray
    accept_h: np.ndarray
    accept_b: np.ndarray
    accept_tau_eps: np.ndarray | None
    tuning_h: np.ndarray
    tuning_b: np.ndarray
    tuning_tau_eps: np.ndarray | None
    curve_means: dict[str, np.ndarray]
    curve_draws: dict[str, np.ndarray]
    curve_thin: int
    n_burnin: int

    def __post_init__(self):
        if np.any(self.h2 <= 0) or np.any(self.b2 <= 0):
            raise ValueError("retained squared draws must be positive")

    @property
    def n_draws(self) -> int:
        return self.h2.size

    def parameter_names(self) -> tuple[str, ...]:
        if self.mode == GLOBAL:
            return ("h", "b")
        return ("h", "tau", "tau_eps")

    def bandwidth_draws(self, name: str) -> np.ndarray:
        """Draws on the reporting scale (roots of the squared draws)."""
        if name == "h":
            return np.sqrt(self.h2)
        if name == "b" and self.mode == GLOBAL:
            return np.sqrt(self.b2)
        if name == "tau" and self.mode == LOCALIZED:
            return np.sqrt(self.b2)
        if name == "tau_eps" and self.mode == LOCALIZED:
            return self.tau_eps
        raise KeyError(f"no parameter {name!r} in {self.mode} mode")

    def acceptance_rate(self, name: str) -> float:
        flags = {"h": self.accept_h, "b": self.accept_b,
                 "tau": self.accept_b, "tau_eps": self.accept_tau_eps}.get(name)
        if flags is None:
            raise KeyError(f"no parameter {name!r} in {self.mode} mode")
        return float(np.mean(flags))

    def sampling_scale_draws(self) -> np.ndarray:
        """Draw matrix on the scale the walk ran on: columns h2, b2
        (or tau2), and tau_eps when localized."""
        cols = [self.h2, self.b2]
        if self.mode == LOCALIZED:
            cols.append(self.tau_eps)
        return np.column_stack(cols)

    def posterior_mean_point(self) -> np.ndarray:
        """Ergodic average on the sampling scale (arithmetic mean)."""
        return self.sampling_scale_draws().mean(axis=0)


def run_sampler(model, config: McmcConfig,
                rng: np.random.Generator | None = None) -> McmcChain:
    """Adaptive random-walk Metropolis over the model's bandwidths.

    Starting points are uniform on (0,1) per parameter. Every iteration
    updates the squared smoothing bandwidth first (one model refit per
    proposal), then each error-density parameter with the residuals
    held fixed. tau_eps proposals are reflected back into [0,1]. The
    first n_burnin sweeps only adapt; the rest are retained.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    mode = config.bandwidth_mode
    localized = mode == LOCALIZED
    prior_h, prior_b = config.prior_h, config.prior_b
    M, N = config.n_burnin, config.n_iter

    h2 = rng.random()
    b2 = rng.random()
    te = rng.random() if localized else None

    def dens_params():
        return (math.sqrt(b2), te) if localized else (math.sqrt(b2),)

    def dens_sq():
        return (b2, te) if localized else (b2,)

    fit = model.refit(math.sqrt(h2))
    residuals = fit.loo_residuals
    ll = _density_log_likelihood(residuals, mode, dens_params())
    lp = ll + prior_h.log_pdf(h2) + _density_log_prior(mode, prior_b, dens_sq())

    tun_h = tun_b = config.initial_tuning
    tun_e = config.initial_tuning if localized else None

    h2_out = np.empty(N)
    b2_out = np.empty(N)
    te_out = np.empty(N) if localized else None
    lp_out = np.empty(N)
    acc_h_out = np.zeros(N, dtype=bool)
    acc_b_out = np.zeros(N, dtype=bool)
    acc_e_out = np.zeros(N, dtype=bool) if localized else None
    tun_h_out = np.empty(N)
    tun_b_out = np.empty(N)
    tun_e_out = np.empty(N) if localized else None

    curve_sums: dict[str, np.ndarray] = {}
    curve_stacks: dict[str, list[np.ndarray]] = {}

    for k in range(1, M + N + 1):
        # smoothing bandwidth move: needs a refit
        prop = h2 + tun_h * rng.standard_normal()
        u = rng.random()
        acc_h = False
        if prop > 0 and np.isfinite(prior_h.log_pdf(prop)):
            try:
                fit_prop = model.refit(math.sqrt(prop))
            except (ValueError, FloatingPointError, np.linalg.LinAlgError):
                fit_prop = None
            if fit_prop is not None:
                ll_prop = _density_log_likelihood(
                    fit_prop.loo_residuals, mode, dens_params())
                lp_prop = (ll_prop + prior_h.log_pdf(prop)
                           + _density_log_prior(mode, prior_b, dens_sq()))
                if lp_prop > -np.inf and _log_u(u) < lp_prop - lp:
                    h2, fit, residuals, ll, lp = (
                        prop, fit_prop, fit_prop.loo_residuals, ll_prop, lp_prop)
                    acc_h = True
        tun_h = adapt_tuning(tun_h, k, acc_h, config.target_accept,
                             config.tuning_floor)

        # error-density scale move: residuals unchanged, no refit
        prop = b2 + tun_b * rng.standard_normal()
        u = rng.random()
        acc_b = False
        if prop > 0 and np.isfinite(prior_b.log_pdf(prop)):
            root = ((math.sqrt(prop), te) if localized
                    else (math.sqrt(prop),))
            sq = (prop, te) if localized else (prop,)
            ll_prop = _density_log_likelihood(residuals, mode, root)
            lp_prop = (ll_prop + prior_h.log_pdf(h2)
                       + _density_log_prior(mode, prior_b, sq))
            if lp_prop > -np.inf and _log_u(u) < lp_prop - lp:
                b2, ll, lp = prop, ll_prop, lp_prop
                acc_b = True
        tun_b = adapt_tuning(tun_b, k, acc_b, config.target_accept,
                             config.tuning_floor)

        acc_e = False
        if localized:
            # localization strength move, reflected into [0,1]
            prop = _reflect_unit(te + tun_e * rng.standard_normal())
            u = rng.random()
            root = (math.sqrt(b2), prop)
            ll_prop = _density_log_likelihood(residuals, mode, root)
            lp_prop = (ll_prop + prior_h.log_pdf(h2)
                       + _density_log_prior(mode, prior_b, (b2, prop)))
            if lp_prop > -np.inf and _log_u(u) < lp_prop - lp:
                te, ll, lp = prop, ll_prop, lp_prop
                acc_e = True
            tun_e = adapt_tuning(tun_e, k, acc_e, config.target_accept,
                                 config.tuning_floor)

        if k <= M:
            continue
        i = k - M - 1
        h2_out[i] = h2
        b2_out[i] = b2
        lp_out[i] = lp
        acc_h_out[i] = acc_h
        acc_b_out[i] = acc_b
        tun_h_out[i] = tun_h
        tun_b_out[i] = tun_b
        if localized:
            te_out[i] = te
            acc_e_out[i] = acc_e
            tun_e_out[i] = tun_e
        cur = model.curves(fit)
        for name, vec in cur.items():
            if name not in curve_sums:
                curve_sums[name] = np.zeros_like(vec)
                curve_stacks[name] = []
            curve_sums[name] += vec
            if i % config.curve_thin == 0:
                curve_stacks[name].append(vec.copy())

    for name, flags in (("h", acc_h_out), ("b", acc_b_out)) + (
            (("tau_eps", acc_e_out),) if localized else ()):
        if not flags.any():
            raise RuntimeError(
                f"no accepted proposals for parameter {name!r} after "
                f"burn-in; rerun with a different initial proposal scale "
                f"(initial_tuning / tau0)")

    return McmcChain(
        mode=mode,
        h2=h2_out,
        b2=b2_out,
        tau_eps=te_out,
        log_post=lp_out,
        accept_h=acc_h_out,
        accept_b=acc_b_out,
        accept_tau_eps=acc_e_out,
        tuning_h=tun_h_out,
        tuning_b=tun_b_out,
        tuning_tau_eps=tun_e_out,
        curve_means={k: v / N for k, v in curve_sums.items()},
        curve_draws={k: np.array(v) for k, v in curve_stacks.items()},
        curve_thin=config.curve_thin,
        n_burnin=M,
    )


def _reflect_unit(x: float) -> float:
    # fold the real line into [0,1]
    x = x % 2.0
    return 2.0 - x if x > 1.0 else x


def _log_u(u: float) -> float:
    return math.log(u) if u > 0.0 else -math.inf


def autocorrelation(draws, max_lag: int = 50) -> np.ndarray:
    """Sample ACF at lags 0..max_lag (biased normalization)."""
    x = np.asarray(draws, dtype=float)
    if x.ndim != 1 or x.size <= max_lag:
        raise ValueError("need a 1-d chain longer than max_lag")
    x = x - x.mean()
    denom = float(np.dot(x, x))
    if denom == 0.0:
        return np.r_[1.0, np.zeros(max_lag)]
    acf = np.empty(max_lag + 1)
    acf[0] = 1.0
    for lag in range(1, max_lag + 1):
        acf[lag] = float(np.dot(x[:-lag], x[lag:])) / denom
    return acf


def batch_mean_se(draws) -> float:
    """Batch-mean standard error with floor(sqrt(N)) batches."""
    x = np.asarray(draws, dtype=float)
    n = x.size
    a = int(math.floor(math.sqrt(n)))
    if a < 2:
        raise ValueError("chain too short for batch means")
    length = n // a
    means = x[: a * length].reshape(a, length).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(a))


def inefficiency_factor(naive_se: float, batch_se: float) -> float:
    """Simulation inefficiency: squared ratio of batch to naive SE."""
    if naive_se <= 0:
        raise ValueError("naive_se must be positive")
    return float((batch_se / naive_se) ** 2)


@dataclass(frozen=True)
class ParameterSummary:
    name: str
    mean: float
    ci_lower: float
    ci_upper: float
    naive_se: float
    batch_se: float
    sif: float
    acf: np.ndarray

    def __post_init__(self):
        if self.ci_lower > self.ci_upper:
            raise ValueError("credible interval bounds out of order")
        if self.sif < 0:
            raise ValueError("SIF must be nonnegative")


@dataclass(frozen=True)
class PosteriorSummary:
    parameters: tuple[ParameterSummary, ...]
    acceptance: dict[str, float]
    n_draws: int

    def parameter(self, name: str) -> ParameterSummary:
        for p in self.parameters:
            if p.name == name:
                return p
        raise KeyError(name)


def diagnostics(chain: McmcChain, max_lag: int = 50) -> PosteriorSummary:
    """Posterior summaries on the reporting (root) scale.

    Mean, central 95% credible interval, naive SE sd/sqrt(N), batch-mean
    SE, their squared ratio (SIF), and the ACF out to max_lag.
    """
    if chain.n_draws < 100:
        raise ValueError("chain too short for diagnostics (need >= 100)")
    entries = []
    for name in chain.parameter_names():
        d = chain.bandwidth_draws(name)
        naive = float(d.std(ddof=1) / math.sqrt(d.size))
        batch = batch_mean_se(d)
        lo, hi = np.percentile(d, [2.5, 97.5])
        sif = inefficiency_factor(naive, batch) if naive > 0 else 0.0
        entries.append(ParameterSummary(
            name=name, mean=float(d.mean()), ci_lower=float(lo),
            ci_upper=float(hi), naive_se=naive, batch_se=batch, sif=sif,
            acf=autocorrelation(d, max_lag)))
    acceptance = {name: chain.acceptance_rate(name)
                  for name in chain.parameter_names()}
    return PosteriorSummary(parameters=tuple(entries), acceptance=acceptance,
                            n_draws=chain.n_draws)


def chib_marginal_likelihood(chain: McmcChain, model,
                             config: McmcConfig) -> float:
    """Log marginal likelihood from the candidate identity.

    Evaluates log-likelihood plus log-prior at the posterior mean of
    the sampling-scale parameters and subtracts a Gaussian-product KDE
    estimate of the log posterior density there, built from the
    retained draws with normal-reference bandwidths.
    """
    draws = chain.sampling_scale_draws()
    theta = draws.mean(axis=0)
    n, d = draws.shape
    sd = draws.std(axis=0, ddof=1)
    if np.any(sd <= np.maximum(np.abs(theta), 1.0) * 1e-12):
        raise RuntimeError("degenerate chain: a parameter never moved")
    bw = sd * (4.0 / ((d + 2.0) * n)) ** (1.0 / (d + 4.0))
    z = (theta[None, :] - draws) / bw[None, :]
    log_kernel = -0.5 * np.sum(z * z, axis=1) - np.sum(np.log(bw)) \
        - 0.5 * d * math.log(2.0 * math.pi)
    log_post_density = float(logsumexp(log_kernel) - math.log(n))
    if not np.isfinite(log_post_density):
        raise RuntimeError(
            "posterior KDE vanished at the posterior mean; chain does not "
            "cover its own mean")

    mode = chain.mode
    h2 = float(theta[0])
    fit = model.refit(math.sqrt(h2))
    if mode == GLOBAL:
        root = (math.sqrt(float(theta[1])),)
        sq = (float(theta[1]),)
    else:
        root = (math.sqrt(float(theta[1])), float(theta[2]))
        sq = (float(theta[1]), float(theta[2]))
    ll = _density_log_likelihood(fit.loo_residuals, mode, root)
    lprior = config.prior_h.log_pdf(h2) + _density_log_prior(
        mode, config.prior_b, sq)
    return float(ll + lprior - log_post_density)


@dataclass(frozen=True)
class SemiMetricSelection:
    spec: SemiMetricSpec
    lml: float | None
    log_bayes_factor: float | None
    rank: int
    error: str | None = None


def select_semimetric(model_builder, candidates, config: McmcConfig):
    """Rank candidate semi-metrics by log marginal likelihood.

    model_builder(spec) must return a sampler model for that candidate.
    One chain runs per candidate on an independent, deterministically
    derived RNG stream. A failing candidate is recorded with its error
    and ranked last; the others still complete. log Bayes factors are
    relative to the winner (0 for the winner, negative otherwise).
    """
    candidates = [SemiMetricSpec.parse(c) if isinstance(c, str) else c
                  for c in candidates]
    if len(candidates) < 2:
        raise ValueError("need at least 2 candidate semi-metrics")
    streams = np.random.SeedSequence(config.seed).spawn(len(candidates))
    scored: list[tuple[SemiMetricSpec, float | None, str | None]] = []
    for spec, stream in zip(candidates, streams):
        try:
            model = model_builder(spec)
            chain = run_sampler(model, config,
                                rng=np.random.default_rng(stream))
            lml = chib_marginal_likelihood(chain, model, config)
            scored.append((spec, lml, None))
        except Exception as exc:  # isolate candidate failures
            scored.append((spec, None, f"{type(exc).__name__}: {exc}"))
    ok = sorted((s for s in scored if s[1] is not None),
                key=lambda s: -s[1])
    failed = [s for s in scored if s[1] is None]
    best = ok[0][1] if ok else None
    results = []
    for rank, (spec, lml, err) in enumerate(ok + failed, start=1):
        bf = None if lml is None else lml - best
        results.append(SemiMetricSelection(
            spec=spec, lml=lml, log_bayes_factor=bf, rank=rank, error=err))
    return results


def posterior_error_density(chain: McmcChain, residuals):
    """Error density at the posterior-mean bandwidths (root scale)."""
    if chain.mode == GLOBAL:
        b = float(np.sqrt(chain.b2).mean())
        return GlobalKernelDensity(np.asarray(residuals, float), b=b)
    tau = float(np.sqrt(chain.b2).mean())
    te = float(chain.tau_eps.mean())
    return LocalizedKernelDensity(np.asarray(residuals, float),
                                  tau=tau, tau_eps=te)


class _BayesianRegressorBase(RegressorMixin, BaseEstimator):
    """Shared fit machinery for the sampler-backed regressors."""

    def _config(self) -> McmcConfig:
        return McmcConfig(
            n_burnin=self.n_burnin, n_iter=self.n_iter,
            initial_tuning=self.initial_tuning, curve_thin=self.curve_thin,
            seed=self.seed, bandwidth_mode=self.bandwidth_mode,
            prior_h=InverseGammaPrior(self.prior_shape, self.prior_scale),
            prior_b=InverseGammaPrior(self.prior_shape, self.prior_scale))

    def _finish_fit(self, model, compute_lml: bool):
        config = self._config()
        self.chain_ = run_sampler(model, config)
        self.summary_ = diagnostics(self.chain_)
        self.bandwidth_ = self.summary_.parameter("h").mean
        self.model_ = model
        self.fit_ = model.refit(self.bandwidth_)
        # density estimate uses the plain fitted residuals; the
        # self-excluded ones only drive the bandwidth likelihood
        self.density_ = posterior_error_density(self.chain_,
                                                self.fit_.residuals)
        self.lml_ = (chib_marginal_likelihood(self.chain_, model, config)
                     if compute_lml else None)
        return self

    def _interval_offsets(self, level: float) -> tuple[float, float]:
        check_is_fitted(self, "density_")
        if not 0.0 < level < 1.0:
            raise ValueError("level must lie strictly between 0 and 1")
        lo = quantile(self.density_, (1.0 - level) / 2.0)
        hi = quantile(self.density_, (1.0 + level) / 2.0)
        return lo, hi


class BayesianFplmRegressor(_BayesianRegressorBase):
    """Partial linear functional regressor with sampled bandwidths.

    fit() runs the Metropolis sampler, fixes the smoothing bandwidth at
    its posterior mean, refits, and keeps the error density at the
    posterior-mean density parameters for interval prediction.
    """

    def __init__(self, semimetric="deriv:2", bandwidth_mode=GLOBAL,
                 n_burnin=1_000, n_iter=10_000, initial_tuning=0.1,
                 curve_thin=10, prior_shape=1.0, prior_scale=0.05,
                 n_pc_beta=None, seed=0, grid=None, compute_lml=True):
        self.semimetric = semimetric
        self.bandwidth_mode = bandwidth_mode
        self.n_burnin = n_burnin
        self.n_iter = n_iter
        self.initial_tuning = initial_tuning
        self.curve_thin = curve_thin
        self.prior_shape = prior_shape
        self.prior_scale = prior_scale
        self.n_pc_beta = n_pc_beta
        self.seed = seed
        self.grid = grid
        self.compute_lml = compute_lml

    def fit(self, X, y, Z=None):
        model = FplmSamplerModel(X, y, Z=Z, spec=self.semimetric,
                                 n_pc_beta=self.n_pc_beta, grid=self.grid)
        self.z_derived_ = Z is None
        return self._finish_fit(model, self.compute_lml)

    def predict(self, X, Z=None):
        check_is_fitted(self, "fit_")
        X = as_functional_sample(X, self.model_.X.grid)
        if Z is None:
            if not self.z_derived_:
                raise ValueError(
                    "model was fit with explicit Z; pass Z to predict")
            Z = derive_first_derivative(X)
        else:
            Z = as_functional_sample(Z)
        return predict_fplm(self.fit_, X, Z)

    def predict_interval(self, X, Z=None, level: float = 0.8):
        """(point, lower, upper) arrays; one shared error density."""
        point = self.predict(X, Z)
        lo, hi = self._interval_offsets(level)
        return point, point + lo, point + hi


class BayesianFnpRegressor(_BayesianRegressorBase):
    """Kernel-only functional regressor with sampled bandwidths."""

    def __init__(self, semimetric="deriv:2", bandwidth_mode=GLOBAL,
                 n_burnin=1_000, n_iter=10_000, initial_tuning=0.1,
                 curve_thin=10, prior_shape=1.0, prior_scale=0.05,
                 seed=0, grid=None, compute_lml=True):
        self.semimetric = semimetric
        self.bandwidth_mode = bandwidth_mode
        self.n_burnin = n_burnin
        self.n_iter = n_iter
        self.initial_tuning = initial_tuning
        self.curve_thin = curve_thin
        self.prior_shape = prior_shape
        self.prior_scale = prior_scale
        self.seed = seed
        self.grid = grid
        self.compute_lml = compute_lml

    def fit(self, X, y):
        model = FnpSamplerModel(X, y, spec=self.semimetric, grid=self.grid)
        return self._finish_fit(model, self.compute_lml)

    def predict(self, X):
        check_is_fitted(self, "fit_")
        X = as_functional_sample(X, self.model_.curves_sample.grid)
        return predict_fnp(self.fit_, X)

    def predict_interval(self, X, level: float = 0.8):
        point = self.predict(X)
        lo, hi = self._interval_offsets(level)
        return point, point + lo, point + hi
