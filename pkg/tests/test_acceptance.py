"""End-to-end acceptance checks, one test per numbered criterion.

Criteria needing the real spectrometric dataset (1, 2, 6) skip with a
pointer to FPLM_TECATOR_PATH when no file is discoverable; nothing is
downloaded. Criteria 3 and 4 each contain one absolute threshold that
sits below the attainable floor at n=100 for this estimator family;
those asserts state the threshold as given and fail honestly rather
than being loosened. The two simulation studies dominate the runtime
(about 15 minutes together); everything else finishes in seconds.
"""

import time

import numpy as np
import pytest

from fplm.bayes import (
    FnpSamplerModel,
    FplmSamplerModel,
    McmcConfig,
    chib_marginal_likelihood,
    diagnostics,
    inefficiency_factor,
    log_posterior,
    posterior_error_density,
    run_sampler,
    select_semimetric,
)
from fplm.datasets import find_tecator, load_tecator
from fplm.error_density import (
    GlobalKernelDensity,
    LocalizedKernelDensity,
    density_curve,
    loo_log_likelihood,
    prediction_interval,
)
from fplm.estimators import (
    fit_fpcr,
    nw_weights,
    predict_fnp,
    predict_fplm,
    predict_fpcr,
)
from fplm.functional import FunctionalSample, Grid, fpca
from fplm.semimetrics import SemiMetricSpec, train_semimetric
from fplm.simulation import (
    ERROR_KINDS,
    StudyArm,
    attach_errors,
    run_replication_study,
    simulate_smooth,
)

# long-run sampler settings for the real-data criteria
FULL_MCMC = McmcConfig(n_burnin=1_000, n_iter=10_000)
# study settings: long enough for stable posterior means and marginal
# likelihoods, short enough to keep both studies inside their budgets
STUDY_MCMC = McmcConfig(n_burnin=800, n_iter=4_000)


@pytest.fixture(scope="module")
def tecator():
    if find_tecator() is None:
        pytest.skip("no spectrometric dataset file; set FPLM_TECATOR_PATH "
                    "or drop tecator.csv into the cache dir")
    return load_tecator()


@pytest.fixture(scope="module")
def tecator_headline(tecator):
    """160/55 split fits shared by criteria 1 and 6."""
    learn, test = tecator.split(160)
    started = time.perf_counter()
    fplm_model = FplmSamplerModel(learn.spectra, learn.fat,
                                  Z=learn.derivative(), spec="deriv:2")
    fplm_chain = run_sampler(fplm_model, FULL_MCMC)
    fplm_fit = fplm_model.refit(float(np.sqrt(fplm_chain.h2).mean()))
    fplm_pred = predict_fplm(fplm_fit, test.spectra, test.derivative())

    fnp_model = FnpSamplerModel(learn.spectra, learn.fat, spec="deriv:2")
    fnp_chain = run_sampler(fnp_model, FULL_MCMC)
    fnp_fit = fnp_model.refit(float(np.sqrt(fnp_chain.h2).mean()))
    fnp_pred = predict_fnp(fnp_fit, test.spectra)

    fpcr_fit = fit_fpcr(learn.spectra, learn.fat)
    fpcr_pred = predict_fpcr(fpcr_fit, test.spectra)
    elapsed = time.perf_counter() - started

    def rmspe(pred):
        return float(np.sqrt(np.mean((test.fat - pred) ** 2)))

    return {
        "rmspe": {"fplm": rmspe(fplm_pred), "fnp": rmspe(fnp_pred),
                  "fpcr": rmspe(fpcr_pred)},
        "fplm_chain": fplm_chain,
        "fplm_fit": fplm_fit,
        "fplm_pred": fplm_pred,
        "test_fat": test.fat,
        "elapsed": elapsed,
    }


@pytest.fixture(scope="module")
def accuracy_study():
    """Criterion 3: partial linear vs fully nonparametric, 20 reps."""
    arms = (
        StudyArm(name="fplm", model="fplm", semimetric="deriv:2"),
        StudyArm(name="fnp", model="fnp", semimetric="deriv:2"),
    )
    started = time.perf_counter()
    report = run_replication_study(arms, densities=ERROR_KINDS, n=100,
                                   B=20, seed=0, mcmc=STUDY_MCMC)
    return report, time.perf_counter() - started


@pytest.fixture(scope="module")
def density_study():
    """Criterion 4: global vs localized error-density bandwidths."""
    arms = (
        StudyArm(name="fplm_global", model="fplm", semimetric="deriv:2",
                 bandwidth_mode="global"),
        StudyArm(name="fplm_localized", model="fplm", semimetric="deriv:2",
                 bandwidth_mode="localized"),
    )
    report = run_replication_study(arms, densities=("t5",), n=100, B=20,
                                   seed=0, mcmc=STUDY_MCMC)
    return report


def test_criterion_01_real_data_split_accuracy(tecator_headline):
    r = tecator_headline["rmspe"]
    assert r["fplm"] < r["fnp"] < r["fpcr"], f"ordering violated: {r}"
    assert 1.0 <= r["fplm"] <= 2.2, f"partial linear rmspe {r['fplm']:.4f}"
    assert 1.5 <= r["fnp"] <= 2.6, f"nonparametric rmspe {r['fnp']:.4f}"
    assert 8.0 <= r["fpcr"] <= 10.5, f"pc regression rmspe {r['fpcr']:.4f}"
    assert tecator_headline["elapsed"] <= 900.0


def test_criterion_02_semimetric_ranking_on_real_data(tecator):
    learn, _ = tecator.split(160)

    def builder(spec):
        return FplmSamplerModel(learn.spectra, learn.fat,
                                Z=learn.derivative(), spec=spec)

    published = {"deriv:2": -291.37, "deriv:1": -360.21,
                 "fpca:3": -524.48}
    for seed in (0, 1, 2):
        config = McmcConfig(n_burnin=STUDY_MCMC.n_burnin,
                            n_iter=STUDY_MCMC.n_iter, seed=seed)
        results = select_semimetric(builder, list(published), config)
        lml = {r.spec.token(): r.lml for r in results}
        assert lml["deriv:2"] > lml["deriv:1"] > lml["fpca:3"], \
            f"seed {seed}: {lml}"
        # absolute scale is reported, not gating
        for token, ref in published.items():
            off = abs(lml[token] - ref) / abs(ref)
            print(f"seed {seed} {token}: lml {lml[token]:.2f} "
                  f"(reference {ref}, rel. offset {off:.0%})")


def test_criterion_03_simulation_accuracy_ordering(accuracy_study):
    report, elapsed = accuracy_study
    assert elapsed <= 3600.0
    assert not report.failures, report.failures
    amse = {kind: {arm: report.aggregate(arm, "mse", kind)
                   for arm in ("fplm", "fnp")} for kind in ERROR_KINDS}
    for kind in ERROR_KINDS:
        assert amse[kind]["fplm"] < amse[kind]["fnp"], \
            f"{kind}: {amse[kind]}"
        assert amse[kind]["fplm"] < 2.0, f"{kind}: {amse[kind]}"
    for kind in ERROR_KINDS:
        assert amse[kind]["fnp"] > 3.5, (
            f"{kind}: nonparametric amse {amse[kind]['fnp']:.3f} <= 3.5; "
            "the posterior concentrates at the prediction-optimal "
            "bandwidth, where this arm is far more accurate than the "
            "threshold anticipates")


def test_criterion_04_error_density_accuracy(density_study):
    report = density_study
    assert not report.failures, report.failures
    amise_g = report.aggregate("fplm_global", "mise", "t5")
    amise_l = report.aggregate("fplm_localized", "mise", "t5")
    assert amise_l <= amise_g, f"localized {amise_l:.5f} > global {amise_g:.5f}"
    assert amise_l < 0.003, (
        f"localized amise {amise_l:.5f} >= 0.003; a kernel estimate "
        "built on 100 residuals has an integrated variance floor near "
        "0.0028/b, so this threshold is out of reach at this sample size")


def test_criterion_05_diagnostics_calibration():
    # published standard-error pairs reproduce the quoted factors
    assert abs(inefficiency_factor(0.1217, 0.3175) - 6.80) < 0.01
    assert abs(inefficiency_factor(0.0967, 0.2300) - 5.65) < 0.01
    # a fresh run of the same design keeps h inside the quoted interval
    draw = attach_errors(simulate_smooth(100, seed=0), "t5", seed=1)
    model = FplmSamplerModel(draw.X, draw.y, Z=draw.Z, spec="fpca:3")
    chain = run_sampler(model, FULL_MCMC)
    h_mean = diagnostics(chain).parameter("h").mean
    assert 0.2136 < h_mean < 0.7026, f"h posterior mean {h_mean:.4f}"


def test_criterion_06_interval_coverage(tecator_headline):
    chain = tecator_headline["fplm_chain"]
    fit = tecator_headline["fplm_fit"]
    density = posterior_error_density(chain, fit.residuals)
    pred = tecator_headline["fplm_pred"]
    fat = tecator_headline["test_fat"]
    coverage = {}
    for level in (0.8, 0.5):
        hits = 0
        for yhat, y in zip(pred, fat):
            iv = prediction_interval(density, float(yhat), level)
            hits += iv.lower <= y <= iv.upper
        coverage[level] = hits / len(fat)
    assert 0.70 <= coverage[0.8] <= 0.95, coverage
    assert 0.38 <= coverage[0.5] <= 0.62, coverage


def test_criterion_07_oracle_equivalences():
    started = time.perf_counter()

    # marginal likelihood identity vs direct 2-D quadrature, small model
    draw = attach_errors(simulate_smooth(30, seed=2), "t5", seed=3)
    model = FnpSamplerModel(draw.X, draw.y, spec="fpca:3")
    config = McmcConfig(n_burnin=500, n_iter=4_000, seed=1)
    chain = run_sampler(model, config)
    lml = chib_marginal_likelihood(chain, model, config)
    H = np.linspace(chain.h2.min() / 8.0, chain.h2.max() * 8.0, 200)
    B = np.linspace(chain.b2.min() / 8.0, chain.b2.max() * 8.0, 200)
    lp = np.empty((H.size, B.size))
    for i, h2 in enumerate(H):
        for j, b2 in enumerate(B):
            lp[i, j] = log_posterior((h2, b2), model)
    peak = lp.max()
    inner = np.trapezoid(np.exp(lp - peak), B, axis=1)
    quad = peak + np.log(np.trapezoid(inner, H))
    edge = max(lp[0].max(), lp[-1].max(), lp[:, 0].max(), lp[:, -1].max())
    assert np.exp(edge - peak) < 1e-9  # box captures the mass
    assert abs(lml - quad) < 0.5, f"chib {lml:.3f} vs quadrature {quad:.3f}"

    # component scores vs dense quadrature-weighted Gram eigenvalues
    rng = np.random.default_rng(7)
    grid = Grid(np.linspace(0.0, np.pi, 40))
    sample = FunctionalSample(grid, rng.normal(size=(5, 40)))
    res = fpca(sample, K=3)
    centered = sample.values - sample.values.mean(axis=0)
    gram = (centered * grid.quadrature_weights()) @ centered.T / sample.n
    oracle = np.sort(np.linalg.eigvalsh(gram))[::-1][:3]
    np.testing.assert_allclose(res.eigenvalues, oracle, atol=1e-8)

    # hand-computed self-excluded likelihood and kernel weights
    assert loo_log_likelihood(np.array([-1.0, 0.0, 1.0]), b=1.0) \
        == pytest.approx(-5.240, abs=1e-3)
    w, _ = nw_weights(np.array([0.0, 1.0, 2.0]), h=1.0)
    np.testing.assert_allclose(w, [0.5741, 0.3482, 0.0777], atol=1e-4)

    assert time.perf_counter() - started < 60.0


def test_criterion_08_invariant_suite():
    started = time.perf_counter()
    rng = np.random.default_rng(42)

    # kernel weight rows are probability vectors
    for h in (0.3, 1.0, 5.0):
        for _ in range(5):
            w, _ = nw_weights(rng.uniform(0.0, 4.0, size=30), h=h)
            assert abs(w.sum() - 1.0) < 1e-12
            assert np.all(w >= 0.0)

    # residual densities integrate to one
    residuals = rng.standard_normal(40)
    for density in (GlobalKernelDensity(residuals, b=0.6),
                    LocalizedKernelDensity(residuals, tau=0.5,
                                           tau_eps=0.4)):
        eps, f = density_curve(density)
        assert abs(np.trapezoid(f, eps) - 1.0) < 1e-3

    # curve distances: symmetric with a zero diagonal
    grid = Grid(np.linspace(0.0, np.pi, 50))
    curves = FunctionalSample(grid, rng.normal(size=(12, 50)).cumsum(axis=1))
    for token in ("deriv:1", "deriv:2", "fpca:3"):
        D = train_semimetric(SemiMetricSpec.parse(token),
                             curves).pairwise().values
        np.testing.assert_allclose(D, D.T, atol=1e-10)
        np.testing.assert_allclose(np.diag(D), 0.0, atol=1e-10)

    # shifting every response leaves the kernel likelihood unchanged
    draw = attach_errors(simulate_smooth(30, seed=5), "t5", seed=6)
    for build in (lambda y: FnpSamplerModel(draw.X, y, spec="fpca:3"),
                  lambda y: FplmSamplerModel(draw.X, y, Z=draw.Z,
                                             spec="deriv:2")):
        base = log_posterior((0.4, 0.5), build(draw.y))
        shifted = log_posterior((0.4, 0.5), build(draw.y + 7.0))
        assert shifted == pytest.approx(base, rel=1e-8)

    # fixed seeds pin down chains and study reports bit for bit
    model = FnpSamplerModel(draw.X, draw.y, spec="fpca:3")
    fast = McmcConfig(n_burnin=60, n_iter=200, seed=9)
    c1, c2 = run_sampler(model, fast), run_sampler(model, fast)
    assert np.array_equal(c1.h2, c2.h2) and np.array_equal(c1.b2, c2.b2)
    arm = (StudyArm(name="fplm", model="fplm", semimetric="fpca:2"),)
    r1 = run_replication_study(arm, densities=("t5",), n=25, B=1, seed=3,
                               mcmc=fast, holdout_size=10)
    r2 = run_replication_study(arm, densities=("t5",), n=25, B=1, seed=3,
                               mcmc=fast, holdout_size=10)
    assert r1.rows == r2.rows

    assert time.perf_counter() - started < 60.0
