"""Semi-metric distances: derivative L2 and FPCA-score families."""

import numpy as np
import pytest

from fplm.functional import FunctionalSample, Grid, fpca, inner_product
from fplm.semimetrics import (
    DistanceMatrix,
    SemiMetricSpec,
    distance_matrix,
    distances_to,
    train_semimetric,
)


def sample_of(values, lo=0.0, hi=np.pi):
    values = np.atleast_2d(values)
    return FunctionalSample(Grid(np.linspace(lo, hi, values.shape[1])), values)


def random_sample(n=6, m=60, seed=0):
    rng = np.random.default_rng(seed)
    g = Grid(np.linspace(0, np.pi, m))
    t = g.points
    coef = rng.uniform(size=(n, 3))
    vals = (
        coef[:, 0:1] * np.cos(2 * t)
        + coef[:, 1:2] * np.sin(4 * t)
        + coef[:, 2:3] * (t**2 - np.pi * t)
    )
    return FunctionalSample(g, vals)


class TestSpec:
    def test_parse_tokens(self):
        s = SemiMetricSpec.parse("deriv:2")
        assert s.kind == "deriv" and s.q == 2
        s = SemiMetricSpec.parse("fpca:3")
        assert s.kind == "fpca" and s.n_components == 3

    def test_token_round_trip(self):
        for tok in ("deriv:0", "deriv:1", "deriv:2", "fpca:3", "fpca:5"):
            assert SemiMetricSpec.parse(tok).token() == tok

    def test_bad_tokens_rejected(self):
        for tok in ("euclid:2", "deriv", "fpca:x", "deriv:1:2"):
            with pytest.raises(ValueError):
                SemiMetricSpec.parse(tok)

    def test_invalid_params_rejected(self):
        with pytest.raises(ValueError, match="q must be"):
            SemiMetricSpec(kind="deriv", q=-1)
        with pytest.raises(ValueError, match="n_components"):
            SemiMetricSpec(kind="fpca", n_components=0)


class TestDistanceMatrix:
    def test_self_distance_zero(self):
        s = random_sample()
        for spec in (SemiMetricSpec.derivative(1), SemiMetricSpec.fpca_scores(2)):
            d = distance_matrix(spec, s)
            assert np.all(np.diag(d.values) == 0)

    def test_symmetry_exact(self):
        s = random_sample(seed=3)
        d = distance_matrix(SemiMetricSpec.derivative(2), s)
        assert np.array_equal(d.values, d.values.T)

    def test_plain_l2_of_unit_step(self):
        # analytic oracle: ||0 - 1||_L2 over [0, pi] = sqrt(pi)
        x = np.zeros(100)
        y = np.ones(100)
        s = sample_of(np.vstack([x, y]))
        d = distance_matrix(SemiMetricSpec.derivative(0), s)
        assert abs(d.values[0, 1] - np.sqrt(np.pi)) < 1e-10

    def test_first_derivative_kills_constant_shift(self):
        s = random_sample(n=2, seed=5)
        shifted = FunctionalSample(s.grid, np.vstack([s.values[0], s.values[0] + 7.5]))
        d = distance_matrix(SemiMetricSpec.derivative(1), shifted)
        assert d.values[0, 1] < 1e-6

    def test_triangle_inequality_derivative_kind(self):
        rng = np.random.default_rng(9)
        for seed in range(5):
            s = random_sample(n=3, seed=seed)
            scale = rng.uniform(0.5, 2.0)
            d = distance_matrix(
                SemiMetricSpec.derivative(1),
                FunctionalSample(s.grid, scale * s.values),
            ).values
            assert d[0, 2] <= d[0, 1] + d[1, 2] + 1e-10

    def test_scaling_derivative_kind(self):
        s = random_sample(seed=11)
        c = 3.7
        d1 = distance_matrix(SemiMetricSpec.derivative(2), s).values
        d2 = distance_matrix(
            SemiMetricSpec.derivative(2), FunctionalSample(s.grid, c * s.values)
        ).values
        np.testing.assert_allclose(d2, c * d1, rtol=1e-10, atol=1e-12)

    def test_fpca_distances_nondecreasing_in_k(self):
        s = random_sample(n=8, seed=13)
        prev = np.zeros((8, 8))
        for k in range(1, 6):
            d = distance_matrix(SemiMetricSpec.fpca_scores(k), s).values
            assert np.all(d >= prev - 1e-10)
            prev = d

    def test_validation_rejects_asymmetric(self):
        bad = np.array([[0.0, 1.0], [2.0, 0.0]])
        with pytest.raises(ValueError, match="symmetric"):
            DistanceMatrix(bad, SemiMetricSpec.derivative(1))


class TestDistancesToNew:
    def test_new_equal_to_training_curve(self):
        s = random_sample(n=5, seed=17)
        new = FunctionalSample(s.grid, s.values[2:3])
        for spec in (SemiMetricSpec.derivative(1), SemiMetricSpec.fpca_scores(3)):
            d = distances_to(spec, s, new)
            assert d.shape == (1, 5)
            assert d[0, 2] < 1e-6

    def test_derivative_invariant_to_common_shift(self):
        s = random_sample(n=4, seed=19)
        new = FunctionalSample(s.grid, s.values[:2] + 0.3)
        spec = SemiMetricSpec.derivative(1)
        state = train_semimetric(spec, s)
        d_base = state.to_new(FunctionalSample(s.grid, s.values[:2]))
        shifted_train = FunctionalSample(s.grid, s.values + 0.3)
        d_shift = train_semimetric(spec, shifted_train).to_new(new)
        np.testing.assert_allclose(d_base, d_shift, atol=1e-8)

    def test_full_rank_fpca_matches_projected_l2(self):
        # oracle: reconstruct both curves from their full score vectors and
        # integrate the squared difference on the grid
        s = random_sample(n=6, m=80, seed=23)
        K = 5  # n - 1
        spec = SemiMetricSpec.fpca_scores(K)
        d = distance_matrix(spec, s).values
        basis = fpca(s, K=K)
        rec = basis.scores @ basis.eigenfunctions
        for i, j in [(0, 1), (2, 4), (3, 5)]:
            diff = rec[i] - rec[j]
            want = np.sqrt(inner_product(diff, diff, s.grid))
            assert abs(d[i, j] - want) < 1e-6

    def test_grid_mismatch_rejected(self):
        s = random_sample(n=4, m=50, seed=29)
        other = FunctionalSample(Grid(np.linspace(0, 1, 50)), np.zeros((1, 50)))
        state = train_semimetric(SemiMetricSpec.derivative(1), s)
        with pytest.raises(ValueError, match="grid"):
            state.to_new(other)

    def test_fpca_k_too_large_rejected(self):
        s = random_sample(n=4, seed=31)
        with pytest.raises(ValueError, match="K <="):
            train_semimetric(SemiMetricSpec.fpca_scores(4), s)
