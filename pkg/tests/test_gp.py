import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from priorgp.errors import InvalidArgumentError, NumericalIndefinitenessError
from priorgp.gp import (
    IDENTITY,
    Hyperparameters,
    PolynomialMean,
    Standardizer,
    cholesky_with_jitter,
    gram,
    kernel_poly,
    kernel_se,
    log_marginal_likelihood,
    log_marginal_likelihood_shared,
    mean_poly,
    poly_model,
    posterior,
    se_model,
)


def dense_lml(k, r):
    """Textbook formula with an explicit inverse and determinant."""
    n = r.size
    _, logdet = np.linalg.slogdet(k)
    return float(-0.5 * r @ np.linalg.inv(k) @ r - 0.5 * logdet - 0.5 * n * math.log(2 * math.pi))


def se_dense(xs, sf, ell, sy):
    d = xs[:, None] - xs[None, :]
    return sf**2 * np.exp(-(d**2) / (2 * ell**2)) + sy**2 * np.eye(xs.size)


class TestScalarKernels:
    def test_se_at_zero_distance(self):
        theta = Hyperparameters(sigma_f=2.0, length=0.3, sigma_y=0.5)
        assert kernel_se(1.0, 1.0, theta) == pytest.approx(4.0)
        assert kernel_se(1.0, 1.0, theta, same_index=True) == pytest.approx(4.25)

    def test_se_decay(self):
        theta = Hyperparameters(sigma_f=1.0, length=1.0)
        assert kernel_se(0.0, 2.0, theta) == pytest.approx(math.exp(-2.0), rel=1e-15)

    def test_poly(self):
        theta = Hyperparameters(sigma_f=1.5, offset=0.5, sigma_y=0.1)
        assert kernel_poly(2.0, 3.0, theta, 2) == pytest.approx(2.25 * 6.5**2)
        assert kernel_poly(2.0, 3.0, theta, 2, same_index=True) == pytest.approx(2.25 * 6.5**2 + 0.01)

    def test_poly_order_zero_rejected(self):
        with pytest.raises(InvalidArgumentError):
            kernel_poly(1.0, 1.0, Hyperparameters(), 0)

    def test_mean_poly_horner(self):
        assert mean_poly(2.0, [1.0, -3.0, 0.5]) == pytest.approx(1.0 - 6.0 + 2.0)
        assert mean_poly(7.0, [4.0]) == 4.0

    def test_mean_poly_empty(self):
        with pytest.raises(InvalidArgumentError):
            mean_poly(1.0, [])

    @pytest.mark.parametrize("bad", [dict(sigma_f=0.0), dict(length=-1.0), dict(sigma_y=-0.1), dict(offset=-1.0), dict(sigma_f=math.nan)])
    def test_invalid_hyperparameters(self, bad):
        with pytest.raises(InvalidArgumentError):
            Hyperparameters(**bad)

    def test_non_finite_location(self):
        with pytest.raises(InvalidArgumentError):
            kernel_se(math.inf, 0.0, Hyperparameters())

    def test_vectorized_matches_scalar(self):
        rng = np.random.default_rng(3)
        xs = rng.uniform(-2, 2, 6)
        theta = Hyperparameters(sigma_f=1.3, length=0.7, sigma_y=0.2)
        k = gram(xs, se_model(1.3, 0.7, 0.2))
        expected = [[kernel_se(a, b, theta, i == j) for j, b in enumerate(xs)] for i, a in enumerate(xs)]
        np.testing.assert_allclose(k, expected, rtol=1e-14)
        kp = gram(xs, poly_model(1.3, 0.4, 3, 0.2))
        theta_p = Hyperparameters(sigma_f=1.3, offset=0.4, sigma_y=0.2)
        expected_p = [[kernel_poly(a, b, theta_p, 3, i == j) for j, b in enumerate(xs)] for i, a in enumerate(xs)]
        np.testing.assert_allclose(kp, expected_p, rtol=1e-13)


class TestGram:
    def test_exactly_symmetric(self):
        xs = np.random.default_rng(0).uniform(0, 10, 40)
        k = gram(xs, poly_model(0.9, 1.0, 4, 0.01))
        assert np.array_equal(k, k.T)

    def test_empty_rejected(self):
        with pytest.raises(InvalidArgumentError):
            gram([], se_model(1, 1))

    def test_jitter_rescues_rank_deficiency(self):
        xs = np.linspace(-1, 1, 8)
        k = gram(xs, poly_model(1.0, 1.0, 1))
        chol, jitter = cholesky_with_jitter(k)
        assert jitter > 0
        np.testing.assert_allclose(chol @ chol.T, k + jitter * np.eye(8), atol=1e-12)

    def test_no_jitter_when_definite(self):
        _, jitter = cholesky_with_jitter(np.eye(3))
        assert jitter == 0.0

    def test_indefinite_raises(self):
        with pytest.raises(NumericalIndefinitenessError) as info:
            cholesky_with_jitter(np.array([[1.0, 0.0], [0.0, -1.0]]))
        assert info.value.jitter > 0


class TestLogMarginalLikelihood:
    @settings(max_examples=60, deadline=None)
    @given(
        n=st.integers(1, 6),
        sf=st.floats(0.2, 3.0),
        ell=st.floats(0.2, 3.0),
        sy=st.floats(0.05, 1.0),
        seed=st.integers(0, 2**31 - 1),
    )
    def test_dense_formula(self, n, sf, ell, sy, seed):
        rng = np.random.default_rng(seed)
        xs = rng.uniform(-3, 3, n)
        ys = rng.normal(size=n)
        got = log_marginal_likelihood(se_model(sf, ell, sy), xs, ys)
        assert got == pytest.approx(dense_lml(se_dense(xs, sf, ell, sy), ys), rel=1e-9, abs=1e-9)

    def test_polynomial_mean_subtracted(self):
        xs = np.array([0.0, 0.5, 1.0])
        ys = np.array([1.0, 2.0, 2.5])
        model = poly_model(1.0, 1.0, 2, 0.3, coeffs=[1.0, 2.0])
        k = gram(xs, model)
        assert log_marginal_likelihood(model, xs, ys) == pytest.approx(dense_lml(k, ys - (1.0 + 2.0 * xs)), rel=1e-12)

    def test_standardizer_equals_rescaled_hyperparameters(self):
        # Standardized SE(sf, ell, sy) is SE(sf*s_y, ell*s_x, sy*s_y) in data units.
        rng = np.random.default_rng(11)
        xs, ys = np.sort(rng.uniform(0, 50, 7)), rng.normal(size=7) * 30
        std = Standardizer(x_loc=20.0, x_scale=8.0, y_loc=0.0, y_scale=25.0)
        a = log_marginal_likelihood(se_model(1.1, 0.6, 0.2, standardizer=std), xs, ys)
        b = log_marginal_likelihood(se_model(1.1 * 25.0, 0.6 * 8.0, 0.2 * 25.0), xs, ys)
        assert a == pytest.approx(b, rel=1e-11)

    def test_shared_equals_sum(self):
        rng = np.random.default_rng(5)
        xs = np.linspace(0, 1, 6)
        rows = rng.normal(size=(4, 6))
        model = se_model(1.0, 0.4, 0.1, standardizer=Standardizer(0.5, 0.3, 0.2, 2.0))
        total = sum(log_marginal_likelihood(model, xs, r) for r in rows)
        assert log_marginal_likelihood_shared(model, xs, rows) == pytest.approx(total, rel=1e-12)

    def test_single_point(self):
        got = log_marginal_likelihood(se_model(2.0, 1.0, 0.0), [0.3], [1.0])
        assert got == pytest.approx(-0.5 / 4.0 - 0.5 * math.log(4.0) - 0.5 * math.log(2 * math.pi))

    @pytest.mark.parametrize("xs,ys", [([1.0, 2.0], [1.0]), ([], []), ([1.0, math.nan], [1.0, 2.0])])
    def test_bad_input(self, xs, ys):
        with pytest.raises(InvalidArgumentError):
            log_marginal_likelihood(se_model(1, 1, 0.1), xs, ys)


class TestPosterior:
    def test_two_point_hand_formula(self):
        # K = [[1+s, r], [r, 1+s]] with r = exp(-1/2); query at the first point.
        s, r = 0.01, math.exp(-0.5)
        model = se_model(1.0, 1.0, math.sqrt(s))
        y = np.array([0.7, -0.2])
        pred = posterior(model, [0.0, 1.0], y, [0.0])
        k = np.array([[1 + s, r], [r, 1 + s]])
        kq = np.array([1.0, r])
        assert pred.mean[0] == pytest.approx(kq @ np.linalg.solve(k, y), rel=1e-13)
        assert pred.var[0] == pytest.approx(1.0 - kq @ np.linalg.solve(k, kq), rel=1e-12)
        assert pred.noise_var[0] == pytest.approx(s)

    def test_prior_when_no_observations(self):
        model = poly_model(1.0, 0.5, 2, 0.1, coeffs=[1.0, 1.0])
        pred = posterior(model, None, None, [0.0, 2.0], full_cov=True)
        np.testing.assert_allclose(pred.mean, [1.0, 3.0])
        np.testing.assert_allclose(pred.var, [0.25, 4.5**2])
        np.testing.assert_allclose(np.diag(pred.cov), pred.var)

    def test_predictive_std_includes_noise(self):
        pred = posterior(se_model(1.0, 1.0, 0.5), [0.0], [1.0], [3.0])
        assert pred.std(predictive=True)[0] == pytest.approx(math.sqrt(pred.var[0] + 0.25))

    def test_interpolates_noise_free(self):
        xs = np.array([0.0, 0.4, 1.0])
        ys = np.array([1.0, -1.0, 0.5])
        pred = posterior(se_model(1.0, 0.3, 0.0), xs, ys, xs)
        np.testing.assert_allclose(pred.mean, ys, atol=1e-6)
        np.testing.assert_allclose(pred.var, 0.0, atol=1e-6)

    def test_full_cov_diag_matches_var(self):
        xs = np.linspace(0, 1, 5)
        pred = posterior(se_model(1.0, 0.5, 0.1), xs, np.sin(xs), np.linspace(-0.5, 1.5, 7), full_cov=True)
        np.testing.assert_allclose(np.diag(pred.cov), pred.var, atol=1e-12)
        assert np.array_equal(pred.cov, pred.cov.T)

    def test_de_standardized(self):
        std = Standardizer(x_loc=10.0, x_scale=2.0, y_loc=100.0, y_scale=10.0)
        a = posterior(se_model(1.0, 0.5, 0.1, standardizer=std), [8.0, 11.0], [95.0, 104.0], [12.0])
        b = posterior(se_model(1.0, 0.5, 0.1), [-1.0, 0.5], [-0.5, 0.4], [1.0])
        assert a.mean[0] == pytest.approx(100.0 + 10.0 * b.mean[0], rel=1e-12)
        assert a.var[0] == pytest.approx(100.0 * b.var[0], rel=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), n=st.integers(1, 8))
    def test_variance_independent_of_values(self, seed, n):
        rng = np.random.default_rng(seed)
        model = se_model(rng.uniform(0.5, 2), rng.uniform(0.2, 2), rng.uniform(0.01, 0.5))
        xs = rng.uniform(-2, 2, n)
        xq = rng.uniform(-3, 3, 4)
        a = posterior(model, xs, rng.normal(size=n), xq)
        b = posterior(model, xs, rng.normal(size=n) * 100, xq)
        np.testing.assert_allclose(a.var, b.var, atol=1e-12, rtol=0)

    def test_variance_shrinks_with_data(self):
        model = se_model(1.0, 0.5, 0.1)
        prior = posterior(model, None, None, [0.5]).var[0]
        post = posterior(model, [0.4, 0.6], [0.0, 0.0], [0.5]).var[0]
        assert post < prior


def test_polynomial_mean_derivative():
    m = PolynomialMean((1.0, 2.0, 3.0))
    np.testing.assert_allclose(m.derivative(np.array([0.0, 1.0])), [2.0, 8.0])


def test_standardizer_roundtrip():
    s = Standardizer.fit([np.array([1.0, 2.0, 3.0])], [np.array([10.0, 20.0, 60.0])])
    assert Standardizer.from_dict(s.to_dict()) == s
    np.testing.assert_allclose(s.y_back(s.y([5.0, 7.0])), [5.0, 7.0])
    assert IDENTITY.x(3.0) == 3.0


def test_standardizer_scale_only_keeps_zero():
    s = Standardizer.fit([np.array([1.0, 2.0])], [np.array([3.0, 4.0])], center_y=False)
    assert s.y_loc == 0.0
    assert s.y_scale == pytest.approx(math.sqrt(12.5))
