import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from robustpf.dist import (
    GaussianParams,
    NoiseModel,
    StudentTParams,
    gaussian_logpdf,
    mahalanobis_sq,
    make_rng,
    sample_gamma,
    sample_gaussian,
    sample_uniform,
    student_t_logpdf,
)


def t1(dof, mean=0.0, scale=1.0):
    return StudentTParams([mean], [[scale]], dof)


class TestMahalanobis:
    def test_zero_at_mean(self):
        mu = np.array([1.5, -2.0, 0.3])
        cov = np.array([[2.0, 0.3, 0.0], [0.3, 1.0, 0.1], [0.0, 0.1, 0.5]])
        assert mahalanobis_sq(mu, mu, cov) == 0.0

    def test_identity_is_euclidean(self):
        assert mahalanobis_sq([3.0, 4.0], [0.0, 0.0], np.eye(2)) == pytest.approx(25.0, abs=1e-12)

    def test_diagonal(self):
        assert mahalanobis_sq([2.0, 1.0], [0.0, 0.0], np.diag([4.0, 1.0])) == pytest.approx(2.0, abs=1e-12)

    def test_matches_explicit_inverse(self):
        rng = np.random.default_rng(3)
        a = rng.standard_normal((4, 4))
        cov = a @ a.T + 4 * np.eye(4)
        x, mu = rng.standard_normal(4), rng.standard_normal(4)
        expected = (x - mu) @ np.linalg.inv(cov) @ (x - mu)
        assert mahalanobis_sq(x, mu, cov) == pytest.approx(expected, rel=1e-12)

    def test_batch(self):
        x = np.array([[1.0, 0.0], [0.0, 2.0], [3.0, 4.0]])
        np.testing.assert_allclose(mahalanobis_sq(x, [0, 0], np.eye(2)), [1.0, 4.0, 25.0])

    def test_not_positive_definite(self):
        with pytest.raises(np.linalg.LinAlgError):
            mahalanobis_sq([1.0, 1.0], [0.0, 0.0], np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            mahalanobis_sq([1.0, 1.0, 1.0], [0.0, 0.0], np.eye(2))
        with pytest.raises(ValueError):
            mahalanobis_sq([1.0, 1.0], [0.0, 0.0], np.eye(3))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000))
    def test_permutation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.standard_normal((3, 3))
        cov = a @ a.T + np.eye(3)
        x, mu = rng.standard_normal(3), rng.standard_normal(3)
        perm = rng.permutation(3)
        d0 = mahalanobis_sq(x, mu, cov)
        d1 = mahalanobis_sq(x[perm], mu[perm], cov[np.ix_(perm, perm)])
        assert d1 == pytest.approx(d0, rel=1e-10)


class TestStudentT:
    def test_cauchy_at_mode(self):
        assert student_t_logpdf(0.0, t1(1.0)) == pytest.approx(math.log(1 / math.pi), abs=1e-12)

    @pytest.mark.parametrize("x", [0.0, 1.0, 5.0])
    def test_cauchy_closed_form(self, x):
        expected = -math.log(math.pi * (1 + x * x))
        assert student_t_logpdf(x, t1(1.0)) == pytest.approx(expected, abs=1e-12)

    def test_large_dof_approaches_gaussian(self):
        xs = np.linspace(-4, 4, 33)
        gauss = -0.5 * math.log(2 * math.pi) - 0.5 * xs**2
        np.testing.assert_allclose(student_t_logpdf(xs, t1(1e6)), gauss, atol=1e-4)

    @pytest.mark.parametrize("dof", [1e4, 1e6])
    def test_large_dof_first_order_gap(self, dof):
        # log t_v(x) - log N(x) = (x^4 - 2x^2 - 1) / (4v) + O(x^6 / v^2)
        xs = np.linspace(-5, 5, 41)
        gauss = -0.5 * math.log(2 * math.pi) - 0.5 * xs**2
        gap = student_t_logpdf(xs, t1(dof)) - gauss
        np.testing.assert_allclose(gap, (xs**4 - 2 * xs**2 - 1) / (4 * dof), atol=2e4 / dof**2 + 1e-9)

    def test_matches_scipy_multivariate(self):
        rng = np.random.default_rng(11)
        a = rng.standard_normal((3, 3))
        scale = a @ a.T + np.eye(3)
        mu = rng.standard_normal(3)
        x = rng.standard_normal((10, 3)) * 4
        for v in (0.5, 3.0, 50.0):
            ours = student_t_logpdf(x, StudentTParams(mu, scale, v))
            ref = stats.multivariate_t(loc=mu, shape=scale, df=v).logpdf(x)
            np.testing.assert_allclose(ours, ref, rtol=1e-10)

    @pytest.mark.parametrize("dof", [1.5, 3.0, 50.0])
    @pytest.mark.parametrize("scale", [1e-2, 1.0, 4.0])
    def test_integrates_to_one(self, dof, scale):
        p = t1(dof, mean=0.7, scale=scale)
        half = 200 * math.sqrt(scale) * math.sqrt(dof)
        f = lambda x: math.exp(float(student_t_logpdf(x, p)))
        total, _ = integrate.quad(f, 0.7 - half, 0.7 + half, points=[0.7], limit=500)
        # dof=1.5 leaves ~3e-4 of mass beyond +-200 scale units
        assert total == pytest.approx(1.0, abs=1e-3)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(-1e4, 1e4), st.floats(0.1, 100), st.floats(1e-3, 1e3))
    def test_symmetry(self, delta, dof, scale):
        p = t1(dof, mean=2.0, scale=scale)
        assert student_t_logpdf(2.0 + delta, p) == pytest.approx(student_t_logpdf(2.0 - delta, p), abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(1e-3, 1e3), st.floats(0.1, 100), st.floats(1e-3, 1e3))
    def test_monotone_in_distance(self, r, dof, scale):
        p = t1(dof, scale=scale)
        near, far = student_t_logpdf(r, p), student_t_logpdf(2 * r + 1e-3, p)
        assert student_t_logpdf(0.0, p) > near > far

    @pytest.mark.parametrize("sigmas", [5.0, 10.0, 45.0 / math.sqrt(1e-5)])
    def test_heavier_tail_than_gaussian(self, sigmas):
        var = 1e-5
        x = sigmas * math.sqrt(var)
        t = student_t_logpdf(x, t1(3.0, scale=var))
        g = gaussian_logpdf(x, GaussianParams([0.0], [[var]]))
        assert np.isfinite(t) and np.isfinite(g)
        assert t > g

    def test_finite_for_huge_outliers(self):
        assert np.isfinite(student_t_logpdf(50.0, t1(50.0, scale=1e-5)))

    @pytest.mark.parametrize("dof", [0.0, -1.0, np.inf, np.nan])
    def test_invalid_dof(self, dof):
        with pytest.raises(ValueError):
            t1(dof)

    def test_asymmetric_scale_rejected(self):
        with pytest.raises(ValueError):
            StudentTParams([0, 0], [[1.0, 0.5], [0.0, 1.0]], 3.0)


class TestGaussian:
    def test_standard_mode(self):
        assert gaussian_logpdf(0.0, GaussianParams([0.0], [[1.0]])) == pytest.approx(-0.918938533204673, abs=1e-12)

    def test_standard_at_one(self):
        assert gaussian_logpdf(1.0, GaussianParams([0.0], [[1.0]])) == pytest.approx(-1.418938533204673, abs=1e-12)

    def test_bivariate_mode(self):
        assert gaussian_logpdf([0.0, 0.0], GaussianParams([0, 0], np.eye(2))) == pytest.approx(-1.8378770664093453, abs=1e-12)

    def test_matches_scipy(self):
        cov = np.array([[2.0, 0.4], [0.4, 0.5]])
        x = np.array([[1.0, -1.0], [0.1, 0.2], [30.0, -4.0]])
        ref = stats.multivariate_normal([0.5, 0.0], cov).logpdf(x)
        np.testing.assert_allclose(gaussian_logpdf(x, GaussianParams([0.5, 0.0], cov)), ref, rtol=1e-12)

    def test_degenerate_cov_rejected(self):
        with pytest.raises(np.linalg.LinAlgError):
            GaussianParams([0.0], [[0.0]])


class TestNoiseModel:
    def test_dispatch(self):
        g = NoiseModel.gaussian(2.0)
        t = NoiseModel.student_t(2.0, 3.0)
        assert g.label == "gaussian" and t.label == "t3"
        assert g.logpdf(0.5) == gaussian_logpdf(0.5, g.params)
        assert t.logpdf(0.5) == student_t_logpdf(0.5, t.params)

    def test_rejects_other_params(self):
        with pytest.raises(TypeError):
            NoiseModel(object(), "x")


class TestSamplers:
    def test_gaussian_deterministic(self):
        p = GaussianParams([0.0], [[1.0]])
        assert sample_gaussian(make_rng(5), p) == sample_gaussian(make_rng(5), p)

    def test_gaussian_moments(self):
        rng = make_rng(1)
        p = GaussianParams([0.0], [[1.0]])
        xs = np.array([sample_gaussian(rng, p)[0] for _ in range(100_000)])
        assert abs(xs.mean()) < 4 / math.sqrt(1e5)
        assert xs.var() == pytest.approx(1.0, rel=0.05)

    def test_student_t_sampler_moments(self):
        rng = make_rng(2)
        p = StudentTParams([1.0], [[2.0]], 10.0)
        xs = np.array([NoiseModel(p, "t").sample(rng)[0] for _ in range(50_000)])
        assert xs.mean() == pytest.approx(1.0, abs=0.05)
        assert xs.var() == pytest.approx(2.0 * 10 / 8, rel=0.05)

    def test_gamma_moments(self):
        xs = sample_gamma(make_rng(3), 3.0, 2.0, size=100_000)
        assert xs.mean() == pytest.approx(6.0, rel=0.02)
        assert xs.var() == pytest.approx(12.0, rel=0.05)
        assert np.all(xs > 0)

    def test_gamma_reproducible(self):
        np.testing.assert_array_equal(sample_gamma(make_rng(9), 3, 2, size=10), sample_gamma(make_rng(9), 3, 2, size=10))

    @pytest.mark.parametrize("shape,scale", [(0, 2), (3, 0), (-1, 1)])
    def test_gamma_invalid(self, shape, scale):
        with pytest.raises(ValueError):
            sample_gamma(make_rng(0), shape, scale)

    def test_uniform_support_and_mean(self):
        xs = sample_uniform(make_rng(4), 40.0, 50.0, size=100_000)
        assert xs.min() >= 40.0 and xs.max() < 50.0
        assert xs.mean() == pytest.approx(45.0, abs=0.1)

    def test_uniform_empty_interval(self):
        with pytest.raises(ValueError):
            sample_uniform(make_rng(0), 0.0, 0.0)

    def test_streams_depend_only_on_keys(self):
        a = make_rng(7, 1, 2).random(3)
        make_rng(7, 5, 5).random(100)
        np.testing.assert_array_equal(a, make_rng(7, 1, 2).random(3))
        assert not np.array_equal(a, make_rng(7, 2, 1).random(3))
