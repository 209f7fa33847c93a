import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad, trapezoid

from immse.core_math import (
    EIG_FLOOR,
    GaussianSpec,
    LogisticSampler,
    estimate_moments,
    f_sigma,
    jacobi_eigendecomposition,
    make_rng,
    moment_matched_sampler,
    nats_to_bpd,
    sample_alpha,
)

# frozen oracle values (hand / scipy evaluation, see tests for derivations)
F_SIGMA_1_E2 = 1.3807970779778822  # sigmoid(0) + sigmoid(2)
S_PM2 = 1.488574554299533  # sqrt(1 + 12 / pi^2)
BPD_STD_NORMAL = 2.047095585180641  # 0.5 log(2 pi e) / ln 2


class TestMoments:
    def test_two_points(self):
        spec = estimate_moments([[-1.0], [1.0]])
        assert spec.mean == pytest.approx([0.0])
        assert spec.eigvals == pytest.approx([2.0])

    def test_identical_points_clamped(self):
        spec = estimate_moments(np.ones((5, 2)))
        assert np.all(spec.eigvals == EIG_FLOOR)

    def test_axis_aligned_basis(self):
        X = np.array([[-1, 0], [1, 0], [0, -3], [0, 3]], dtype=float)
        spec = estimate_moments(X)
        assert spec.eigvals == pytest.approx([2 / 3, 6.0])
        assert np.abs(spec.eigvecs) == pytest.approx(np.eye(2))

    def test_jacobi_matches_eigh(self):
        X = make_rng(0).standard_normal((50, 4)) @ np.diag([1, 2, 3, 4])
        a = estimate_moments(X, method="jacobi")
        b = estimate_moments(X)
        assert a.eigvals == pytest.approx(b.eigvals, rel=1e-10)

    @pytest.mark.parametrize("bad", [[[1.0]], [[1.0, 2.0], [1.0]], np.zeros((0, 3))])
    def test_shape_errors(self, bad):
        with pytest.raises(ValueError):
            estimate_moments(bad)

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            estimate_moments([[0.0], [1.0]], method="svd")


class TestJacobi:
    def test_identity(self):
        lam, _ = jacobi_eigendecomposition(np.eye(3))
        assert lam == pytest.approx([1, 1, 1])

    def test_diag(self):
        lam, U = jacobi_eigendecomposition(np.diag([4.0, 1.0]))
        assert lam == pytest.approx([1, 4])
        assert np.abs(U) == pytest.approx(np.array([[0, 1], [1, 0]]))

    def test_two_by_two(self):
        lam, _ = jacobi_eigendecomposition([[2.0, 1.0], [1.0, 2.0]])
        assert lam == pytest.approx([1, 3])

    def test_asymmetric_rejected(self):
        with pytest.raises(ValueError):
            jacobi_eigendecomposition([[1.0, 2.0], [0.0, 1.0]])

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 8), st.integers(0, 2**31 - 1))
    def test_reconstruction(self, d, seed):
        A = make_rng(seed).standard_normal((d, d))
        S = A + A.T
        lam, U = jacobi_eigendecomposition(S)
        scale = np.max(np.abs(S))
        assert np.max(np.abs((U * lam) @ U.T - S)) <= 1e-9 * scale
        off = U.T @ S @ U
        assert np.max(np.abs(off - np.diag(np.diag(off)))) <= 1e-10 * scale
        assert np.all(np.diff(lam) >= 0)


class TestGaussianSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            GaussianSpec([0.0], [-1.0], [[1.0]])
        with pytest.raises(ValueError):
            GaussianSpec([0.0, 0.0], [1.0, 1.0], [[1.0, 1.0], [0.0, 1.0]])

    def test_entropy_and_density(self):
        spec = GaussianSpec.isotropic(1)
        assert spec.entropy() == pytest.approx(0.5 * np.log(2 * np.pi * np.e))
        assert spec.log_density([[0.0]])[0] == pytest.approx(-0.5 * np.log(2 * np.pi))
        # z ~ N(0, 1 + gamma) at gamma = 3
        assert spec.log_marginal([[0.0]], 3.0)[0] == pytest.approx(-0.5 * np.log(2 * np.pi * 4))

    def test_from_covariance_roundtrip(self):
        C = np.array([[2.0, 0.5], [0.5, 1.0]])
        assert GaussianSpec.from_covariance([0, 0], C).covariance == pytest.approx(C)


class TestFSigma:
    def test_values(self):
        assert f_sigma(0.0, [1.0, 1.0]) == pytest.approx(1.0)
        assert f_sigma(0.0, [1.0, np.e**2]) == pytest.approx(F_SIGMA_1_E2, abs=1e-12)
        assert f_sigma(60.0, [0.5, 2.0, 3.0]) == pytest.approx(3.0)
        assert f_sigma(-60.0, [0.5, 2.0]) == pytest.approx(0.0, abs=1e-20)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(1e-3, 1e3), min_size=1, max_size=5), st.floats(-20, 20), st.floats(1e-3, 5))
    def test_increasing(self, lam, a, da):
        assert f_sigma(a + da, lam) > f_sigma(a, lam) or f_sigma(a, lam) == pytest.approx(len(lam))

    def test_change_of_variables(self):
        lam = np.array([0.3, 2.0, 7.0])
        g0, g1 = 1e-3, 1e3
        lhs = quad(lambda a: f_sigma(a, lam), np.log(g0), np.log(g1), epsabs=1e-12)[0]
        rhs = np.sum(np.log(g1 + 1 / lam) - np.log(g0 + 1 / lam))
        assert lhs == pytest.approx(rhs, abs=1e-6)


class TestSampler:
    def test_isotropic(self):
        s = moment_matched_sampler([np.e, np.e])
        assert s.mu == pytest.approx(-1.0)
        assert s.s == pytest.approx(1.0)

    def test_spread(self):
        s = moment_matched_sampler([np.exp(-2), np.exp(2)])
        assert s.mu == pytest.approx(0.0, abs=1e-15)
        assert s.s == pytest.approx(S_PM2, abs=1e-12)

    def test_support(self):
        assert moment_matched_sampler([1.0]).support == pytest.approx((-4.0, 4.0))

    def test_quantiles(self):
        s = LogisticSampler(0.0, 1.0, 0.01, 0.99)
        assert sample_alpha(s, 0.5)[0] == pytest.approx(0.0)
        assert sample_alpha(s, np.e / (1 + np.e))[0] == pytest.approx(1.0)
        with pytest.raises(ValueError):
            sample_alpha(s, 0.995)

    def test_density_normalised(self):
        s = moment_matched_sampler([0.2, 3.0])
        lo, hi = s.support
        a = np.linspace(lo, hi, 200001)
        assert trapezoid(s.pdf(a), a) == pytest.approx(1.0, abs=1e-6)
        assert s.pdf(hi + 1.0) == 0.0

    def test_density_matches_draw(self):
        s = moment_matched_sampler([1.0])
        alpha, q = s.draw(100, make_rng(0))
        assert q == pytest.approx(s.pdf(alpha))

    @pytest.mark.parametrize("stratified", [False, True])
    def test_moments(self, stratified):
        s = moment_matched_sampler([0.5, 4.0])
        m, v = s.mean_var()
        a, _ = s.draw(100_000, make_rng(1), stratified=stratified)
        se = np.sqrt(v / a.size)
        assert abs(a.mean() - m) < 3 * se
        # variance of the sample variance ~ (m4 - v^2)/n; logistic kurtosis 4.2 bounds m4
        assert abs(a.var() - v) < 3 * v * np.sqrt(3.2 / a.size)

    def test_invalid(self):
        with pytest.raises(ValueError):
            LogisticSampler(0.0, -1.0, 0.1, 0.9)
        with pytest.raises(ValueError):
            LogisticSampler(0.0, 1.0, 0.9, 0.1)


def test_bpd():
    assert nats_to_bpd(0.5 * np.log(2 * np.pi * np.e), 1) == pytest.approx(BPD_STD_NORMAL)
    assert nats_to_bpd(1.41894, 1) == pytest.approx(2.0471, abs=1e-4)
    assert nats_to_bpd(0.0, 3) == 0.0
    assert nats_to_bpd(np.log(2), 1) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        nats_to_bpd(1.0, 0)


def test_rng_streams():
    a = make_rng(3, 1).standard_normal(5)
    assert np.array_equal(a, make_rng(3, 1).standard_normal(5))
    assert not np.array_equal(a, make_rng(3, 2).standard_normal(5))
