"""Small SPD linear algebra: frozen examples plus randomized properties."""

import math

import numpy as np
import pytest

from smc2 import linalg

from conftest import rng  # noqa: F401


def random_spd(rng, d, jitter=0.5):
    b = rng.standard_normal((d, d))
    return b @ b.T + jitter * np.eye(d)


class TestCholesky:
    def test_identity(self):
        assert np.array_equal(linalg.cholesky(np.eye(2)), np.eye(2))

    def test_hand_expanded_2x2(self):
        # [[4,2],[2,3]] = L L^T with L = [[2,0],[1,sqrt(2)]]
        lower = linalg.cholesky([[4.0, 2.0], [2.0, 3.0]])
        assert np.allclose(lower, [[2.0, 0.0], [1.0, math.sqrt(2.0)]])
        assert np.allclose(lower @ lower.T, [[4.0, 2.0], [2.0, 3.0]], rtol=1e-10)

    def test_indefinite_raises(self):
        # eigenvalues of [[1,2],[2,1]] are 3 and -1
        with pytest.raises(linalg.NotPositiveDefinite):
            linalg.cholesky([[1.0, 2.0], [2.0, 1.0]])

    def test_non_finite_raises(self):
        with pytest.raises(linalg.NotPositiveDefinite):
            linalg.cholesky([[np.nan, 0.0], [0.0, 1.0]])

    def test_random_spd_reconstruction(self, rng):
        for d in (1, 2, 3):
            for _ in range(25):
                m = random_spd(rng, d)
                lower = linalg.cholesky(m)
                scale = np.max(np.abs(m))
                assert np.max(np.abs(lower @ lower.T - m)) / scale < 1e-10


class TestInverseSpd:
    def test_identity(self):
        assert np.allclose(linalg.inverse_spd(np.eye(3)), np.eye(3))

    def test_diagonal(self):
        assert np.allclose(linalg.inverse_spd(np.diag([2.0, 4.0])), np.diag([0.5, 0.25]))

    def test_2x2_adjugate(self):
        inv = linalg.inverse_spd([[4.0, 2.0], [2.0, 3.0]])
        assert np.allclose(inv, np.array([[3.0, -2.0], [-2.0, 4.0]]) / 8.0)

    def test_product_is_identity(self, rng):
        m = random_spd(rng, 3)
        assert np.max(np.abs(m @ linalg.inverse_spd(m) - np.eye(3))) < 1e-8

    def test_involution(self, rng):
        for _ in range(10):
            m = random_spd(rng, 3)
            again = linalg.inverse_spd(linalg.inverse_spd(m))
            assert np.max(np.abs(again - m)) / np.max(np.abs(m)) < 1e-8

    def test_indefinite_propagates(self):
        with pytest.raises(linalg.NotPositiveDefinite):
            linalg.inverse_spd([[1.0, 2.0], [2.0, 1.0]])


class TestLogDet:
    def test_identity(self):
        assert linalg.log_det_spd(np.eye(5)) == 0.0

    def test_scaled_diag(self):
        assert linalg.log_det_spd(np.diag([math.e, math.e])) == pytest.approx(2.0)

    def test_2x2(self):
        assert linalg.log_det_spd([[4.0, 2.0], [2.0, 3.0]]) == pytest.approx(math.log(8.0))

    def test_matches_closed_form_eigenvalues(self, rng):
        # independent oracle: log det = sum log eig, closed forms for 2x2/3x3
        for d in (2, 3):
            for _ in range(20):
                m = random_spd(rng, d)
                eig = np.linalg.eigvalsh(m)
                assert linalg.log_det_spd(m) == pytest.approx(
                    float(np.sum(np.log(eig))), rel=1e-10
                )


class TestMvn:
    def test_sample_identity_cov(self, rng):
        z = rng.standard_normal(3)
        assert np.array_equal(linalg.mvn_sample(np.zeros(3), np.eye(3), z), z)

    def test_sample_zero_noise_returns_mean(self):
        mean = np.array([1.0, -2.0])
        lower = linalg.cholesky([[4.0, 2.0], [2.0, 3.0]])
        assert np.array_equal(linalg.mvn_sample(mean, lower, np.zeros(2)), mean)

    def test_sample_scalar_scale(self):
        lower = linalg.cholesky([[4.0]])
        assert np.allclose(linalg.mvn_sample([0.0], lower, [1.0]), [2.0])

    def test_sample_dimension_mismatch(self):
        with pytest.raises(ValueError):
            linalg.mvn_sample(np.zeros(2), np.eye(2), np.zeros(3))

    def test_logpdf_standard_normal_origin(self):
        assert linalg.mvn_logpdf([0.0], [0.0], np.eye(1)) == pytest.approx(
            -0.5 * math.log(2 * math.pi)
        )

    def test_logpdf_at_mean(self):
        for d in (1, 2, 3):
            value = linalg.mvn_logpdf(np.zeros(d), np.zeros(d), np.eye(d))
            assert value == pytest.approx(-0.5 * d * math.log(2 * math.pi))

    def test_logpdf_full_covariance_hand_computed(self):
        # cov [[4,2],[2,3]]: inv = [[3,-2],[-2,4]]/8, det = 8
        # quad form at x=(1,1): (3 - 2 - 2 + 4)/8 = 3/8
        expected = -0.5 * (2 * math.log(2 * math.pi) + math.log(8.0) + 3.0 / 8.0)
        value = linalg.mvn_logpdf([1.0, 1.0], [0.0, 0.0], [[4.0, 2.0], [2.0, 3.0]])
        assert value == pytest.approx(expected, rel=1e-12)

    def test_logpdf_integrates_to_one_1d(self):
        sigma2 = 2.3
        xs = np.linspace(-10 * math.sqrt(sigma2), 10 * math.sqrt(sigma2), 20001)
        dens = np.array(
            [math.exp(linalg.mvn_logpdf([x], [0.4], [[sigma2]])) for x in xs]
        )
        assert np.trapezoid(dens, xs) == pytest.approx(1.0, abs=1e-6)


def test_symmetrize():
    m = np.array([[1.0, 2.0], [0.0, 3.0]])
    sym = linalg.symmetrize(m)
    assert np.array_equal(sym, sym.T)
    assert sym[0, 1] == 1.0
