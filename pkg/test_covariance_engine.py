#!/usr/bin/env python3
"""
Tests for the covariance regimes, the surrogate integral and Toeplitz factorization
"""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from config import settings
from covariance_engine import (
    build_toeplitz,
    covariance_asymptotic,
    covariance_exact,
    covariance_surrogate,
    exact_lag_values,
    factor_residual,
    factorize_toeplitz,
    surrogate_lag_values,
    toeplitz_on_lags,
)
from exceptions import BandRangeError, GridTooLargeError, NotPositiveDefiniteError
from models import CovarianceRegime, ModelConfig
from prime_bands import sieve_bands, surrogate_bands


@pytest.fixture(scope="module")
def bands_t2():
    return sieve_bands(ModelConfig(t=2, alpha=0.5))


def test_asymptotic_regimes():
    near = covariance_asymptotic(1, 3, 0.01)
    assert near.regime == CovarianceRegime.NEAR
    assert near.value == pytest.approx(1.0)

    far = covariance_asymptotic(1, 3, 2.0)
    assert far.regime == CovarianceRegime.FAR
    assert far.value == pytest.approx(math.exp(-1) / 2.0)

    middle = covariance_asymptotic(1, 3, 0.1)
    assert middle.regime == CovarianceRegime.MIDDLE
    assert middle.value is None

    with pytest.raises(BandRangeError):
        covariance_asymptotic(3, 1, 0.1)


def test_exact_covariance_at_zero_is_band_variance(bands_t2):
    assert covariance_exact(bands_t2, 1, 1, 0.0) == pytest.approx(bands_t2.band(1).variance, rel=1e-12)
    assert covariance_exact(bands_t2, 1, 2, 0.0) == pytest.approx(bands_t2.total_variance(), rel=1e-12)


def test_exact_covariance_even_and_additive(bands_t2):
    lags = np.linspace(0.0, 3.0, 41)
    full = exact_lag_values(bands_t2, 1, 2, lags)
    assert np.max(np.abs(full - exact_lag_values(bands_t2, 1, 2, -lags))) <= 1e-10
    parts = exact_lag_values(bands_t2, 1, 1, lags) + exact_lag_values(bands_t2, 2, 2, lags)
    assert np.max(np.abs(full - parts)) <= 1e-10
    assert np.all(np.abs(full) <= full[0] + 1e-12)


def test_exact_covariance_band_range(bands_t2):
    with pytest.raises(BandRangeError):
        covariance_exact(bands_t2, 0, 1, 0.0)
    with pytest.raises(BandRangeError):
        covariance_exact(bands_t2, 1, 3, 0.0)


def test_surrogate_covariance():
    assert covariance_surrogate(1, 3, 0.0) == 1.5
    expected = 0.5 * quad(lambda u: math.cos(0.3 * u) / u, 1.0, math.e, epsabs=1e-12)[0]
    assert covariance_surrogate(1, 1, 0.3) == pytest.approx(expected, abs=1e-9)
    assert covariance_surrogate(2, 2, -0.3) == pytest.approx(covariance_surrogate(2, 2, 0.3), abs=1e-12)
    # far lags decorrelate like e^-k / |dh|
    assert abs(covariance_surrogate(2, 2, 5.0)) <= 3.0 * math.exp(-2) / 5.0
    with pytest.raises(BandRangeError):
        covariance_surrogate(2, 1, 0.3)


def test_surrogate_tracks_exact_band_two(bands_t2):
    lags = np.linspace(0.0, 2.0, 21)
    gap = np.abs(surrogate_lag_values(2, 2, lags) - exact_lag_values(bands_t2, 2, 2, lags))
    assert np.max(gap) <= 0.08


def test_factorize_positive_definite():
    values = np.exp(-0.3 * np.arange(20))
    factor, kind, jitter, _ = factorize_toeplitz(values)
    assert kind == "cholesky"
    assert jitter == 0.0
    matrix = np.array([[values[abs(i - j)] for j in range(20)] for i in range(20)])
    assert np.allclose(factor @ factor.T, matrix, atol=1e-12)


def test_factorize_rank_deficient_uses_eigen():
    lags = np.arange(30) * 0.1
    values = 0.5 * np.cos(2.0 * lags)
    factor, kind, _, min_eig = factorize_toeplitz(values, prime_count=1)
    assert kind == "eigen"
    assert min_eig is not None
    matrix = np.array([[values[abs(i - j)] for j in range(30)] for i in range(30)])
    assert np.allclose(factor @ factor.T, matrix, atol=1e-10)


def test_factorize_indefinite_raises():
    with pytest.raises(NotPositiveDefiniteError) as info:
        factorize_toeplitz(np.array([1.0, 2.0]))
    assert info.value.min_eigenvalue == pytest.approx(-1.0)


def test_grid_limit(monkeypatch, surrogate_t2):
    monkeypatch.setattr(settings, "max_dense_grid", 10)
    with pytest.raises(GridTooLargeError):
        toeplitz_on_lags(surrogate_bands(surrogate_t2), 1, 1, 0.1, 11)


def test_build_toeplitz_exact(bands_t2, exact_t2):
    cov = build_toeplitz(bands_t2, 2, 2, exact_t2)
    assert cov.n == exact_t2.n_points
    assert np.allclose(cov.lags, np.arange(cov.n) * exact_t2.spacing)
    assert cov.values[0] == pytest.approx(bands_t2.band(2).variance, rel=1e-12)
    assert factor_residual(cov) < 1e-8


def test_build_toeplitz_surrogate(surrogate_t2):
    cov = build_toeplitz(surrogate_bands(surrogate_t2), 1, 2, surrogate_t2)
    assert cov.values[0] == pytest.approx(1.0)
    assert cov.approximate
    assert factor_residual(cov) < 1e-8


if __name__ == "__main__":
    pytest.main([__file__])
