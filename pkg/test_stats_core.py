#!/usr/bin/env python3
"""
Tests for RNG streams, Wilson intervals, bootstrap ratios and WLS fits
"""

import math

import numpy as np
import pytest

from exceptions import DomainError, RankDeficiencyError
from models import CIMethod
from stats_core import (
    bootstrap_ci,
    bootstrap_ratio,
    log_mean_exp,
    rng_stream,
    wilson_interval,
    wls_line,
    wls_slope,
)


def test_rng_streams_are_keyed():
    a = rng_stream(7, "tail", 3).standard_normal(5)
    assert np.array_equal(a, rng_stream(7, "tail", 3).standard_normal(5))
    assert not np.array_equal(a, rng_stream(7, "tail", 4).standard_normal(5))
    assert not np.array_equal(a, rng_stream(7, "mgf", 3).standard_normal(5))
    assert not np.array_equal(a, rng_stream(8, "tail", 3).standard_normal(5))
    with pytest.raises(DomainError):
        rng_stream(-1, "tail")


def test_wilson_boundaries():
    assert wilson_interval(0, 10).lo == 0.0
    assert wilson_interval(10, 10).hi == 1.0
    ci = wilson_interval(50, 100)
    assert 0.40 < ci.lo < 0.5 < ci.hi < 0.60
    assert ci.method == CIMethod.WILSON
    for hits, n, level in ((-1, 10, 0.95), (11, 10, 0.95), (0, 0, 0.95), (5, 10, 1.0)):
        with pytest.raises(DomainError):
            wilson_interval(hits, n, level)


def test_wilson_coverage():
    rng = rng_stream(2024, "wilson-coverage")
    hits = rng.binomial(1000, 0.1, size=10_000)
    covered = 0
    for h in hits:
        ci = wilson_interval(int(h), 1000)
        covered += ci.lo <= 0.1 <= ci.hi
    assert covered / hits.size >= 0.93


def test_bootstrap_ratio_identical_samples():
    a = rng_stream(1, "data").exponential(size=500)
    ci = bootstrap_ratio(a, a, n_resamples=500, seed=3)
    assert ci.point == pytest.approx(1.0)
    assert ci.lo == pytest.approx(1.0) and ci.hi == pytest.approx(1.0)


def test_bootstrap_ratio_constants_and_seed():
    ci = bootstrap_ratio(np.full(50, 2.0), np.ones(40), n_resamples=200, seed=1)
    assert (ci.point, ci.lo, ci.hi) == (2.0, 2.0, 2.0)

    a = rng_stream(1, "a").normal(3.0, 1.0, size=300)
    b = rng_stream(1, "b").normal(2.0, 1.0, size=300)
    first = bootstrap_ratio(a, b, n_resamples=300, seed=9)
    assert first == bootstrap_ratio(a, b, n_resamples=300, seed=9)
    assert first.lo <= 1.5 <= first.hi


def test_bootstrap_ratio_excludes_zero_denominators():
    b = np.zeros(10)
    b[0] = 1.0
    ci = bootstrap_ratio(np.ones(10), b, n_resamples=1000, seed=5)
    assert ci.excluded > 0
    assert ci.point == pytest.approx(10.0)
    with pytest.raises(DomainError):
        bootstrap_ratio(np.ones(3), np.zeros(3))
    with pytest.raises(DomainError):
        bootstrap_ratio(np.array([]), np.ones(3))


def test_bootstrap_ci_mean():
    x = rng_stream(4, "data").normal(1.0, 1.0, size=2000)
    ci = bootstrap_ci(x, seed=2)
    assert ci.method == CIMethod.BOOTSTRAP
    assert ci.lo <= x.mean() <= ci.hi
    assert ci.stderr == pytest.approx(x.std(ddof=1) / math.sqrt(x.size), rel=0.2)
    assert ci == bootstrap_ci(x, seed=2)


def test_wls_exact_line():
    x = np.array([0.0, 0.5, 1.0, 2.0])
    slope, stderr = wls_slope(x, -2.0 * x, np.ones(4))
    assert slope == pytest.approx(-2.0)
    assert stderr == pytest.approx(0.0, abs=1e-10)


def test_wls_permutation_invariant():
    x = np.array([0.0, 0.5, 1.0, 1.5, 2.0])
    y = np.array([0.1, -1.2, -2.4, -3.9, -5.0])
    w = np.array([5.0, 4.0, 3.0, 2.0, 1.0])
    order = np.array([3, 0, 4, 2, 1])
    assert wls_slope(x, y, w) == pytest.approx(wls_slope(x[order], y[order], w[order]))


def test_wls_three_points():
    slope, intercept, stderr = wls_line(np.array([0.0, 1.0, 2.0]), np.array([0.0, 1.0, 3.0]), np.ones(3))
    assert slope == pytest.approx(1.5)
    assert intercept == pytest.approx(-1.0 / 6.0)
    assert stderr == pytest.approx(math.sqrt(1.0 / 12.0))


def test_wls_errors():
    with pytest.raises(RankDeficiencyError):
        wls_slope(np.ones(3), np.array([1.0, 2.0, 3.0]), np.ones(3))
    with pytest.raises(DomainError):
        wls_slope(np.array([0.0, 1.0]), np.array([0.0, 1.0]), np.ones(2))
    with pytest.raises(DomainError):
        wls_slope(np.array([0.0, 1.0, 2.0]), np.zeros(3), np.array([1.0, 0.0, 1.0]))


def test_log_mean_exp():
    assert log_mean_exp(np.zeros(4)) == pytest.approx(0.0)
    assert log_mean_exp(np.array([1000.0, 1000.0])) == pytest.approx(1000.0)


if __name__ == "__main__":
    pytest.main([__file__])
