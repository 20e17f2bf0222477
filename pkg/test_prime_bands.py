#!/usr/bin/env python3
"""
Tests for the sieve, the band partition and the Mertens residual
"""

import math

import numpy as np
import pytest

from exceptions import ConfigError, DomainError, LimitExceededError, SieveOverflowError
from models import ModelConfig, SamplingMode
from prime_bands import (
    _small_primes,
    bands_from_primes,
    mertens_check,
    mertens_curve,
    primes_up_to,
    sieve_bands,
    sieve_limit,
    surrogate_bands,
)


def test_primes_up_to_small():
    assert primes_up_to(30).tolist() == [2, 3, 5, 7, 11, 13, 17, 19, 23, 29]
    assert primes_up_to(2).tolist() == [2]
    assert primes_up_to(1).size == 0


def test_segments_do_not_change_the_result():
    reference = _small_primes(10_000)
    for segment_odds in (7, 64, 1000, 1 << 20):
        assert np.array_equal(primes_up_to(10_000, segment_odds=segment_odds), reference)


def test_sieve_limit():
    assert sieve_limit(1) == 15
    assert sieve_limit(2) == 1618
    with pytest.raises(SieveOverflowError):
        sieve_limit(4)


def test_band_one_variance(exact_t2):
    table = sieve_bands(exact_t2)
    band = table.band(1)
    assert np.exp(band.log_freqs).round().astype(int).tolist() == [3, 5, 7, 11, 13]
    assert band.variance == pytest.approx(0.4220113, abs=1e-6)


def test_bands_partition_odd_primes(exact_t2):
    table = sieve_bands(exact_t2)
    primes = primes_up_to(table.sieve_limit)
    # 2 has log 2 < 1 and belongs to no band
    assert sum(b.prime_count for b in table.bands) == primes.size - 1
    for m in range(1, table.t + 1):
        logs = table.band(m).log_freqs
        assert np.all(logs > math.exp(m - 1))
        assert np.all(logs <= math.exp(m))
        assert table.band(m).variance == pytest.approx(0.5 * np.sum(table.band(m).weights ** 2), rel=1e-12)


def test_band_edges_are_inclusive_on_the_right():
    primes = primes_up_to(2000)
    table = bands_from_primes(primes, 2, 1618)
    assert int(round(math.exp(table.band(2).log_freqs[-1]))) == 1613
    band_three = bands_from_primes(primes, 3, 2000).band(3)
    assert int(round(math.exp(band_three.log_freqs[0]))) == 1619


def test_exact_mode_cap():
    config = ModelConfig(t=3, alpha=0.5, exact_mode_cap=3)
    with pytest.raises(LimitExceededError):
        sieve_bands(config, cap=2)
    with pytest.raises(ValueError):
        ModelConfig(t=4, alpha=0.5)


def test_surrogate_bands(surrogate_t2):
    table = surrogate_bands(surrogate_t2)
    assert table.approximate
    assert table.variances().tolist() == [0.5, 0.5]
    with pytest.raises(ConfigError):
        sieve_bands(surrogate_t2)
    with pytest.raises(ConfigError):
        surrogate_bands(ModelConfig(t=2, alpha=0.5))


def test_mertens_residual():
    assert mertens_check(3) == pytest.approx(0.7392855, abs=1e-7)
    # Meissel-Mertens constant 0.2614972...
    assert mertens_check(1e6) == pytest.approx(0.2614972, abs=2e-3)
    with pytest.raises(DomainError):
        mertens_check(2.5)


def test_mertens_curve_reuses_one_sieve():
    xs = [1e4, 1e5, 1e6]
    assert mertens_curve(xs) == pytest.approx([mertens_check(x) for x in xs], abs=1e-12)


@pytest.mark.slow
def test_exact_t3_bands():
    table = sieve_bands(ModelConfig(t=3, alpha=0.5))
    assert table.band(1).variance == pytest.approx(0.4220113, abs=1e-6)
    for m in (2, 3):
        assert abs(table.band(m).variance - 0.5) <= 0.08
    assert int(round(math.exp(table.band(3).log_freqs[0]))) == 1619
    residuals = mertens_curve([1e6, 1e8])
    assert abs(residuals[1] - residuals[0]) < 0.01


if __name__ == "__main__":
    pytest.main([__file__])
