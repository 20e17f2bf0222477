#!/usr/bin/env python3
"""
Tests for the closed-form slope, barriers, thresholds and tail shapes
"""

import math

import numpy as np
import pytest

from exceptions import DomainError
from models import BarrierKind
from prediction import (
    BUMP_COEFFICIENT_NUMERATOR,
    barrier,
    barrier_values,
    bump_psi,
    critical_beta,
    make_barrier,
    moment_normalization,
    predicted_left_tail,
    predicted_right_tail,
    right_tail_prefactors,
    slope_mu,
    theta,
    threshold_log_max,
)


def test_pinned_values():
    assert theta(3, 0.5) == pytest.approx(0.5773503, abs=1e-7)
    assert slope_mu(3, 0.5) == pytest.approx(1.1101356, abs=1e-7)
    assert critical_beta(3, 0.5) == pytest.approx(2.5118521, abs=1e-7)
    assert threshold_log_max(3, 0.5, 0.0) == pytest.approx(3.3304068, abs=1e-6)
    assert predicted_right_tail(3, 0.5, 1.0) == pytest.approx(0.0916811, rel=1e-5)
    assert predicted_left_tail(3, 0.5, -2.0) == pytest.approx(0.0021934, rel=1e-4)


def test_threshold_is_slope_times_t_shifted():
    for t in (2, 3, 8):
        assert threshold_log_max(t, 0.5, 0.7) == pytest.approx(slope_mu(t, 0.5) * t + 0.7, rel=1e-12)


def test_domain_checks():
    with pytest.raises(DomainError):
        slope_mu(3, 1.5)
    with pytest.raises(DomainError):
        slope_mu(1, 0.5)
    with pytest.raises(DomainError):
        critical_beta(3, 0.0)
    with pytest.raises(DomainError):
        predicted_right_tail(3, 0.5, -0.1)
    with pytest.raises(DomainError):
        predicted_left_tail(3, 0.5, 0.0)


def test_bump():
    assert bump_psi(0, 8) == 0.0
    assert bump_psi(8, 8) == 0.0
    assert bump_psi(4, 8) == pytest.approx(math.log(4))
    assert bump_psi(2, 8) == bump_psi(6, 8)
    with pytest.raises(DomainError):
        bump_psi(9, 8)


def test_barriers():
    t, alpha = 8, 0.5
    upper = make_barrier(BarrierKind.UPPER, t, alpha, 0.5)
    lower = make_barrier(BarrierKind.LOWER, t, alpha, 0.5)
    assert barrier(upper, 0) == pytest.approx(t ** (1 - alpha) + 1.5)
    assert barrier(lower, t) == pytest.approx(slope_mu(t, alpha) * t + 1.5)
    for k in range(t + 1):
        gap = barrier(upper, k) - barrier(lower, k)
        assert gap == pytest.approx(BUMP_COEFFICIENT_NUMERATOR / (4 * alpha) * bump_psi(k, t))
    assert barrier_values(upper).size == t + 1
    with pytest.raises(DomainError):
        barrier(upper, 1.5)
    with pytest.raises(DomainError):
        barrier(upper, t + 1)


def test_good_event_barrier_rises_with_A():
    low = barrier_values(make_barrier(BarrierKind.GOOD_EVENT, 3, 0.5, 1.0))
    high = barrier_values(make_barrier(BarrierKind.GOOD_EVENT, 3, 0.5, 2.0))
    assert np.allclose(high - low, 1.0)


def test_right_tail_shape():
    values = [predicted_right_tail(3, 0.5, y) for y in (0.0, 0.5, 1.0, 2.0)]
    assert values[0] == 1.0
    assert all(a > b for a, b in zip(values, values[1:]))
    prefactors = right_tail_prefactors(3, 0.5, 1.0)
    assert prefactors["flat"] == 1.0
    assert prefactors["interpolating"] == pytest.approx(1 + 1 / math.sqrt(3))


def test_moment_normalization():
    beta = critical_beta(3, 0.5)
    assert moment_normalization(3, 0.5, beta) == pytest.approx(beta ** 2 / 4 * 3)
    assert moment_normalization(3, 0.75, 1.0) == pytest.approx(0.75 - 0.25 * math.log(3))


if __name__ == "__main__":
    pytest.main([__file__])
