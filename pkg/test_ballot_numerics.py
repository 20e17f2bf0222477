#!/usr/bin/env python3
"""
Tests for the barrier DP, the Monte Carlo oracle, the ballot envelopes
and the Gaussian comparison inequality
"""

import math

import numpy as np
import pytest
from scipy.stats import norm

from ballot_numerics import (
    LinearSweepPoint,
    ballot_dp,
    ballot_dp_richardson,
    ballot_mc,
    check_prop_linear,
    check_prop_log,
    comparison_factor,
    gaussian_comparison_check,
    linear_barrier_query,
    log_barrier_query,
    orthant_probability,
)
from exceptions import DomainError, HypothesisViolatedError, ResolutionError
from models import BallotQuery, ComparisonQuery, Rectangle

CLOSED_FORM = 0.5204999


def single_step_query() -> BallotQuery:
    return BallotQuery(j=1, sigma2=np.array([0.5]), barrier_values=np.array([1.0]), x=0.0, delta=0.5)


def sixteen_step_point() -> LinearSweepPoint:
    return LinearSweepPoint(j=16, a=0.2, b0=2.0, x=1.0, delta=1.0)


def test_single_step_closed_form():
    expected = norm.cdf(0.5 / math.sqrt(0.5)) - norm.cdf(-0.5 / math.sqrt(0.5))
    assert expected == pytest.approx(CLOSED_FORM, abs=1e-7)
    assert ballot_dp(single_step_query()) == pytest.approx(CLOSED_FORM, abs=1e-6)


def test_single_step_monte_carlo():
    estimate, stderr = ballot_mc(single_step_query(), 1_000_000, seed=11)
    assert abs(estimate - CLOSED_FORM) <= 3 * stderr
    with pytest.raises(DomainError):
        ballot_mc(single_step_query(), 999, seed=11)


def test_resolution_limits():
    q = single_step_query()
    with pytest.raises(ResolutionError):
        ballot_dp(q, grid_step=0.2)
    with pytest.raises(ResolutionError):
        ballot_dp(q, grid_extent=1.0)


def test_query_validation():
    with pytest.raises(ValueError):
        BallotQuery(j=2, sigma2=np.array([0.5]), barrier_values=np.array([1.0, 1.0]), x=0.0, delta=1.0)
    with pytest.raises(ValueError):
        BallotQuery(j=1, sigma2=np.array([5.0]), barrier_values=np.array([1.0]), x=0.0, delta=1.0)
    with pytest.raises(ValueError):
        BallotQuery(j=1, sigma2=np.array([0.5]), barrier_values=np.array([1.0]), x=0.0, delta=1.5)


def test_linear_barrier_dp_matches_monte_carlo():
    q = linear_barrier_query(sixteen_step_point())
    dp = ballot_dp(q)
    estimate, stderr = ballot_mc(q, 1_000_000, seed=3)
    assert 0.0 < dp < 1.0
    assert abs(dp - estimate) <= 3 * stderr


def test_richardson_converges_at_default_step():
    result = ballot_dp_richardson(linear_barrier_query(sixteen_step_point()))
    assert result.converged
    assert abs(result.fine - result.coarse) < 1e-4


def test_dp_monotone_in_barrier_and_window():
    point = sixteen_step_point()
    base = ballot_dp(linear_barrier_query(point))
    lowered = ballot_dp(linear_barrier_query(point.model_copy(update={"b0": 1.5})))
    narrower = ballot_dp(linear_barrier_query(point.model_copy(update={"delta": 0.5})))
    assert lowered <= base
    assert narrower <= base


def test_infinite_barrier_is_a_gaussian_window():
    q = BallotQuery(j=4, sigma2=np.full(4, 0.5), barrier_values=np.full(4, np.inf), x=0.0, delta=1.0)
    expected = norm.cdf(1.0 / math.sqrt(2.0)) - norm.cdf(-1.0 / math.sqrt(2.0))
    assert ballot_dp(q) == pytest.approx(expected, abs=1e-4)


def test_linear_upper_envelope_is_uniform():
    sweep = []
    for j in (8, 16, 32, 64):
        bj = 0.2 * j + 2.0
        sweep.append(LinearSweepPoint(j=j, a=0.2, b0=2.0, x=0.5 * bj))
    report = check_prop_linear(sweep, "upper")
    assert report.proposition == "linear-upper"
    assert len(report.rows) == 4
    assert report.min_ratio > 0
    assert report.spread <= 4.0


def test_linear_sweep_skips_bad_points():
    good = LinearSweepPoint(j=8, a=0.2, b0=2.0, x=1.0)
    bad = LinearSweepPoint(j=8, a=0.2, b0=-1.0, x=1.0)
    report = check_prop_linear([good, bad], "upper")
    assert len(report.rows) == 1
    assert len(report.skipped) == 1
    with pytest.raises(HypothesisViolatedError):
        check_prop_linear([bad], "upper")
    with pytest.raises(DomainError):
        check_prop_linear([good], "sideways")


def test_linear_lower_fits_c():
    sweep = [LinearSweepPoint(j=j, a=0.2, b0=2.0, x=0.5 * (0.2 * j + 2.0)) for j in (8, 16, 32)]
    report = check_prop_linear(sweep, "lower")
    assert 1.0 <= report.fitted_c <= 10.0
    assert report.min_ratio > 0


def test_log_barrier():
    report = check_prop_log(64, [32], 1.0)
    assert report.proposition == "log"
    assert len(report.rows) == 1
    assert report.min_ratio > 0
    q = log_barrier_query(64, 32, 1.0, 0.0)
    # |S_1| <= 3 at r = ceil(y) = 1, then y + psi_j
    assert q.barrier_values[0] == 3.0 and q.lower_values[0] == -3.0
    assert q.barrier_values[1] == pytest.approx(1.0 + math.log(2))
    with pytest.raises(HypothesisViolatedError):
        check_prop_log(64, [4], 1.0)
    with pytest.raises(DomainError):
        log_barrier_query(64, 65, 1.0, 0.0)


def test_orthant_case():
    assert orthant_probability(1.0, 0.5) == pytest.approx(1.0 / 3.0)
    result = gaussian_comparison_check(ComparisonQuery(
        s2=1.0, rho=0.5, rectangle=Rectangle(x_lo=-math.inf, x_hi=0.0, y_lo=-math.inf, y_hi=0.0)))
    assert result.lhs == pytest.approx(0.3333333, abs=1e-7)
    assert result.rhs == pytest.approx(0.4330127, abs=1e-7)
    assert result.factor == pytest.approx(math.sqrt(3.0))
    assert result.holds


def test_zero_correlation_is_an_equality():
    rect = Rectangle(x_lo=-1.0, x_hi=0.5, y_lo=0.0, y_hi=2.0)
    result = gaussian_comparison_check(ComparisonQuery(s2=2.0, rho=0.0, rectangle=rect))
    assert comparison_factor(2.0, 0.0) == 1.0
    assert result.lhs == pytest.approx(result.rhs, rel=1e-12)
    assert result.holds


def test_comparison_off_axis_rectangle():
    # the correlated pair puts more mass on [2, 3]^2 than the variance-s2 independent pair
    rect = Rectangle(x_lo=2.0, x_hi=3.0, y_lo=2.0, y_hi=3.0)
    result = gaussian_comparison_check(ComparisonQuery(s2=1.0, rho=0.5, rectangle=rect))
    assert result.lhs == pytest.approx(0.0032145, rel=1e-3)
    assert result.rhs == pytest.approx(0.0033658, rel=1e-3)
    assert result.holds
    uncorrelated_same_variance = (norm.cdf(3.0) - norm.cdf(2.0)) ** 2
    assert result.lhs > math.sqrt(3.0) * uncorrelated_same_variance


def test_comparison_holds_on_rectangles():
    rectangles = [
        Rectangle(x_lo=-1.0, x_hi=1.0, y_lo=-1.0, y_hi=1.0),
        Rectangle(x_lo=0.0, x_hi=1.0, y_lo=-2.0, y_hi=0.5),
        Rectangle(x_lo=0.5, x_hi=2.0, y_lo=0.5, y_hi=2.0),
        Rectangle(x_lo=2.0, x_hi=3.0, y_lo=2.0, y_hi=3.0),
    ]
    for rho in (-0.5, 0.3, 0.9):
        for rect in rectangles:
            assert gaussian_comparison_check(ComparisonQuery(s2=1.0, rho=rho, rectangle=rect)).holds
    with pytest.raises(ValueError):
        ComparisonQuery(s2=1.0, rho=1.0, rectangle=rectangles[0])


if __name__ == "__main__":
    pytest.main([__file__])
