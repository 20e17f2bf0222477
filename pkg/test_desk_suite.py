#!/usr/bin/env python3
"""
Tests for the acceptance suite runner
"""

import pytest

from config import settings
from desk_suite import DESK, SMOKE, SUITES, DeskSuite, run_suite
from exceptions import ConfigError
from models import ModelConfig, SamplingMode


def by_name(checks):
    return {check.name: check for check in checks}


def test_unknown_suite(system):
    with pytest.raises(ConfigError, match="unknown suite"):
        run_suite("nightly", system)
    assert set(SUITES) == {"desk", "smoke"}


def test_smoke_bands_section(system):
    checks = by_name(DeskSuite(SMOKE, system).bands())
    assert checks["band_1_variance"].passed
    assert checks["band_variances_near_half"].passed
    assert checks["band_1_variance"].value == pytest.approx(0.4220113, abs=1e-6)


def test_smoke_covariance_section(system):
    checks = by_name(DeskSuite(SMOKE, system).covariance())
    assert checks["toeplitz_factorized"].passed
    assert checks["covariance_even"].passed
    assert checks["covariance_band_additive"].passed


def test_ballot_section_deterministic_checks(system):
    checks = by_name(DeskSuite(SMOKE, system).ballot())
    for name in ("ballot_closed_form_dp", "ballot_upper_ratio_spread", "ballot_richardson",
                 "comparison_inequality", "comparison_orthant"):
        assert checks[name].passed, checks[name].detail
    assert "ballot_log_dp_vs_mc" not in checks


def test_desk_surrogate_t_is_largest_dense_grid():
    def points(t):
        return ModelConfig(t=t, alpha=DESK.alpha, mode=SamplingMode.SURROGATE).n_points

    assert points(DESK.surrogate_t) <= settings.max_dense_grid < points(DESK.surrogate_t + 1)


@pytest.mark.slow
def test_smoke_suite_completes(system):
    result = run_suite("smoke", system)
    assert result.suite == "smoke"
    assert result.checks
    assert not [c.name for c in result.checks if c.name.endswith("_completed")]


if __name__ == "__main__":
    pytest.main([__file__])
