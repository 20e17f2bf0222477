#!/usr/bin/env python3
"""
Tests for the grid, the two samplers and reproducible batching
"""

import numpy as np
import pytest

from exceptions import ConfigError, FactorizationMissingError
from field_sampler import FieldSampler, grid, sample_direct, sample_toeplitz
from models import ModelConfig, SamplerKind


def test_grid_constants():
    config = ModelConfig(t=3, alpha=0.5)
    assert config.theta == pytest.approx(0.5773503, abs=1e-7)
    assert config.half_width == pytest.approx(5.6522337, abs=1e-7)
    assert config.spacing == pytest.approx(0.0497871, abs=1e-7)
    points = grid(config)
    assert points.size == config.n_points == 227
    assert np.all(np.diff(points) > 0)
    assert np.allclose(points, -points[::-1])
    assert points[-1] <= config.half_width < points[-1] + config.spacing


def test_refinement_divides_spacing():
    coarse = ModelConfig(t=2, alpha=0.5)
    fine = ModelConfig(t=2, alpha=0.5, refinement=2)
    assert fine.spacing == pytest.approx(coarse.spacing / 2)
    assert (coarse.n_points, fine.n_points) == (61, 121)


def test_toeplitz_sample_is_keyed_by_index(system, surrogate_t2):
    covariances = system.get_covariances(surrogate_t2)
    first = sample_toeplitz(covariances, surrogate_t2, 5)
    again = sample_toeplitz(covariances, surrogate_t2, 5)
    other = sample_toeplitz(covariances, surrogate_t2, 6)
    assert np.array_equal(first.increments, again.increments)
    assert not np.array_equal(first.increments, other.increments)
    assert first.seed_path == (surrogate_t2.seed, 5)
    assert first.increments.shape == (2, surrogate_t2.n_points)


def test_batches_are_bit_identical_for_any_thread_count(system, surrogate_t2):
    covariances = system.get_covariances(surrogate_t2)

    def maxima(threads, batch_size):
        sampler = FieldSampler(surrogate_t2, covariances=covariances, threads=threads, batch_size=batch_size)
        return np.concatenate(sampler.map_batches(lambda inc, start: inc.sum(axis=1).max(axis=1), 200))

    reference = maxima(1, 64)
    assert np.array_equal(reference, maxima(4, 64))
    assert np.array_equal(reference, maxima(3, 7))


def test_iter_samples_matches_batches(system, surrogate_t2):
    sampler = system.get_sampler(surrogate_t2)
    batch = sampler.sample_batch(0, 10)
    for sample in sampler.iter_samples(10):
        assert np.array_equal(sample.increments, batch[sample.sample_id])
        assert np.array_equal(sample.partials(2), batch[sample.sample_id].sum(axis=0))


def test_direct_sampler_zero_gaussians(system, exact_t2):
    bands = system.get_bands(exact_t2)
    sample = sample_direct(bands, exact_t2, 0, zero_gaussians=True)
    assert np.all(sample.increments == 0.0)
    assert np.all(sample.partials(0) == 0.0)


def test_direct_sampler_variance(system, exact_t2):
    sampler = system.get_sampler(exact_t2, SamplerKind.DIRECT)
    fields = np.concatenate(sampler.map_batches(lambda inc, start: inc.sum(axis=1), 2000))
    variance = fields.var(axis=0, ddof=1).mean()
    assert variance == pytest.approx(system.get_bands(exact_t2).total_variance(), rel=0.1)


def test_direct_and_toeplitz_agree(system, exact_t2):
    direct = system.get_sampler(exact_t2, SamplerKind.DIRECT)
    toeplitz = system.get_sampler(exact_t2, SamplerKind.TOEPLITZ)
    var_direct = np.concatenate(direct.map_batches(lambda inc, start: inc.sum(axis=1), 2000)).var(axis=0).mean()
    var_toeplitz = np.concatenate(toeplitz.map_batches(lambda inc, start: inc.sum(axis=1), 2000)).var(axis=0).mean()
    assert abs(var_direct - var_toeplitz) / var_toeplitz <= 0.1


def test_sampler_needs_factors(system, surrogate_t2):
    covariances = [cov.model_copy(update={"factor": None}) for cov in system.get_covariances(surrogate_t2)]
    with pytest.raises(FactorizationMissingError):
        FieldSampler(surrogate_t2, covariances=covariances)
    with pytest.raises(ConfigError):
        FieldSampler(surrogate_t2, covariances=None)
    with pytest.raises(ConfigError):
        sample_direct(system.get_bands(surrogate_t2), surrogate_t2, 0)


if __name__ == "__main__":
    pytest.main([__file__])
