#!/usr/bin/env python3
"""
Tests for the band and covariance cache
"""

import json
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

import verify_cache
from cache_store import FORMAT_VERSION, CacheStore
from covariance_engine import build_toeplitz
from euler_model_system import EulerModelSystem
from exceptions import CacheError
from prime_bands import sieve_bands, surrogate_bands


@pytest.fixture
def store(tmp_path):
    return CacheStore(str(tmp_path / "cache"))


def test_band_table_round_trip(store, exact_t2):
    table = sieve_bands(exact_t2)
    path = store.save_band_table(table)
    assert path.exists()
    loaded = store.load_band_table(2)
    assert loaded.checksum == table.checksum
    assert loaded.sieve_limit == table.sieve_limit
    assert np.array_equal(loaded.band(2).log_freqs, table.band(2).log_freqs)
    assert store.load_band_table(3) is None


def test_surrogate_tables_are_not_cached(store, surrogate_t2):
    with pytest.raises(CacheError):
        store.save_band_table(surrogate_bands(surrogate_t2))


def test_band_checksum_mismatch(store, exact_t2):
    table = sieve_bands(exact_t2)
    path = store.save_band_table(table)
    with np.load(path, allow_pickle=False) as data:
        arrays = {name: data[name] for name in data.files if name != "header"}
    arrays["variances"] = arrays["variances"] + 0.1
    header = {"format_version": FORMAT_VERSION, "kind": "bands", "t": 2,
              "sieve_limit": table.sieve_limit, "checksum": table.checksum}
    store._write(path, header, arrays)
    with pytest.raises(CacheError, match="checksum"):
        store.load_band_table(2)


def test_format_version_and_kind(store, exact_t2):
    table = sieve_bands(exact_t2)
    path = store.save_band_table(table)
    store._write(path, {"format_version": FORMAT_VERSION + 1, "kind": "bands"}, {"counts": np.zeros(2)})
    with pytest.raises(CacheError, match="format version"):
        store.load_band_table(2)
    store._write(path, {"format_version": FORMAT_VERSION, "kind": "covariance"}, {"counts": np.zeros(2)})
    with pytest.raises(CacheError, match="expected bands"):
        store.load_band_table(2)


def test_covariance_round_trip(store, exact_t2):
    cov = build_toeplitz(sieve_bands(exact_t2), 1, 1, exact_t2)
    store.save_covariance(exact_t2, cov, sieve_checksum="abc")
    contents = store.load_covariance_values(exact_t2, 1, 1, cov.n, cov.spacing, sieve_checksum="abc")
    assert np.array_equal(contents["values"], cov.values)
    assert store.load_covariance_values(exact_t2, 1, 1, cov.n, cov.spacing, sieve_checksum="other") is None
    assert store.load_covariance_values(exact_t2, 1, 2, cov.n, cov.spacing) is None


def test_verify_script_checks_covariances(tmp_path, exact_t2, store):
    store.save_band_table(sieve_bands(exact_t2))
    cov = build_toeplitz(sieve_bands(exact_t2), 1, 1, exact_t2)
    path = store.save_covariance(exact_t2, cov)
    assert store.verify_file(path.name).endswith("lags")
    assert verify_cache.main(str(store.cache_dir))

    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        arrays = {"lags": data["lags"], "values": data["values"] * 1.01}
    store._write(path, header, arrays)
    with pytest.raises(CacheError, match="checksum"):
        store.verify_file(path.name)
    assert not verify_cache.main(str(store.cache_dir))


def test_stats_and_delete(store, exact_t2):
    path = store.save_band_table(sieve_bands(exact_t2))
    stats = store.get_cache_stats()
    assert stats["total_files"] == 1
    assert stats["band_tables"] == 1
    assert stats["total_bytes"] > 0
    assert store.delete(path.name)
    assert not store.delete(path.name)
    assert store.get_cache_stats()["total_files"] == 0


def test_system_reuses_cache(tmp_path, exact_t2):
    first = EulerModelSystem(str(tmp_path / "cache"))
    first.get_covariances(exact_t2)
    checksums = first.cache_checksums(exact_t2)
    assert checksums

    second = EulerModelSystem(str(tmp_path / "cache"))
    again = second.get_covariances(exact_t2)
    assert second.cache_checksums(exact_t2) == checksums
    assert all(cov.factor is not None for cov in again)
    assert second.get_system_stats()["cache"]["covariances"] >= 1


def test_concurrent_covariance_requests_build_once(system, exact_t2):
    calls = []
    build = system._load_or_build_covariances

    def counting_build(config):
        calls.append(config.t)
        return build(config)

    system._load_or_build_covariances = counting_build
    with ThreadPoolExecutor(max_workers=4) as pool:
        results = list(pool.map(lambda _: system.get_covariances(exact_t2), range(8)))
    assert calls == [2]
    assert all(r is results[0] for r in results)


if __name__ == "__main__":
    pytest.main([__file__])
