"""Realizations of the field on the grid.

Two samplers share one seeding scheme: the Gaussians of sample i come from
the stream (seed, tag, i), so a sample does not depend on which thread drew
it or on how many samples were drawn before it.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterator, List, Optional, Sequence, Tuple, TypeVar

import numpy as np
from tqdm import tqdm

from config import settings
from exceptions import ConfigError, FactorizationMissingError
from models import BandTable, FieldSample, ModelConfig, SamplerKind, SamplingMode, ToeplitzCovariance
from stats_core import rng_stream

logger = logging.getLogger(__name__)

R = TypeVar("R")

_PRIME_CHUNK = 1 << 14
DIRECT_TAG = "direct"
TOEPLITZ_TAG = "toeplitz"


def grid(config: ModelConfig) -> np.ndarray:
    """{j * spacing : |j * spacing| <= half_width}, ascending and symmetric"""
    j = config.j_max
    return np.arange(-j, j + 1, dtype=np.float64) * config.spacing


def _direct_increments(bands: BandTable, points: np.ndarray, rng: np.random.Generator,
                       zero_gaussians: bool = False) -> np.ndarray:
    increments = np.zeros((bands.t, points.size))
    for band in bands.bands:
        # Re and Im parts of G_p, each with variance 1/2
        x = rng.normal(0.0, np.sqrt(0.5), size=band.prime_count)
        y = rng.normal(0.0, np.sqrt(0.5), size=band.prime_count)
        if zero_gaussians:
            x[:] = 0.0
            y[:] = 0.0
        xw = x * band.weights
        yw = y * band.weights
        row = increments[band.index - 1]
        for start in range(0, band.prime_count, _PRIME_CHUNK):
            sl = slice(start, start + _PRIME_CHUNK)
            phase = np.outer(points, band.log_freqs[sl])
            row += np.cos(phase) @ xw[sl] + np.sin(phase) @ yw[sl]
    return increments


def sample_direct(bands: BandTable, config: ModelConfig, sample_index: int,
                  zero_gaussians: bool = False, points: Optional[np.ndarray] = None) -> FieldSample:
    """Y_m(h) = sum over band m of (X_p cos(h log p) + Y_p sin(h log p)) / sqrt(p)"""
    if bands.mode != SamplingMode.EXACT_PRIME:
        raise ConfigError("sample_direct needs an exact-prime band table")
    points = grid(config) if points is None else points
    rng = rng_stream(config.seed, DIRECT_TAG, sample_index)
    return FieldSample(
        increments=_direct_increments(bands, points, rng, zero_gaussians),
        points=points,
        sample_id=sample_index,
        seed_path=(config.seed, sample_index),
    )


def _check_covariances(covariances: Sequence[ToeplitzCovariance], t: int) -> None:
    if len(covariances) != t:
        raise ConfigError(f"need one covariance per band (t={t}), got {len(covariances)}")
    for m, cov in enumerate(covariances, start=1):
        if cov.factor is None:
            raise FactorizationMissingError(f"covariance for band {m} carries no factor")
        if cov.k != m or cov.l != m:
            raise ConfigError(f"covariance {m} covers bands {cov.k}..{cov.l}, expected {m}..{m}")


def _toeplitz_normals(seed: int, sample_index: int, t: int, n: int) -> np.ndarray:
    return rng_stream(seed, TOEPLITZ_TAG, sample_index).standard_normal((t, n))


def sample_toeplitz(cov_by_band: Sequence[ToeplitzCovariance], config: ModelConfig, sample_index: int,
                    points: Optional[np.ndarray] = None) -> FieldSample:
    """Band increments F_m z_m with independent standard normal z_m"""
    _check_covariances(cov_by_band, config.t)
    n = cov_by_band[0].n
    points = grid(config) if points is None else points
    z = _toeplitz_normals(config.seed, sample_index, config.t, n)
    increments = np.stack([cov.factor @ z[m] for m, cov in enumerate(cov_by_band)])
    return FieldSample(
        increments=increments,
        points=points,
        sample_id=sample_index,
        seed_path=(config.seed, sample_index),
    )


class FieldSampler:
    """Batched, threaded sampling with a fixed index partition.

    Batches are the index ranges [b * batch_size, (b + 1) * batch_size), so a
    given sample is always produced by the same batch computation and results
    are bit-identical for any thread count.
    """

    def __init__(self, config: ModelConfig, covariances: Optional[Sequence[ToeplitzCovariance]] = None,
                 bands: Optional[BandTable] = None, kind: SamplerKind = SamplerKind.TOEPLITZ,
                 points: Optional[np.ndarray] = None, batch_size: Optional[int] = None,
                 threads: Optional[int] = None):
        self.config = config
        self.kind = kind
        self.batch_size = batch_size or settings.batch_size
        self.threads = threads or settings.worker_count

        if kind == SamplerKind.TOEPLITZ:
            if covariances is None:
                raise ConfigError("Toeplitz sampling needs per-band covariances")
            _check_covariances(covariances, config.t)
            self.covariances = list(covariances)
            self.factors = [cov.factor for cov in self.covariances]
            self.n_points = self.covariances[0].n
        else:
            if bands is None:
                raise ConfigError("direct sampling needs a band table")
            self.bands = bands
        self.points = grid(config) if points is None else points
        if kind == SamplerKind.DIRECT:
            self.n_points = self.points.size

    def batch_bounds(self, n: int) -> List[Tuple[int, int]]:
        return [(start, min(start + self.batch_size, n)) for start in range(0, n, self.batch_size)]

    def sample_batch(self, start: int, stop: int) -> np.ndarray:
        """Increments of samples start..stop-1, shape (batch, t, n)"""
        t = self.config.t
        if self.kind == SamplerKind.DIRECT:
            return np.stack([
                _direct_increments(self.bands, self.points, rng_stream(self.config.seed, DIRECT_TAG, i))
                for i in range(start, stop)
            ])
        z = np.stack([_toeplitz_normals(self.config.seed, i, t, self.n_points) for i in range(start, stop)])
        out = np.empty_like(z)
        for m, factor in enumerate(self.factors):
            out[:, m, :] = (factor @ z[:, m, :].T).T
        return out

    def map_batches(self, fn: Callable[[np.ndarray, int], R], n: int, desc: str = "sampling") -> List[R]:
        """Apply fn(increments, start) to every batch; results come back in index order"""
        bounds = self.batch_bounds(n)

        def run(bound: Tuple[int, int]) -> R:
            return fn(self.sample_batch(*bound), bound[0])

        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            results = pool.map(run, bounds)
            if settings.show_progress:
                results = tqdm(results, total=len(bounds), desc=desc, unit="batch")
            return list(results)

    def iter_samples(self, n: int) -> Iterator[FieldSample]:
        for lo, hi in self.batch_bounds(n):
            batch = self.sample_batch(lo, hi)
            for offset, increments in enumerate(batch):
                index = lo + offset
                yield FieldSample(
                    increments=increments,
                    points=self.points,
                    sample_id=index,
                    seed_path=(self.config.seed, index),
                )
