"""Covariance of the field on the grid.

The field is stationary in h, so a band range k..l is described by one row
of lag values; the full Toeplitz matrix is only assembled for factorizing.
"""

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Tuple

import numpy as np
from scipy import linalg
from scipy.integrate import IntegrationWarning, quad
from tqdm import tqdm

from config import settings
from exceptions import (
    BandRangeError,
    ConfigError,
    GridTooLargeError,
    NotPositiveDefiniteError,
    QuadratureError,
)
from models import (
    AsymptoticCovariance,
    BandTable,
    CovarianceRegime,
    ModelConfig,
    SamplingMode,
    ToeplitzCovariance,
)

logger = logging.getLogger(__name__)

_PRIME_CHUNK = 1 << 15
_LAG_BLOCK = 32
# eigen fallback accepts negative eigenvalues down to -_EIGEN_SLACK * values[0] * n
_EIGEN_SLACK = 1e-9


def _check_range(bands: BandTable, k: int, l: int) -> None:
    if not (1 <= k <= l <= bands.t):
        raise BandRangeError(f"band range k={k}, l={l} not inside 1..{bands.t}")


def _band_lag_partials(log_freqs: np.ndarray, half_w2: np.ndarray, lags: np.ndarray) -> np.ndarray:
    """Per-chunk partial sums, shape (chunks, lags), in ascending prime order"""
    n_chunks = max(1, math.ceil(log_freqs.size / _PRIME_CHUNK))
    out = np.zeros((n_chunks, lags.size))
    for c in range(n_chunks):
        sl = slice(c * _PRIME_CHUNK, (c + 1) * _PRIME_CHUNK)
        out[c] = np.cos(np.outer(lags, log_freqs[sl])) @ half_w2[sl]
    return out


def _exact_block(bands: BandTable, k: int, l: int, lags: np.ndarray) -> np.ndarray:
    partials = []
    for m in range(k, l + 1):
        band = bands.band(m)
        if band.prime_count:
            partials.append(_band_lag_partials(band.log_freqs, 0.5 * band.weights ** 2, lags))
    if not partials:
        return np.zeros(lags.size)
    stacked = np.vstack(partials)
    return np.array([math.fsum(stacked[:, i]) for i in range(lags.size)])


def exact_lag_values(bands: BandTable, k: int, l: int, lags: np.ndarray) -> np.ndarray:
    """covariance_exact at many lags; lag blocks run in parallel, fixed summation order"""
    _check_range(bands, k, l)
    if bands.mode != SamplingMode.EXACT_PRIME:
        raise ConfigError("exact covariance needs an exact-prime band table")
    lags = np.abs(np.asarray(lags, dtype=np.float64))
    blocks = [lags[i:i + _LAG_BLOCK] for i in range(0, lags.size, _LAG_BLOCK)]
    with ThreadPoolExecutor(max_workers=settings.worker_count) as pool:
        results = pool.map(lambda b: _exact_block(bands, k, l, b), blocks)
        if settings.show_progress and len(blocks) > 1:
            results = tqdm(results, total=len(blocks), desc=f"cov {k}..{l}", unit="blk")
        values = list(results)
    return np.concatenate(values) if values else np.empty(0)


def covariance_exact(bands: BandTable, k: int, l: int, delta_h: float) -> float:
    """Sum over bands k..l and their primes of cos(delta_h log p) / (2p)"""
    return float(exact_lag_values(bands, k, l, np.array([delta_h]))[0])


def covariance_asymptotic(k: int, l: int, delta_h: float) -> AsymptoticCovariance:
    if k > l:
        raise BandRangeError(f"need k <= l, got k={k}, l={l}")
    gap = abs(delta_h)
    if gap < math.exp(-l):
        return AsymptoticCovariance(regime=CovarianceRegime.NEAR, value=0.5 * (l - k))
    if gap > math.exp(-k):
        return AsymptoticCovariance(regime=CovarianceRegime.FAR, value=math.exp(-k) / gap)
    return AsymptoticCovariance(regime=CovarianceRegime.MIDDLE, value=None)


def _inverse(u: float) -> float:
    return 1.0 / u


def _band_cosine_integral(m: int, frequency: float, tol: float) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        value, abserr = quad(_inverse, math.exp(m - 1), math.exp(m), weight="cos",
                             wvar=frequency, epsabs=tol, epsrel=0.0, limit=500)
    if abserr > 10.0 * tol:
        raise QuadratureError(
            f"cosine integral over band {m} at frequency {frequency} missed tolerance {tol} (error {abserr:.2e})"
        )
    return value


def covariance_surrogate(k: int, l: int, delta_h: float, tol: Optional[float] = None) -> float:
    """Half the integral of cos(delta_h u)/u over e^(m-1)..e^m, summed over m = k..l"""
    if k > l:
        raise BandRangeError(f"need k <= l, got k={k}, l={l}")
    if delta_h == 0:
        # each band integrates du/u to exactly 1
        return 0.5 * (l - k + 1)
    tol = tol or settings.surrogate_quad_tol
    frequency = abs(delta_h)
    return 0.5 * math.fsum(_band_cosine_integral(m, frequency, tol) for m in range(k, l + 1))


def surrogate_lag_values(k: int, l: int, lags: np.ndarray) -> np.ndarray:
    lags = np.asarray(lags, dtype=np.float64)
    iterator = lags
    if settings.show_progress and lags.size > 64:
        iterator = tqdm(lags, desc=f"surrogate cov {k}..{l}", unit="lag")
    return np.array([covariance_surrogate(k, l, float(d)) for d in iterator])


def factorize_toeplitz(values: np.ndarray, prime_count: Optional[int] = None) -> Tuple[np.ndarray, str, float, Optional[float]]:
    """Factor F with F F^T = toeplitz(values).

    Returns (factor, kind, jitter, min_eigenvalue). Cholesky first, then one
    retry with diagonal jitter, then a clipped eigendecomposition. Bands with
    fewer than n/2 primes have rank below n and go straight to the eigen path.
    """
    n = values.size
    matrix = linalg.toeplitz(values)
    rank_deficient = prime_count is not None and 2 * prime_count < n

    if not rank_deficient:
        try:
            return linalg.cholesky(matrix, lower=True), "cholesky", 0.0, None
        except linalg.LinAlgError:
            jitter = settings.jitter_scale * float(values[0])
            logger.warning(f"Cholesky failed for n={n}; retrying with jitter {jitter:.3e}")
            try:
                factor = linalg.cholesky(matrix + jitter * np.eye(n), lower=True)
                return factor, "cholesky+jitter", jitter, None
            except linalg.LinAlgError:
                logger.warning("Cholesky failed after jitter; using eigendecomposition")

    eigvals, eigvecs = linalg.eigh(matrix)
    min_eig = float(eigvals.min())
    floor = -_EIGEN_SLACK * float(values[0]) * n
    if min_eig < floor:
        raise NotPositiveDefiniteError(
            f"Toeplitz covariance (n={n}) is not positive semidefinite: min eigenvalue {min_eig:.3e}",
            min_eig,
        )
    factor = eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))
    return factor, "eigen", 0.0, min_eig


def toeplitz_on_lags(bands: BandTable, k: int, l: int, spacing: float, n: int) -> ToeplitzCovariance:
    """Toeplitz covariance of S_{k,l} on n points spaced by ``spacing``"""
    _check_range(bands, k, l)
    if n > settings.max_dense_grid:
        raise GridTooLargeError(
            f"grid of {n} points exceeds max_dense_grid={settings.max_dense_grid}"
        )
    lags = np.arange(n, dtype=np.float64) * spacing
    if bands.mode == SamplingMode.EXACT_PRIME:
        values = exact_lag_values(bands, k, l, lags)
    else:
        values = surrogate_lag_values(k, l, lags)
    return covariance_from_values(bands, k, l, spacing, values)


def covariance_from_values(bands: BandTable, k: int, l: int, spacing: float, values: np.ndarray) -> ToeplitzCovariance:
    """Factorize precomputed lag values, e.g. read back from the cache"""
    _check_range(bands, k, l)
    n = values.size
    lags = np.arange(n, dtype=np.float64) * spacing
    prime_count = None
    if bands.mode == SamplingMode.EXACT_PRIME:
        prime_count = sum(bands.band(m).prime_count for m in range(k, l + 1))
    factor, kind, jitter, min_eig = factorize_toeplitz(values, prime_count)
    logger.debug(f"Toeplitz {k}..{l}: n={n}, variance={values[0]:.9f}, factor={kind}")
    return ToeplitzCovariance(
        k=k,
        l=l,
        spacing=spacing,
        lags=lags,
        values=values,
        factor=factor,
        factor_kind=kind,
        jitter=jitter,
        min_eigenvalue=min_eig,
        approximate=bands.approximate,
    )


def build_toeplitz(bands: BandTable, k: int, l: int, config: ModelConfig) -> ToeplitzCovariance:
    return toeplitz_on_lags(bands, k, l, config.spacing, config.n_points)


def toeplitz_matrix(cov: ToeplitzCovariance) -> np.ndarray:
    return linalg.toeplitz(cov.values)


def factor_residual(cov: ToeplitzCovariance) -> float:
    """Relative Frobenius error of F F^T against the Toeplitz matrix"""
    matrix = toeplitz_matrix(cov)
    norm = np.linalg.norm(matrix)
    if norm == 0:
        return 0.0
    return float(np.linalg.norm(cov.factor @ cov.factor.T - matrix) / norm)
