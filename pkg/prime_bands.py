"""Prime sieve and multiscale bands.

Band m holds the primes with e^(m-1) < log p <= e^m, stored as
(log p, p^-1/2) pairs. The prime 2 has log 2 < 1 and sits in no band.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence

import numpy as np
from tqdm import tqdm

from config import settings
from exceptions import ConfigError, DomainError, LimitExceededError, SieveOverflowError
from models import Band, BandTable, ModelConfig, SamplingMode

logger = logging.getLogger(__name__)

SURROGATE_BAND_VARIANCE = 0.5


def _small_primes(limit: int) -> np.ndarray:
    sieve = np.ones(limit + 1, dtype=bool)
    sieve[:2] = False
    sieve[4::2] = False
    for i in range(3, math.isqrt(limit) + 1, 2):
        if sieve[i]:
            sieve[i * i::2 * i] = False
    return np.flatnonzero(sieve)


def _sieve_segment(lo_idx: int, hi_idx: int, base: Sequence[int]) -> np.ndarray:
    """Odd primes 2i+1 for lo_idx <= i < hi_idx"""
    segment = np.ones(hi_idx - lo_idx, dtype=bool)
    if lo_idx == 0:
        segment[0] = False  # 1 is not prime
    low = 2 * lo_idx + 1
    high = 2 * (hi_idx - 1) + 1
    for q in base:
        if q * q > high:
            break
        start = max(q * q, ((low + q - 1) // q) * q)
        if start % 2 == 0:
            start += q
        segment[(start - 1) // 2 - lo_idx::q] = False
    return 2 * (lo_idx + np.flatnonzero(segment).astype(np.int64)) + 1


def primes_up_to(limit: int, segment_odds: Optional[int] = None) -> np.ndarray:
    """All primes <= limit, ascending, as int64"""
    if limit > np.iinfo(np.int64).max:
        raise SieveOverflowError(f"sieve limit {limit} exceeds the 64-bit integer range")
    if limit < 2:
        return np.empty(0, dtype=np.int64)

    segment_odds = segment_odds or settings.sieve_segment_odds
    base = [int(q) for q in _small_primes(math.isqrt(limit))[1:]]
    n_odd = (limit + 1) // 2
    bounds = [(lo, min(lo + segment_odds, n_odd)) for lo in range(0, n_odd, segment_odds)]

    with ThreadPoolExecutor(max_workers=settings.worker_count) as pool:
        chunks = pool.map(lambda b: _sieve_segment(b[0], b[1], base), bounds)
        if settings.show_progress and len(bounds) > 1:
            chunks = tqdm(chunks, total=len(bounds), desc="sieve", unit="seg")
        parts: List[np.ndarray] = [np.array([2], dtype=np.int64)]
        parts.extend(chunks)
    return np.concatenate(parts)


def sieve_limit(t: int) -> int:
    """floor(e^(e^t)), the largest integer with log n <= e^t"""
    exponent = math.exp(t)
    if exponent >= math.log(np.iinfo(np.int64).max):
        raise SieveOverflowError(f"e^(e^{t}) exceeds the 64-bit integer range")
    return int(math.floor(math.exp(exponent)))


def bands_from_primes(primes: np.ndarray, t: int, limit: int) -> BandTable:
    """Partition ascending primes into bands 1..t"""
    logs = np.log(primes.astype(np.float64))
    weights = 1.0 / np.sqrt(primes.astype(np.float64))
    edges = np.exp(np.arange(t + 1, dtype=np.float64))

    bands = []
    for m in range(1, t + 1):
        start = int(np.searchsorted(logs, edges[m - 1], side="right"))
        stop = int(np.searchsorted(logs, edges[m], side="right"))
        w = weights[start:stop].copy()
        bands.append(Band(
            index=m,
            log_freqs=logs[start:stop].copy(),
            weights=w,
            variance=0.5 * math.fsum(w * w),
        ))
        logger.debug(f"band {m}: {stop - start} primes, variance {bands[-1].variance:.9f}")
    return BandTable(t=t, mode=SamplingMode.EXACT_PRIME, sieve_limit=limit, approximate=False, bands=bands)


def sieve_bands(config: ModelConfig, cap: Optional[int] = None) -> BandTable:
    """Sieve every prime with log p <= e^t and split it into bands"""
    if config.mode != SamplingMode.EXACT_PRIME:
        raise ConfigError(f"sieve_bands needs mode=exact-prime, got {config.mode.value}")
    cap = config.exact_mode_cap if cap is None else cap
    if config.t > cap:
        raise LimitExceededError(f"t={config.t} exceeds exact_mode_cap={cap}")

    limit = sieve_limit(config.t)
    logger.info(f"Sieving primes up to {limit} for t={config.t}")
    primes = primes_up_to(limit)
    table = bands_from_primes(primes, config.t, limit)
    logger.info(f"Sieved {primes.size} primes into {config.t} bands")
    return table


def surrogate_bands(config: ModelConfig) -> BandTable:
    """Prime-free bands of variance exactly 1/2, flagged approximate"""
    if config.mode != SamplingMode.SURROGATE:
        raise ConfigError(f"surrogate_bands needs mode=surrogate, got {config.mode.value}")
    empty = np.empty(0, dtype=np.float64)
    bands = [Band(index=m, log_freqs=empty, weights=empty, variance=SURROGATE_BAND_VARIANCE)
             for m in range(1, config.t + 1)]
    return BandTable(t=config.t, mode=SamplingMode.SURROGATE, sieve_limit=0, approximate=True, bands=bands)


def mertens_check(x: float, primes: Optional[np.ndarray] = None) -> float:
    """Sum of 1/p over p <= x minus log log x.

    ``primes`` may carry a presieved ascending array reaching at least x.
    """
    if x < 3:
        raise DomainError(f"mertens_check needs x >= 3, got {x}")
    if primes is None:
        primes = primes_up_to(int(math.floor(x)))
    stop = int(np.searchsorted(primes, x, side="right"))
    return math.fsum(1.0 / primes[:stop].astype(np.float64)) - math.log(math.log(x))


def mertens_curve(xs: Sequence[float]) -> List[float]:
    """Residuals at several x from a single sieve"""
    primes = primes_up_to(int(math.floor(max(xs))))
    return [mertens_check(x, primes) for x in xs]
