"""Statistical utilities shared by the experiments.

Random streams are keyed by (master seed, purpose tag, index) through a
counter-based Philox generator, so any two consumers draw from disjoint
streams no matter which thread or in which order they run.
"""

import hashlib
import logging
import math
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.special import logsumexp
from scipy.stats import norm

from config import settings
from exceptions import DomainError, InsufficientHitsError, RankDeficiencyError
from models import CIEstimate, CIMethod

logger = logging.getLogger(__name__)

# Bound on resampled values held in memory at once
_BOOTSTRAP_CELLS = 10_000_000


def _tag_key(tag: str) -> int:
    return int.from_bytes(hashlib.sha256(tag.encode("utf-8")).digest()[:8], "little")


def rng_stream(seed: int, tag: str, index: int = 0) -> np.random.Generator:
    """Independent generator for one (seed, tag, index) key"""
    if seed < 0 or index < 0:
        raise DomainError(f"seed and index must be nonnegative, got seed={seed}, index={index}")
    sequence = np.random.SeedSequence([seed, _tag_key(tag), index])
    return np.random.Generator(np.random.Philox(sequence))


def binomial_stderr(hits: int, n: int) -> float:
    p = hits / n
    return math.sqrt(p * (1.0 - p) / n)


def wilson_interval(hits: int, n: int, level: float = 0.95) -> CIEstimate:
    """Wilson score interval for a binomial proportion"""
    if n < 1 or hits < 0 or hits > n:
        raise DomainError(f"need 0 <= hits <= n and n >= 1, got hits={hits}, n={n}")
    if not 0.0 < level < 1.0:
        raise DomainError(f"level must lie in (0, 1), got {level}")

    z = float(norm.ppf(0.5 + level / 2.0))
    p = hits / n
    z2n = z * z / n
    denom = 1.0 + z2n
    center = (p + z2n / 2.0) / denom
    half = z * math.sqrt(p * (1.0 - p) / n + z2n / (4.0 * n)) / denom

    lo = 0.0 if hits == 0 else max(0.0, center - half)
    hi = 1.0 if hits == n else min(1.0, center + half)
    return CIEstimate(
        point=p,
        lo=min(lo, p),
        hi=max(hi, p),
        level=level,
        method=CIMethod.WILSON,
        stderr=binomial_stderr(hits, n),
    )


def _resample_chunks(rng: np.random.Generator, size: int, n_resamples: int, width: int = 1):
    rows = max(1, _BOOTSTRAP_CELLS // max(size * width, 1))
    done = 0
    while done < n_resamples:
        count = min(rows, n_resamples - done)
        yield rng.integers(0, size, size=(count, size))
        done += count


def _percentile_estimate(point: float, stats: np.ndarray, level: float, excluded: int = 0) -> CIEstimate:
    stats = stats[np.isfinite(stats)]
    if stats.size == 0:
        raise InsufficientHitsError("no bootstrap resample gave a finite statistic")
    lo, hi = np.quantile(stats, [0.5 - level / 2.0, 0.5 + level / 2.0])
    # percentile intervals of skewed statistics can miss the point estimate
    return CIEstimate(
        point=point,
        lo=min(float(lo), point),
        hi=max(float(hi), point),
        level=level,
        method=CIMethod.BOOTSTRAP,
        stderr=float(np.std(stats, ddof=1)) if stats.size > 1 else 0.0,
        excluded=excluded,
    )


def bootstrap_ratio(samples_a: np.ndarray, samples_b: np.ndarray, n_resamples: Optional[int] = None,
                    seed: int = 0, level: float = 0.95) -> CIEstimate:
    """Percentile bootstrap of mean(a) / mean(b).

    Equal-length inputs are treated as paired observations of the same
    samples and resampled with shared indices; otherwise a and b are
    resampled independently. Resamples with a zero denominator are dropped
    and counted in ``excluded``.
    """
    a = np.asarray(samples_a, dtype=np.float64)
    b = np.asarray(samples_b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise DomainError("bootstrap_ratio needs nonempty inputs")
    n_resamples = n_resamples or settings.bootstrap_resamples

    mean_b = float(b.mean())
    if mean_b == 0.0:
        raise DomainError("mean of the denominator sample is zero")
    point = float(a.mean()) / mean_b

    rng = rng_stream(seed, "bootstrap-ratio")
    num_parts, den_parts = [], []
    if a.size == b.size:
        for idx in _resample_chunks(rng, a.size, n_resamples):
            num_parts.append(a[idx].mean(axis=1))
            den_parts.append(b[idx].mean(axis=1))
    else:
        for idx in _resample_chunks(rng, a.size, n_resamples):
            num_parts.append(a[idx].mean(axis=1))
        for idx in _resample_chunks(rng, b.size, n_resamples):
            den_parts.append(b[idx].mean(axis=1))
    num = np.concatenate(num_parts)
    den = np.concatenate(den_parts)

    keep = den != 0.0
    excluded = int(np.count_nonzero(~keep))
    if excluded:
        logger.warning(f"bootstrap_ratio: {excluded} of {n_resamples} resamples had a zero denominator")
    if not keep.any():
        raise InsufficientHitsError("every bootstrap resample had a zero denominator")
    return _percentile_estimate(point, num[keep] / den[keep], level, excluded)


def bootstrap_ci(samples: np.ndarray, n_resamples: Optional[int] = None, seed: int = 0,
                 level: float = 0.95,
                 statistic: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                 tag: str = "bootstrap") -> CIEstimate:
    """Percentile bootstrap of a statistic; ``statistic`` maps (rows, size) to (rows,).

    A 2-D ``samples`` is resampled by row, so the statistic sees (rows, size, columns).
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        raise DomainError("bootstrap_ci needs a nonempty sample")
    n_resamples = n_resamples or settings.bootstrap_resamples
    if statistic is None:
        statistic = lambda rows: rows.mean(axis=1)

    point = float(statistic(x[np.newaxis, :])[0])
    rng = rng_stream(seed, tag)
    stats = np.concatenate([statistic(x[idx]) for idx in _resample_chunks(rng, x.shape[0], n_resamples, x[0].size)])
    return _percentile_estimate(point, stats, level)


def quantile_statistic(q: float) -> Callable[[np.ndarray], np.ndarray]:
    return lambda rows: np.quantile(rows, q, axis=1)


def _wls(x: np.ndarray, y: np.ndarray, w: np.ndarray) -> Tuple[float, float, float]:
    if x.shape != y.shape or x.shape != w.shape:
        raise DomainError("x, log_p and weights must have the same length")
    if x.size < 3:
        raise DomainError(f"need at least 3 points for a slope fit, got {x.size}")
    if np.any(~(w > 0)):
        raise DomainError("weights must be positive")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise DomainError("x and log_p must be finite")

    total = math.fsum(w)
    xm = math.fsum(w * x) / total
    ym = math.fsum(w * y) / total
    dx = x - xm
    sxx = math.fsum(w * dx * dx)
    if sxx <= np.finfo(np.float64).eps * max(1.0, math.fsum(w * x * x)):
        raise RankDeficiencyError("all x values coincide; slope is undetermined")

    slope = math.fsum(w * dx * (y - ym)) / sxx
    intercept = ym - slope * xm
    resid = y - (intercept + slope * x)
    s2 = math.fsum(w * resid * resid) / (x.size - 2)
    return slope, intercept, math.sqrt(s2 / sxx)


def wls_slope(x: np.ndarray, log_p: np.ndarray, weights: np.ndarray) -> Tuple[float, float]:
    """Weighted least-squares slope and its standard error"""
    slope, _, stderr = _wls(np.asarray(x, dtype=np.float64),
                            np.asarray(log_p, dtype=np.float64),
                            np.asarray(weights, dtype=np.float64))
    return slope, stderr


def wls_line(x: np.ndarray, log_p: np.ndarray, weights: np.ndarray) -> Tuple[float, float, float]:
    """(slope, intercept, slope stderr)"""
    return _wls(np.asarray(x, dtype=np.float64),
                np.asarray(log_p, dtype=np.float64),
                np.asarray(weights, dtype=np.float64))


def log_mean_exp(values: np.ndarray) -> float:
    values = np.asarray(values, dtype=np.float64)
    return float(logsumexp(values) - math.log(values.size))


def log_weighted_sum(log_values: np.ndarray, weights: np.ndarray, axis: int = -1) -> np.ndarray:
    """log of sum(weights * exp(log_values)) without overflow"""
    return logsumexp(log_values, b=weights, axis=axis)
